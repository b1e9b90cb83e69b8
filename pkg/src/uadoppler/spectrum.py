"""Quality assessment of pulsed-Doppler spectrum crops.

Pipeline: colored overlays are found by their channel spread and filled
with a biharmonic inpaint; the baseline is found with a near-horizontal
Hough search; the spectrum is segmented with a random walker; the upper
envelope is split into waveforms at its valleys; each waveform gets a
clarity class from its mean intensity and a height as a percentage of the
positive velocity axis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi
from scipy import sparse
from skimage.morphology import disk

from . import imaging
from .errors import AxisNotFound, EmptyWaveform, NoBoundary, NoSeeds
from .solvers import conjugate_gradient

CLARITY_OK = ("good", "moderate")


@dataclass
class SpectrumConfig:
    overlay_std: float = 12.0 / 255.0
    overlay_dilation: int = 2
    beta: float = 130.0
    weight_eps: float = 1e-10
    bg_top_fraction: float = 0.10
    bg_top_max: float = 0.08
    bg_border_max: float = 0.05
    fg_min: float = 0.2
    solver_tol: float = 1e-6
    axis_tilt_deg: float = 2.0
    axis_min_intensity: float = 0.5
    axis_edge_contrast: float = 0.25
    axis_vote_fraction: float = 0.3
    smooth_sigma: float = 8.0
    min_distance: int = 70
    good_threshold: float = 0.56
    poor_threshold: float = 0.36
    foreground_only: bool = True
    sweep_min: int = 3
    sweep_max: int = 10
    range_pct: float = 75.0
    clarity_run: int = 3


@dataclass
class Envelope:
    top_y: np.ndarray
    axis_y: int
    velocity: np.ndarray


@dataclass
class Waveform:
    start_col: int
    peak_col: int
    end_col: int
    mean_intensity: float
    clarity: str
    height_pct: float

    def to_dict(self):
        return {
            "start_col": int(self.start_col),
            "peak_col": int(self.peak_col),
            "end_col": int(self.end_col),
            "mean_intensity": float(self.mean_intensity),
            "clarity": self.clarity,
            "height_pct": float(self.height_pct),
        }


@dataclass
class QaVerdict:
    n_waveforms: int
    clarity_pass: bool
    sweep_pass: bool
    range_pass: bool
    waveforms: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_waveforms": int(self.n_waveforms),
            "clarity_pass": bool(self.clarity_pass),
            "sweep_pass": bool(self.sweep_pass),
            "range_pass": bool(self.range_pass),
            "waveforms": [w.to_dict() for w in self.waveforms],
        }


@dataclass
class SpectrumAnalysis:
    gray: np.ndarray
    overlay_mask: np.ndarray
    mask: np.ndarray
    axis_y: int
    envelope: Envelope
    peaks: np.ndarray
    valleys: np.ndarray
    verdict: QaVerdict


# --- confounder removal -----------------------------------------------------

def detect_overlays(raster, std_threshold=12.0 / 255.0, dilation=2):
    """Pixels whose RGB channels disagree (colored annotations), dilated."""
    rgb = imaging.as_rgb(raster).astype(float) / 255.0
    mask = rgb.std(axis=2) > std_threshold
    if dilation > 0 and mask.any():
        mask = ndi.binary_dilation(mask, structure=disk(dilation))
    return mask


def _grid_laplacian(shape):
    """Graph Laplacian (degree minus adjacency) of the 4-connected grid."""
    h, w = shape
    idx = np.arange(h * w).reshape(h, w)
    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    ones = np.ones(i.size)
    adj = sparse.coo_matrix((np.r_[ones, ones], (np.r_[i, j], np.r_[j, i])), shape=(h * w,) * 2)
    adj = adj.tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return sparse.diags(deg) - adj


def inpaint_biharmonic(gray, hole, tol=1e-6):
    """Fill ``hole`` so the result is discretely biharmonic there.

    Hole values minimize the squared grid Laplacian over the pixels that see
    the hole. The normal equations are the 13-point bilaplacian at interior
    hole pixels; at the image border the Laplacian uses only in-image
    neighbours. Pixels outside the hole are returned unchanged.
    """
    gray = np.asarray(gray, dtype=float)
    hole = np.asarray(hole, dtype=bool)
    if hole.shape != gray.shape:
        raise ValueError("hole and image must share dimensions")
    out = gray.copy()
    if not hole.any():
        return out
    if hole.all():
        raise NoBoundary("hole covers the whole image")

    cross = ndi.generate_binary_structure(2, 1)
    rows_q = ndi.binary_dilation(hole, structure=cross)
    support = ndi.binary_dilation(rows_q, structure=cross)
    ys, xs = np.nonzero(support)
    # every Laplacian row used below has its full neighbourhood inside this window
    win = (slice(ys.min(), ys.max() + 1), slice(xs.min(), xs.max() + 1))
    lap = _grid_laplacian(hole[win].shape).tocsr()

    q = rows_q[win].ravel()
    h_mask = hole[win].ravel()
    k_mask = ~h_mask
    lap_q = lap[q]
    l_qh = lap_q[:, h_mask]
    l_qk = lap_q[:, k_mask]
    u_k = gray[win].ravel()[k_mask]

    a = (l_qh.T @ l_qh).tocsr()
    b = -(l_qh.T @ (l_qk @ u_k))
    ring = ndi.binary_dilation(hole, structure=cross) & ~hole
    x0_val = np.full(int(h_mask.sum()), gray[ring].mean())
    x, _ = conjugate_gradient(a, b, x0=x0_val, tol=tol)
    sub = out[win].copy()
    sub.ravel()[h_mask] = x
    out[win] = sub
    return out


# --- segmentation -----------------------------------------------------------

def seed_policy(gray, axis_y, cfg=None):
    """Foreground / background seed masks for the random walker."""
    cfg = cfg or SpectrumConfig()
    h, w = gray.shape
    rows = np.arange(h)[:, None]
    top = rows < int(np.ceil(cfg.bg_top_fraction * h))
    border = np.zeros((h, w), dtype=bool)
    border[[0, -1], :] = True
    border[:, [0, -1]] = True
    bg = (top & (gray < cfg.bg_top_max)) | (border & (gray < cfg.bg_border_max))
    fg = (gray > cfg.fg_min) & (rows < axis_y)
    return fg, bg & ~fg


def _walker_system(gray, seeded, beta, eps):
    h, w = gray.shape
    idx = np.arange(h * w).reshape(h, w)
    g = gray.ravel()
    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    wts = np.exp(-beta * (g[i] - g[j]) ** 2) + eps
    adj = sparse.coo_matrix((np.r_[wts, wts], (np.r_[i, j], np.r_[j, i])), shape=(h * w,) * 2)
    adj = adj.tocsr()
    lap = (sparse.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj).tocsr()
    unseeded = ~seeded.ravel()
    lap_u = lap[unseeded]
    return lap_u[:, unseeded].tocsr(), lap_u[:, ~unseeded].tocsr(), unseeded


def random_walker_probabilities(gray, fg_seeds, bg_seeds, beta=130.0, tol=1e-6,
                                eps=1e-10, both=True):
    """Probability that a walker from each pixel reaches a foreground seed first.

    Solves the Dirichlet problem on the 4-connected pixel graph with edge
    weights ``exp(-beta * (g_i - g_j)**2) + eps``. With ``both`` the
    background system is solved independently as well, so the two returned
    maps sum to one only up to solver tolerance.
    """
    gray = np.asarray(gray, dtype=float)
    fg = np.asarray(fg_seeds, dtype=bool)
    bg = np.asarray(bg_seeds, dtype=bool) & ~fg
    seeded = fg | bg
    p_fg = fg.astype(float)
    p_bg = bg.astype(float)
    if seeded.all():
        return (p_fg, p_bg) if both else p_fg
    if not fg.any() or not bg.any():
        raise NoSeeds("need at least one foreground and one background seed")

    l_uu, l_us, unseeded = _walker_system(gray, seeded, beta, eps)
    # warm start: classify by the midpoint of the two seed classes' mean levels
    level = 0.5 * (gray[fg].mean() + gray[bg].mean())
    guess = (gray.ravel()[unseeded] > level) == (gray[fg].mean() > gray[bg].mean())
    seeds_fg = fg.ravel()[~unseeded].astype(float)
    x_fg, _ = conjugate_gradient(l_uu, -(l_us @ seeds_fg), x0=guess.astype(float), tol=tol)
    p_fg.ravel()[unseeded] = x_fg
    if not both:
        return p_fg
    seeds_bg = bg.ravel()[~unseeded].astype(float)
    x_bg, _ = conjugate_gradient(l_uu, -(l_us @ seeds_bg), x0=(~guess).astype(float), tol=tol)
    p_bg.ravel()[unseeded] = x_bg
    return p_fg, p_bg


def segment_spectrum(gray, beta=130.0, seeds=None, axis_y=None, config=None):
    """Random-walker foreground mask.

    ``seeds`` is an ``(fg, bg)`` pair of masks; when omitted the default seed
    policy is applied, which needs ``axis_y``.
    """
    cfg = config or SpectrumConfig()
    gray = np.asarray(gray, dtype=float)
    if seeds is None:
        if axis_y is None:
            raise ValueError("axis_y is required by the default seed policy")
        seeds = seed_policy(gray, axis_y, cfg)
    fg, bg = seeds
    if fg.all():
        return np.ones(gray.shape, dtype=bool)
    p_fg = random_walker_probabilities(gray, fg, bg, beta, tol=cfg.solver_tol,
                                       eps=cfg.weight_eps, both=False)
    return p_fg > 0.5


# --- baseline and cleanup ---------------------------------------------------

def detect_x_axis(gray, config=None):
    """Row of the spectrum baseline.

    Pixels vote when they are bright and clearly brighter than both pixels
    directly below them, which singles out the lower edge of the filled
    spectrum (a thick baseline votes with its bottom row).
    """
    cfg = config or SpectrumConfig()
    gray = np.asarray(gray, dtype=float)
    h, w = gray.shape
    below = np.zeros_like(gray)
    below[:-1] = gray[1:]
    below[:-2] = np.maximum(below[:-2], gray[2:])
    votes = (gray >= cfg.axis_min_intensity) & (gray - below >= cfg.axis_edge_contrast)
    tilt = np.deg2rad(cfg.axis_tilt_deg)
    lines = imaging.hough_lines(
        votes, min_votes=max(1, int(np.ceil(cfg.axis_vote_fraction * w))),
        theta_range=(np.pi / 2 - tilt, np.pi / 2 + tilt),
    )
    if not lines:
        raise AxisNotFound("no near-horizontal baseline found")
    best = lines[0]
    xc = (w - 1) / 2.0
    row = (best.rho - xc * np.cos(best.theta)) / np.sin(best.theta)
    return int(np.clip(np.rint(row), 0, h - 1))


def clean_with_axis(mask, axis_y):
    """Clear everything below the baseline and fill enclosed holes above it."""
    mask = np.array(mask, dtype=bool)
    h, _ = mask.shape
    if not 0 <= axis_y < h:
        raise ValueError("axis_y outside the image")
    mask[axis_y + 1:] = False
    labels, n = imaging.label_components(~mask, connectivity=1)
    if n == 0:
        return mask
    touches = np.zeros(n + 1, dtype=bool)
    for edge in (labels[0], labels[-1], labels[:, 0], labels[:, -1]):
        touches[edge] = True
    lowest = ndi.maximum(np.arange(h)[:, None] * np.ones_like(labels), labels,
                         index=np.arange(1, n + 1))
    fill = np.zeros(n + 1, dtype=bool)
    fill[1:] = ~touches[1:] & (np.asarray(lowest) < axis_y)
    mask |= fill[labels]
    return mask


def extract_envelope(mask, axis_y):
    mask = np.asarray(mask, dtype=bool)
    above = mask[: axis_y + 1]
    has = above.any(axis=0)
    top = np.where(has, above.argmax(axis=0), axis_y).astype(float)
    return Envelope(top_y=top, axis_y=int(axis_y), velocity=axis_y - top)


# --- waveforms --------------------------------------------------------------

def _local_maxima(x):
    """Indices of strict local maxima; plateaus report their (left) middle.

    Extrema touching either end of the signal are not reported.
    """
    n = x.size
    out = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                out.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return np.array(out, dtype=int)


def _suppress(idx, strength, min_distance):
    """Greedy keep-the-strongest selection with a minimum spacing."""
    if idx.size == 0:
        return idx
    order = np.lexsort((idx, -strength))  # strongest first, leftmost on ties
    kept = []
    for k in order:
        if all(abs(idx[k] - other) >= min_distance for other in kept):
            kept.append(idx[k])
    return np.sort(np.array(kept, dtype=int))


def _alternate(peaks, valleys, s):
    """Collapse runs of same-type extrema to their most extreme member."""
    events = sorted([(int(p), 1) for p in peaks] + [(int(v), -1) for v in valleys])
    out = []
    for pos, kind in events:
        if out and out[-1][1] == kind:
            prev = out[-1][0]
            better = s[pos] > s[prev] if kind == 1 else s[pos] < s[prev]
            if better:
                out[-1] = (pos, kind)
        else:
            out.append((pos, kind))
    peaks = np.array([p for p, k in out if k == 1], dtype=int)
    valleys = np.array([p for p, k in out if k == -1], dtype=int)
    return peaks, valleys


def detect_peaks_valleys(velocity, sigma=8.0, min_distance=70):
    """Peaks and valleys of the smoothed envelope velocity.

    Parameters
    ----------
    velocity : Envelope or 1-D array
    sigma : float
        Gaussian smoothing width in columns.
    min_distance : int
        Minimum spacing between two kept peaks (or two kept valleys).

    Returns
    -------
    peaks, valleys : int arrays, ascending and strictly alternating.
    """
    if min_distance < 1:
        raise ValueError("min_distance must be >= 1")
    v = velocity.velocity if isinstance(velocity, Envelope) else np.asarray(velocity, float)
    s = imaging.gaussian_smooth_1d(v, sigma)
    peaks = _local_maxima(s)
    valleys = _local_maxima(-s)
    peaks = _suppress(peaks, s[peaks] if peaks.size else peaks, min_distance)
    valleys = _suppress(valleys, -s[valleys] if valleys.size else valleys, min_distance)
    return _alternate(peaks, valleys, s)


def identify_waveforms(peaks, valleys):
    """(start, peak, end) for every valley pair enclosing exactly one peak."""
    peaks = np.asarray(peaks, dtype=int)
    valleys = np.asarray(valleys, dtype=int)
    out = []
    for left, right in zip(valleys[:-1], valleys[1:]):
        inside = peaks[(peaks > left) & (peaks < right)]
        if inside.size == 1:
            out.append((int(left), int(inside[0]), int(right)))
    return out


def classify_clarity(mean_intensity, good=0.56, poor=0.36):
    if mean_intensity > good:
        return "good"
    if mean_intensity < poor:
        return "poor"
    return "moderate"


def score_waveform(gray, mask, env, wf, thresholds=(0.56, 0.36), foreground_only=True):
    start, peak, end = wf
    cols = slice(start, end + 1)
    if foreground_only:
        pixels = np.asarray(gray)[:, cols][np.asarray(mask)[:, cols]]
    else:
        pixels = np.asarray(gray)[: env.axis_y, cols].ravel()
    if pixels.size == 0:
        raise EmptyWaveform(f"waveform {wf} covers no foreground pixels")
    mean = float(pixels.mean())
    good, poor = thresholds
    height = 100.0 * float(env.velocity[peak]) / env.axis_y if env.axis_y > 0 else 0.0
    return Waveform(start, peak, end, mean, classify_clarity(mean, good, poor), height)


def _longest_clear_run(waveforms):
    best = run = 0
    prev_end = None
    for wf in waveforms:
        if wf.clarity in CLARITY_OK:
            run = run + 1 if (run and prev_end == wf.start_col) else 1
        else:
            run = 0
        best = max(best, run)
        prev_end = wf.end_col
    return best


def verdict_from_waveforms(waveforms, config=None):
    cfg = config or SpectrumConfig()
    n = len(waveforms)
    return QaVerdict(
        n_waveforms=n,
        clarity_pass=_longest_clear_run(waveforms) >= cfg.clarity_run,
        sweep_pass=cfg.sweep_min <= n <= cfg.sweep_max,
        range_pass=any(w.height_pct > cfg.range_pct for w in waveforms),
        waveforms=list(waveforms),
    )


def analyze(raster, config=None):
    """Run the whole pipeline and keep the intermediate products."""
    cfg = config or SpectrumConfig()
    raster = imaging.as_rgb(raster)
    gray = imaging.to_gray(raster)
    overlay = detect_overlays(raster, cfg.overlay_std, cfg.overlay_dilation)
    if overlay.any():
        gray = inpaint_biharmonic(gray, overlay, tol=cfg.solver_tol)
    axis_y = detect_x_axis(gray, cfg)
    fg, bg = seed_policy(gray, axis_y, cfg)
    mask = segment_spectrum(gray, cfg.beta, seeds=(fg, bg), config=cfg)
    mask = clean_with_axis(mask, axis_y)
    env = extract_envelope(mask, axis_y)
    peaks, valleys = detect_peaks_valleys(env, cfg.smooth_sigma, cfg.min_distance)
    thresholds = (cfg.good_threshold, cfg.poor_threshold)
    waveforms = [score_waveform(gray, mask, env, wf, thresholds, cfg.foreground_only)
                 for wf in identify_waveforms(peaks, valleys)]
    verdict = verdict_from_waveforms(waveforms, cfg)
    return SpectrumAnalysis(gray, overlay, mask, axis_y, env, peaks, valleys, verdict)


def assess(raster, config=None):
    return analyze(raster, config).verdict


CLARITY_COLORS = {"good": (0, 200, 0), "moderate": (230, 200, 0), "poor": (220, 0, 0)}


def render_overlay(raster, analysis, config=None):
    """Annotated copy of the spectrum in the clarity color scheme.

    Each waveform's region is tinted by its clarity class and its envelope
    traced; waveforms not exceeding the height criterion are traced with a
    dotted line.
    """
    cfg = config or SpectrumConfig()
    out = imaging.as_rgb(raster).astype(float).copy()
    env = analysis.envelope
    for wf in analysis.verdict.waveforms:
        color = np.array(CLARITY_COLORS[wf.clarity], dtype=float)
        cols = slice(wf.start_col, wf.end_col + 1)
        region = analysis.mask[:, cols]
        tile = out[:, cols]
        tile[region] = 0.6 * tile[region] + 0.4 * color
        dotted = wf.height_pct <= cfg.range_pct
        for c in range(wf.start_col, wf.end_col + 1):
            if dotted and (c // 4) % 2:
                continue
            y = int(env.top_y[c])
            out[max(y - 1, 0): y + 1, c] = color
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
