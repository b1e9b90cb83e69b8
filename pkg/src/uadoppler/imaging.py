"""Low-level image operations shared by the probe and spectrum pipelines.

Images are numpy arrays: RGB rasters are ``(H, W, 3) uint8`` with the origin
at the top-left and y increasing downward; masks are ``(H, W) bool``.
Lines use the normal form ``x cos(theta) + y sin(theta) = rho`` with
``theta`` in ``[0, pi)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi
from skimage.filters import sobel
from skimage.morphology import disk
from skimage.segmentation import watershed

from .errors import ChannelMismatch, NoForeground

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class PolarLine:
    rho: float
    theta: float
    votes: int = 0

    def homogeneous(self):
        return np.array([np.cos(self.theta), np.sin(self.theta), -self.rho])

    def distance(self, x, y):
        return np.abs(x * np.cos(self.theta) + y * np.sin(self.theta) - self.rho)

    def to_dict(self):
        return {"rho": float(self.rho), "theta": float(self.theta), "votes": int(self.votes)}


@dataclass(frozen=True)
class CircleArc:
    center: tuple
    radius: float
    support: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def to_dict(self):
        return {
            "center": [float(self.center[0]), float(self.center[1])],
            "radius": float(self.radius),
            "support": int(self.support),
        }


@dataclass(frozen=True)
class ChannelRule:
    """Inclusive per-channel bounds; ``None`` leaves a side open."""

    r_min: int = None
    r_max: int = None
    g_min: int = None
    g_max: int = None
    b_min: int = None
    b_max: int = None


GREEN_BOX_RULE = ChannelRule(g_min=180, r_max=100, b_max=100)


def as_rgb(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ChannelMismatch(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def to_gray(img):
    """Luma of an RGB raster rescaled to [0, 1]; 2-D input is passed through."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(float) / (255.0 if img.dtype == np.uint8 else 1.0)
    rgb = as_rgb(img).astype(float)
    return (rgb @ LUMA_WEIGHTS) / 255.0


def threshold_rgb(img, rule=GREEN_BOX_RULE):
    rgb = as_rgb(img)
    mask = np.ones(rgb.shape[:2], dtype=bool)
    for idx, name in enumerate("rgb"):
        lo = getattr(rule, f"{name}_min")
        hi = getattr(rule, f"{name}_max")
        channel = rgb[..., idx]
        if lo is not None:
            mask &= channel >= lo
        if hi is not None:
            mask &= channel <= hi
    return mask


def watershed_refine(mask, guide, marker_radius=3):
    """Clean a binary mask with a marker-controlled watershed.

    Foreground markers are the mask eroded by ``marker_radius``; background
    markers are the complement eroded by the same radius. Basins are flooded
    over the Sobel gradient of the guide's green channel (or the guide itself
    when it is single-channel), so isolated specks that cannot hold a
    foreground marker are absorbed by the background.
    """
    mask = np.asarray(mask, dtype=bool)
    guide = np.asarray(guide)
    if guide.shape[:2] != mask.shape:
        raise ValueError("mask and guide must share dimensions")
    green = guide[..., 1] if guide.ndim == 3 else guide
    green = green.astype(float) / (255.0 if guide.dtype == np.uint8 else 1.0)

    selem = disk(marker_radius) if marker_radius > 0 else np.ones((1, 1), bool)
    fg = ndi.binary_erosion(mask, structure=selem)
    if not fg.any():
        raise NoForeground("no foreground marker survives erosion")
    bg = ndi.binary_erosion(~mask, structure=selem)

    markers = np.zeros(mask.shape, dtype=np.int32)
    markers[bg] = 1
    markers[fg] = 2
    # only the band between the two marker sets is undecided; flooding it
    # (plus the marker pixels bordering it) gives the full-image result
    zone = ndi.binary_dilation(markers == 0)
    labels = np.where(zone, watershed(sobel(green), markers, mask=zone), markers)
    return labels == 2


def _rho_offset(shape, rho_resolution):
    h, w = shape
    return int(np.ceil(np.hypot(h, w) / rho_resolution)) + 1


def hough_accumulator(mask, angle_bins=180, rho_resolution=1.0):
    """Vote accumulator of shape ``(angle_bins, n_rho)`` plus the bin axes."""
    mask = np.asarray(mask, dtype=bool)
    thetas = np.arange(angle_bins) * (np.pi / angle_bins)
    offset = _rho_offset(mask.shape, rho_resolution)
    rhos = (np.arange(2 * offset + 1) - offset) * rho_resolution
    acc = np.zeros((angle_bins, rhos.size), dtype=np.int64)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return acc, thetas, rhos
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    for i in range(angle_bins):
        r = np.rint((xs * cos_t[i] + ys * sin_t[i]) / rho_resolution).astype(np.int64)
        acc[i] = np.bincount(r + offset, minlength=rhos.size)
    return acc, thetas, rhos


def _too_close(line, kept, nms_rho, nms_theta):
    for other in kept:
        dt = abs(line.theta - other.theta)
        if dt <= nms_theta and abs(line.rho - other.rho) <= nms_rho:
            return True
        # the same line seen across the theta = 0 / pi seam has its rho negated
        if np.pi - dt <= nms_theta and abs(line.rho + other.rho) <= nms_rho:
            return True
    return False


def _plateau_rho(row, j, rhos):
    """Center of the run of equal-vote bins around ``j``.

    A line whose angle falls between bins spreads its votes evenly over
    several neighbouring rho bins; the run's center is its mid-length rho.
    """
    lo = hi = j
    while lo > 0 and row[lo - 1] == row[j]:
        lo -= 1
    while hi + 1 < row.size and row[hi + 1] == row[j]:
        hi += 1
    return float(0.5 * (rhos[lo] + rhos[hi]))


def hough_lines(mask, min_votes=None, angle_bins=180, rho_resolution=1.0,
                nms_rho=5.0, nms_theta_deg=5.0, theta_range=None,
                min_votes_fraction=0.3, refine_band=1.0):
    """Detect straight lines in a binary mask.

    Parameters
    ----------
    mask : (H, W) bool array
    min_votes : int, optional
        Vote floor. When omitted, ``min_votes_fraction`` of the accumulator
        maximum is used.
    angle_bins : int
        Number of theta bins over ``[0, pi)``.
    rho_resolution : float
        Rho bin width in pixels.
    nms_rho, nms_theta_deg : float
        Suppression window; a weaker line within both bounds of a stronger
        one is dropped.
    theta_range : (lo, hi), optional
        Restrict the search to ``lo <= theta <= hi`` (radians).
    refine_band : float or None
        Each surviving peak is refit (total least squares) to the mask pixels
        within this distance, removing the bin quantization. ``None`` or 0
        returns raw bin centers.

    Returns
    -------
    list of PolarLine, strongest first.
    """
    mask = np.asarray(mask, dtype=bool)
    acc, thetas, rhos = hough_accumulator(mask, angle_bins, rho_resolution)
    if theta_range is not None:
        lo, hi = theta_range
        acc[(thetas < lo - 1e-12) | (thetas > hi + 1e-12)] = 0
    peak = acc.max(initial=0)
    if peak == 0:
        return []
    floor = max(1, int(np.ceil(min_votes_fraction * peak))) if min_votes is None else min_votes
    if peak < floor:
        return []

    local_max = acc == ndi.maximum_filter(acc, size=3, mode="constant")
    cand_t, cand_r = np.nonzero(local_max & (acc >= floor))
    votes = acc[cand_t, cand_r]
    order = np.lexsort((cand_r, cand_t, -votes))

    nms_theta = np.deg2rad(nms_theta_deg)
    binned, kept = [], []
    for k in order:
        i, j = cand_t[k], cand_r[k]
        line = PolarLine(_plateau_rho(acc[i], j, rhos), float(thetas[i]), int(votes[k]))
        if _too_close(line, binned, nms_rho, nms_theta):
            continue
        binned.append(line)
        if refine_band:
            line = refine_line(mask, line, band=refine_band)
            if theta_range is not None and not lo - 1e-12 <= line.theta <= hi + 1e-12:
                continue
        # refits may converge onto an already kept line
        if not _too_close(line, kept, nms_rho, nms_theta):
            kept.append(line)
    return kept


def fit_line(xs, ys):
    """Total-least-squares line through points, as a PolarLine (votes = count)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    cx, cy = xs.mean(), ys.mean()
    cov = np.cov(np.vstack([xs - cx, ys - cy]), bias=True)
    evals, evecs = np.linalg.eigh(cov)
    nx, ny = evecs[:, 0]  # normal = direction of least spread
    theta = np.arctan2(ny, nx)
    if theta < 0:
        theta += np.pi
    if theta >= np.pi:
        theta -= np.pi
    rho = cx * np.cos(theta) + cy * np.sin(theta)
    return PolarLine(float(rho), float(theta), int(xs.size))


def refine_line(mask, line, band=2.0, iterations=3):
    """Refit a Hough line to the mask pixels lying within ``band`` of it."""
    ys, xs = np.nonzero(mask)
    current = line
    for _ in range(iterations):
        near = current.distance(xs, ys) <= band
        if near.sum() < 2:
            break
        fitted = fit_line(xs[near], ys[near])
        current = PolarLine(fitted.rho, fitted.theta, line.votes)
    return current


def intersect(line_a, line_b):
    """Intersection point of two lines (homogeneous cross product)."""
    p = np.cross(line_a.homogeneous(), line_b.homogeneous())
    if abs(p[2]) < 1e-12:
        return None
    return float(p[0] / p[2]), float(p[1] / p[2])


def hough_circles_fixed_center(mask, center, radius_range, min_votes, window=1,
                               min_separation=5):
    """Circle detection with the center held fixed.

    Each foreground pixel votes for ``round(distance to center)``; a radius's
    support is the vote total over ``radius +/- window`` bins. Local maxima
    reaching ``min_votes`` are returned strongest first, separated by at
    least ``min_separation`` pixels in radius.
    """
    r_lo, r_hi = radius_range
    if not r_hi >= r_lo:
        raise ValueError("radius_range must be non-empty")
    r_lo = max(int(np.floor(r_lo)), 1)
    r_hi = int(np.ceil(r_hi))
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if xs.size == 0 or r_hi < r_lo:
        return []
    cx, cy = center
    dist = np.hypot(xs - cx, ys - cy)
    bins = np.rint(dist).astype(np.int64)
    hist = np.bincount(bins[(bins >= 0)], minlength=r_hi + window + 2).astype(np.int64)
    kernel = np.ones(2 * window + 1, dtype=np.int64)
    support = np.convolve(hist, kernel, mode="same")

    radii = np.arange(r_lo, r_hi + 1)
    sup = support[radii]
    order = np.lexsort((radii, -sup))
    arcs = []
    for k in order:
        if sup[k] < min_votes:
            break
        r = radii[k]
        lo = max(r - min_separation, 0)
        if sup[k] < support[lo:r + min_separation + 1].max():
            continue
        if any(abs(r - a.radius) < min_separation for a in arcs):
            continue
        sel = np.abs(bins - r) <= window
        arcs.append(CircleArc((float(cx), float(cy)), float(dist[sel].mean()), int(sup[k])))
    return arcs


def gaussian_smooth_1d(signal, sigma):
    """Normalized Gaussian smoothing truncated at 4 sigma, reflect-padded."""
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if int(4.0 * sigma + 0.5) == 0:  # kernel radius rounds to zero: identity
        return x.copy()
    return ndi.gaussian_filter1d(x, sigma, mode="reflect", truncate=4.0)


def label_components(mask, connectivity=1):
    structure = ndi.generate_binary_structure(2, connectivity)
    return ndi.label(mask, structure=structure)
