"""Deterministic synthetic fixtures with exact ground truth.

Three kinds of scenes are produced: color-Doppler frames containing a green
sector box, pulsed-Doppler spectrum crops, and paired ground-truth /
predicted gate lists. Every random draw comes from a ``numpy`` PCG64
generator seeded from the spec, so equal specs give bit-identical output.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .errors import Clipped, OffCanvas, PipelineError
from .imaging import CircleArc, PolarLine
from .probe import GateCandidate, ProbeLocation

GREEN = (0, 255, 0)


class InvalidSpec(PipelineError, ValueError):
    code = "invalid-spec"


@dataclass
class WedgeSpec:
    apex: tuple = (256.0, -80.0)
    half_angle: float = 30.0
    radii: tuple = (150.0, 400.0)
    image_size: tuple = (512, 512)  # (width, height)
    noise: float = 0.0
    edge_thickness: float = 8.0
    tilt: float = 0.0  # steering of the sector axis from straight down, degrees
    arcs: bool = True
    background: bool = True
    color_flow: bool = True
    seed: int = 0

    def validate(self):
        if not 0 < self.half_angle < 90:
            raise InvalidSpec(f"half_angle {self.half_angle} outside (0, 90)")
        if not self.radii[0] < self.radii[1]:
            raise InvalidSpec("inner radius must be smaller than outer radius")
        if not 0 <= self.noise <= 1:
            raise InvalidSpec("noise is a probability")
        if self.edge_thickness <= 0:
            raise InvalidSpec("edge_thickness must be positive")


@dataclass
class SpectrumSpec:
    n_waveforms: int = 5
    period: int = 150
    peak_heights: list = None  # pixels above the axis; default 0.85 * axis_row
    axis_row: int = 200
    intensity: list = None  # per waveform in [0, 1]; default 0.8
    noise_sigma: float = 0.0
    overlay_lines: list = field(default_factory=list)
    seed: int = 0
    diastolic: float = None  # valley height in pixels; default 0.3 * min peak
    below_axis: int = 24
    axis_intensity: float = 1.0
    background: float = 0.0

    def heights(self):
        if self.peak_heights is None:
            return [0.85 * self.axis_row] * self.n_waveforms
        return [float(h) for h in self.peak_heights]

    def intensities(self):
        if self.intensity is None:
            return [0.8] * self.n_waveforms
        if np.isscalar(self.intensity):
            return [float(self.intensity)] * self.n_waveforms
        return [float(v) for v in self.intensity]

    def validate(self):
        if self.n_waveforms < 0:
            raise InvalidSpec("n_waveforms must be >= 0")
        if self.period < 4:
            raise InvalidSpec("period too short")
        if self.axis_row < 2:
            raise InvalidSpec("axis_row must lie inside the image")
        if len(self.heights()) != self.n_waveforms or len(self.intensities()) != self.n_waveforms:
            raise InvalidSpec("one peak height and intensity per waveform")
        if any(h <= 0 for h in self.heights()):
            raise InvalidSpec("peak heights must be positive")
        if any(h >= self.axis_row for h in self.heights()):
            raise Clipped("peak height reaches the top of the panel")
        if any(not 0 <= v <= 1 for v in self.intensities()):
            raise InvalidSpec("intensity must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


def _edge_line(apex, phi):
    """Polar line through ``apex`` along direction ``(sin phi, cos phi)``."""
    nx, ny = np.cos(phi), -np.sin(phi)
    rho = nx * apex[0] + ny * apex[1]
    theta = np.arctan2(ny, nx)
    if theta < 0:
        theta += np.pi
        rho = -rho
    if theta >= np.pi:
        theta -= np.pi
        rho = -rho
    return PolarLine(float(rho), float(theta))


def _segment_distance(xs, ys, p, q):
    d = np.subtract(q, p, dtype=float)
    t = ((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / (d @ d)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(xs - (p[0] + t * d[0]), ys - (p[1] + t * d[1]))


def wedge_edges_mask(spec):
    """Boolean mask of the crisp sector outline described by ``spec``."""
    spec.validate()
    w, h = spec.image_size
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    ax, ay = spec.apex
    half = spec.edge_thickness / 2.0
    tilt = np.deg2rad(spec.tilt)
    ha = np.deg2rad(spec.half_angle)
    r_in, r_out = spec.radii

    mask = np.zeros((h, w), dtype=bool)
    for phi in (tilt - ha, tilt + ha):
        d = np.array([np.sin(phi), np.cos(phi)])
        p = (ax + r_in * d[0], ay + r_in * d[1])
        q = (ax + r_out * d[0], ay + r_out * d[1])
        mask |= _segment_distance(xs, ys, p, q) <= half
    if spec.arcs:
        dist = np.hypot(xs - ax, ys - ay)
        ang = np.arctan2(xs - ax, ys - ay)  # angle from +y toward +x
        in_sector = np.abs(ang - tilt) <= ha
        for r in spec.radii:
            mask |= in_sector & (np.abs(dist - r) <= half)
    return mask


def _sector_interior(spec, xs, ys):
    ax, ay = spec.apex
    dist = np.hypot(xs - ax, ys - ay)
    ang = np.arctan2(xs - ax, ys - ay)
    return ((np.abs(ang - np.deg2rad(spec.tilt)) < np.deg2rad(spec.half_angle))
            & (dist > spec.radii[0]) & (dist < spec.radii[1]))


def gen_wedge(spec):
    """Render a color-Doppler frame with a green sector box.

    Returns
    -------
    image : (H, W, 3) uint8
    truth : ProbeLocation
        Exact apex, the analytic edge lines and, when arcs are drawn, the two
        arc radii.
    """
    spec.validate()
    w, h = spec.image_size
    rng = _rng(spec.seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(float)

    img = np.zeros((h, w, 3), dtype=np.uint8)
    if spec.background:
        speckle = rng.integers(0, 100, size=(h, w), dtype=np.uint8)
        img[...] = speckle[..., None]
    if spec.color_flow:
        interior = _sector_interior(spec, xs, ys)
        iy, ix = np.nonzero(interior)
        for k in range(3 if iy.size else 0):
            j = rng.integers(iy.size)
            cx, cy = ix[j], iy[j]
            blob = np.hypot((xs - cx) / 14.0, (ys - cy) / 6.0) <= 1.0
            blob &= interior
            img[blob] = (200, 30, 30) if k % 2 == 0 else (30, 60, 220)

    edges = wedge_edges_mask(spec)
    if not edges.any():
        raise OffCanvas("sector box lies entirely outside the image")
    img[edges] = GREEN
    if spec.noise > 0:
        salt = rng.random((h, w)) < spec.noise
        img[salt] = GREEN

    tilt = np.deg2rad(spec.tilt)
    ha = np.deg2rad(spec.half_angle)
    lines = (_edge_line(spec.apex, tilt - ha), _edge_line(spec.apex, tilt + ha))
    arcs = tuple(CircleArc(tuple(map(float, spec.apex)), float(r), 0) for r in spec.radii) \
        if spec.arcs else ()
    truth = ProbeLocation(apex=tuple(map(float, spec.apex)), edge_lines=lines,
                          verified=bool(spec.arcs), arcs=arcs)
    return img, truth


def gen_linear_box(image_size=(512, 512), box=(180, 60, 330, 420), edge_thickness=8.0,
                   seed=0):
    """Rectangular green box, as drawn for a linear probe (parallel edges)."""
    w, h = image_size
    rng = _rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    x0, y0, x1, y1 = box
    img = np.repeat(rng.integers(0, 100, size=(h, w), dtype=np.uint8)[..., None], 3, axis=2)
    half = edge_thickness / 2.0
    mask = np.zeros((h, w), dtype=bool)
    for p, q in (((x0, y0), (x0, y1)), ((x1, y0), (x1, y1)),
                 ((x0, y0), (x1, y0)), ((x0, y1), (x1, y1))):
        mask |= _segment_distance(xs, ys, p, q) <= half
    img[mask] = GREEN
    return img


def velocity_profile(spec):
    """Envelope height above the axis, per column, as a float array.

    Valleys sit at ``period/2 + k*period`` for ``k = 0..n``; complete lobes
    lie between consecutive valleys. Half lobes pad both image edges so the
    first and last valleys are genuine local minima.
    """
    n, period = spec.n_waveforms, spec.period
    heights = spec.heights()
    width = (n + 1) * period
    edge_h = float(np.mean(heights)) if heights else 0.6 * spec.axis_row
    lobe_h = np.array([edge_h] + heights + [edge_h])
    dia = spec.diastolic
    if dia is None:
        dia = 0.3 * float(lobe_h.min())
    x = np.arange(width, dtype=float)
    seg = np.floor((x - period / 2.0) / period).astype(int)  # -1 .. n
    phase = (x - period / 2.0 - seg * period) / period
    return dia + (lobe_h[seg + 1] - dia) * np.sin(np.pi * phase) ** 2, seg


def _clarity(value, good=0.56, poor=0.36):
    if value > good:
        return "good"
    if value < poor:
        return "poor"
    return "moderate"


def gen_spectrum(spec):
    """Render a spectrum crop and its ground truth.

    Returns
    -------
    image : (H, W, 3) uint8
    truth : dict
        ``peaks``, ``valleys`` (columns), ``heights`` (pixels),
        ``height_pct``, ``intensity``, ``clarity``, ``top_y`` (per column)
        and ``axis_row``.
    """
    spec.validate()
    n, period, axis = spec.n_waveforms, spec.period, spec.axis_row
    v, seg = velocity_profile(spec)
    width = v.size
    height = axis + spec.below_axis + 1
    levels = spec.intensities()
    edge_level = levels[0] if levels else 0.6
    lobe_level = np.array([edge_level] + levels + [levels[-1] if levels else 0.6])

    top_y = np.rint(axis - v).astype(int)
    rows = np.arange(height)[:, None]
    lobe = (rows >= top_y[None, :]) & (rows < axis)
    gray = np.full((height, width), float(spec.background))
    gray = np.where(lobe, lobe_level[seg + 1][None, :], gray)
    gray[axis, :] = spec.axis_intensity

    rng = _rng(spec.seed)
    if spec.noise_sigma > 0:
        gray = gray + rng.normal(0.0, spec.noise_sigma, size=gray.shape)
    gray = np.clip(gray, 0.0, 1.0)
    img8 = np.rint(gray * 255.0).astype(np.uint8)
    img = np.repeat(img8[..., None], 3, axis=2)

    if spec.overlay_lines:
        canvas = Image.fromarray(img)
        draw = ImageDraw.Draw(canvas)
        for line in spec.overlay_lines:
            pts = [tuple(map(float, p)) for p in line["points"]]
            draw.line(pts, fill=tuple(int(c) for c in line.get("color", (255, 255, 0))),
                      width=int(line.get("width", 1)))
        img = np.asarray(canvas).copy()

    peaks = [(k + 1) * period for k in range(n)]
    valleys = [int(np.floor(period / 2.0 + k * period + 0.5)) for k in range(n + 1)]
    heights = spec.heights()
    truth = {
        "axis_row": axis,
        "peaks": peaks,
        "valleys": valleys,
        "heights": heights,
        "height_pct": [100.0 * h / axis for h in heights],
        "intensity": levels,
        "clarity": [_clarity(x) for x in levels],
        "top_y": top_y.tolist(),
    }
    return img, truth


def _lattice_directions(r):
    """Integer offsets of exact length ``r`` (always includes the four axes)."""
    out = []
    for a in range(-r, r + 1):
        b2 = r * r - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            out.append((a, b))
            if b:
                out.append((a, -b))
    return sorted(set(out))


def gen_detection_scene(n_gt, jitter_radius, angle_noise, seed=0, image_size=(512, 512),
                        box_size=24):
    """Ground-truth gates plus predictions displaced by exactly ``jitter_radius``.

    Integer radii draw the displacement from the integer vectors of that
    length so centroid distances are exact in floating point; other radii
    use a continuous direction. Ground truths are spaced more than
    ``2 * jitter_radius`` apart so every ground truth's nearest prediction is
    its own. Angles stay clear of the 0/180 seam by ``angle_noise``.
    """
    if n_gt < 1:
        raise InvalidSpec("n_gt must be >= 1")
    if jitter_radius < 0 or angle_noise < 0:
        raise InvalidSpec("jitter_radius and angle_noise must be >= 0")
    rng = _rng(seed)
    w, h = image_size
    half = box_size // 2
    margin = half + int(np.ceil(jitter_radius)) + 1
    min_sep = 2 * jitter_radius + 10

    centers = []
    attempts = 0
    while len(centers) < n_gt:
        attempts += 1
        if attempts > 10000 * n_gt:
            raise InvalidSpec("cannot place that many separated gates on the canvas")
        c = (int(rng.integers(margin, w - margin)), int(rng.integers(margin, h - margin)))
        if all(np.hypot(c[0] - o[0], c[1] - o[1]) > min_sep for o in centers):
            centers.append(c)

    exact = float(jitter_radius).is_integer()
    dirs = _lattice_directions(int(jitter_radius)) if exact and jitter_radius > 0 else None
    a_lo, a_hi = min(angle_noise, 90.0), max(180.0 - angle_noise, 90.0)

    gts, preds = [], []
    for cx, cy in centers:
        angle = float(rng.uniform(a_lo, a_hi))
        if dirs is not None:
            dx, dy = dirs[int(rng.integers(len(dirs)))]
        elif jitter_radius > 0:
            phi = rng.uniform(0, 2 * np.pi)
            dx, dy = jitter_radius * np.cos(phi), jitter_radius * np.sin(phi)
        else:
            dx = dy = 0
        noise = float(rng.uniform(-angle_noise, angle_noise)) if angle_noise > 0 else 0.0
        gts.append(GateCandidate((cx - half, cy - half, cx + half, cy + half), angle, 1.0))
        px, py = cx + dx, cy + dy
        preds.append(GateCandidate((px - half, py - half, px + half, py + half),
                                   angle + noise, float(rng.uniform(0.5, 1.0))))
    return gts, preds


def spec_to_dict(spec):
    return asdict(spec)
