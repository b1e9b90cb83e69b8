"""Probe apex localization from the green color-Doppler box and insonation angles.

Angles follow one convention throughout: degrees measured from the image +x
axis with y pointing down. Vessel directions are undirected lines and live
in ``[0, 180)``.
"""

import json
from dataclasses import dataclass

import numpy as np
from skimage.morphology import skeletonize

from . import imaging
from .errors import (
    AnnotationMismatch,
    AtApex,
    DegenerateIntersection,
    NoForeground,
    WedgeNotFound,
)

ISUOG_MAX_INSONATION_DEG = 30.0


@dataclass(frozen=True)
class GateCandidate:
    box: tuple  # (x_min, y_min, x_max, y_max)
    vessel_angle_deg: float
    score: float = 1.0

    def __post_init__(self):
        x0, y0, x1, y1 = (float(v) for v in self.box)
        if x1 < x0 or y1 < y0:
            raise ValueError(f"malformed box {self.box}")
        object.__setattr__(self, "box", (x0, y0, x1, y1))
        object.__setattr__(self, "vessel_angle_deg", fold_angle(self.vessel_angle_deg))
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def centroid(self):
        x0, y0, x1, y1 = self.box
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0

    @classmethod
    def at(cls, x, y, vessel_angle_deg, score=1.0):
        """Zero-size box at a centroid, for sources that only carry points."""
        return cls((x, y, x, y), vessel_angle_deg, score)

    def within(self, width, height):
        x0, y0, x1, y1 = self.box
        return x0 >= 0 and y0 >= 0 and x1 <= width and y1 <= height

    def to_dict(self):
        return {"box": list(self.box), "vessel_angle_deg": self.vessel_angle_deg,
                "score": self.score}


@dataclass(frozen=True)
class ProbeLocation:
    apex: tuple
    edge_lines: tuple = ()
    verified: bool = False
    arcs: tuple = ()

    def to_dict(self):
        return {
            "apex": [float(self.apex[0]), float(self.apex[1])],
            "verified": bool(self.verified),
            "edge_lines": [ln.to_dict() for ln in self.edge_lines],
            "arcs": [a.to_dict() for a in self.arcs],
        }


@dataclass(frozen=True)
class InsonationResult:
    angle_deg: float
    beam_vector: tuple
    passes_isuog: bool


@dataclass
class ProbeConfig:
    green_min: int = 180
    red_max: int = 100
    blue_max: int = 100
    marker_radius: int = 3
    angle_bins: int = 180
    rho_resolution: float = 1.0
    nms_rho: float = 5.0
    nms_theta_deg: float = 5.0
    min_votes: int = None
    min_votes_fraction: float = 0.3
    refine_band: float = 2.0
    parallel_tol_deg: float = 2.0
    arc_min_votes: int = 40
    arcs_required: int = 2

    def rule(self):
        return imaging.ChannelRule(g_min=self.green_min, r_max=self.red_max,
                                   b_max=self.blue_max)


def fold_angle(deg):
    """Map any direction in degrees onto the undirected range [0, 180)."""
    a = float(deg) % 180.0
    return 0.0 if a >= 180.0 else a


def _line_angle_diff(a, b):
    d = abs(a.theta - b.theta) % np.pi
    return min(d, np.pi - d)


def locate_probe(img, config=None):
    """Find the probe apex where the two radial edges of the green box meet.

    The green box is thresholded, cleaned by watershed, thinned to a
    one-pixel skeleton, and searched for straight lines. The two strongest
    lines are refit to their skeleton pixels and intersected. The apex is
    verified by finding ``arcs_required`` circular arcs centred on it.

    Raises
    ------
    WedgeNotFound
        No green box, or fewer than two lines.
    DegenerateIntersection
        The two edges are (nearly) parallel, e.g. a linear-probe rectangle.
    """
    cfg = config or ProbeConfig()
    rgb = imaging.as_rgb(img)
    mask = imaging.threshold_rgb(rgb, cfg.rule())
    try:
        refined = imaging.watershed_refine(mask, rgb, cfg.marker_radius)
    except NoForeground as exc:
        raise WedgeNotFound("no green Doppler box found") from exc
    skeleton = skeletonize(refined)

    lines = imaging.hough_lines(
        skeleton, min_votes=cfg.min_votes, angle_bins=cfg.angle_bins,
        rho_resolution=cfg.rho_resolution, nms_rho=cfg.nms_rho,
        nms_theta_deg=cfg.nms_theta_deg, min_votes_fraction=cfg.min_votes_fraction,
    )
    if len(lines) < 2:
        raise WedgeNotFound(f"found {len(lines)} edge line(s), need 2")
    first, second = lines[:2]
    if np.rad2deg(_line_angle_diff(first, second)) < cfg.parallel_tol_deg:
        raise DegenerateIntersection("box edges are parallel")

    edges = tuple(imaging.refine_line(skeleton, ln, cfg.refine_band) for ln in (first, second))
    if np.rad2deg(_line_angle_diff(*edges)) < cfg.parallel_tol_deg:
        raise DegenerateIntersection("box edges are parallel")
    apex = imaging.intersect(*edges)
    if apex is None:
        raise DegenerateIntersection("box edges do not intersect")

    h, w = skeleton.shape
    corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=float)
    r_max = float(np.hypot(*(corners - apex).T).max())
    arcs = imaging.hough_circles_fixed_center(skeleton, apex, (1, r_max), cfg.arc_min_votes)
    verified = len(arcs) >= cfg.arcs_required
    return ProbeLocation(apex=apex, edge_lines=edges, verified=verified, arcs=tuple(arcs))


def beam_direction_at(probe, pixel):
    """Unit vector from ``pixel`` toward the probe apex."""
    apex = probe.apex if isinstance(probe, ProbeLocation) else probe
    d = np.array([apex[0] - pixel[0], apex[1] - pixel[1]], dtype=float)
    norm = np.hypot(d[0], d[1])
    if norm < 1e-9:
        raise AtApex("pixel coincides with the probe apex")
    return d / norm


def insonation_angle(probe, gate):
    u = beam_direction_at(probe, gate.centroid)
    a = np.deg2rad(gate.vessel_angle_deg)
    v = np.array([np.cos(a), np.sin(a)])
    # arccos(|u.v|) computed via atan2, which stays accurate near 0 degrees
    angle = float(np.rad2deg(np.arctan2(abs(u[0] * v[1] - u[1] * v[0]), abs(float(u @ v)))))
    return InsonationResult(angle_deg=angle, beam_vector=(float(u[0]), float(u[1])),
                            passes_isuog=angle < ISUOG_MAX_INSONATION_DEG)


def _line_angle_deg(p, q):
    return fold_angle(np.rad2deg(np.arctan2(q[1] - p[1], q[0] - p[0])))


def parse_annotations(doc):
    """Pair LabelMe rectangles with the tangent line drawn inside each.

    Only ``shapes[*].shape_type``, ``points`` and ``label`` are read. A line
    belongs to the rectangle containing its midpoint.
    """
    shapes = doc.get("shapes", []) if isinstance(doc, dict) else []
    rects, segments = [], []
    for idx, shape in enumerate(shapes):
        kind = shape.get("shape_type")
        pts = shape.get("points", [])
        if kind == "rectangle" and len(pts) == 2:
            (xa, ya), (xb, yb) = pts
            rects.append((idx, (min(xa, xb), min(ya, yb), max(xa, xb), max(ya, yb))))
        elif kind == "line" and len(pts) == 2:
            segments.append((idx, pts[0], pts[1]))

    owners = {ridx: [] for ridx, _ in rects}
    offenders = []
    for sidx, p, q in segments:
        mx, my = (p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0
        hits = [ridx for ridx, (x0, y0, x1, y1) in rects if x0 <= mx <= x1 and y0 <= my <= y1]
        if len(hits) != 1:
            offenders.append(f"line shape {sidx} lies in {len(hits)} rectangles")
            continue
        owners[hits[0]].append((p, q))

    gates = []
    for ridx, box in rects:
        inside = owners[ridx]
        if len(inside) != 1:
            offenders.append(f"rectangle shape {ridx} contains {len(inside)} lines")
            continue
        p, q = inside[0]
        gates.append(GateCandidate(box, _line_angle_deg(p, q), 1.0))
    if offenders:
        raise AnnotationMismatch(offenders)

    width, height = doc.get("imageWidth"), doc.get("imageHeight")
    if width is not None and height is not None:
        outside = [i for i, g in enumerate(gates) if not g.within(width, height)]
        if outside:
            raise AnnotationMismatch([f"rectangle {i} exceeds image bounds" for i in outside])
    return gates


def read_annotations(path):
    with open(path, encoding="utf-8") as fh:
        return parse_annotations(json.load(fh))


def gates_to_labelme(gates, image_path="", width=None, height=None):
    """Inverse of :func:`parse_annotations`, used to write fixture files."""
    shapes = []
    for gate in gates:
        x0, y0, x1, y1 = gate.box
        cx, cy = gate.centroid
        half = max(min(x1 - x0, y1 - y0) / 2.0 - 1.0, 1.0)
        a = np.deg2rad(gate.vessel_angle_deg)
        dx, dy = half * np.cos(a), half * np.sin(a)
        shapes.append({"label": "UA", "shape_type": "rectangle",
                       "points": [[x0, y0], [x1, y1]]})
        shapes.append({"label": "angle", "shape_type": "line",
                       "points": [[cx - dx, cy - dy], [cx + dx, cy + dy]]})
    doc = {"shapes": shapes, "imagePath": image_path}
    if width is not None:
        doc["imageWidth"] = width
        doc["imageHeight"] = height
    return doc

