"""Sensitivity-based evaluation of gate predictions.

Every ground-truth gate is paired with its nearest prediction (centroid
Euclidean distance, many-to-one allowed). A ground truth counts as detected
at threshold ``n`` when that distance is strictly below ``n``. Precision is
deliberately not computed: sparse ground truth leaves false positives
undefined.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import NoGroundTruth, NoMatches
from .probe import GateCandidate

CSV_FIELDS = ["x_center", "y_center", "angle_deg", "score"]
CURVE_FIELDS = ["n", "sensitivity_pct", "mean_angle_err_deg"]
ABSENT = "NA"


@dataclass
class MatchSet:
    pairs: list = field(default_factory=list)  # (gt_index, pred_index, distance)
    unmatched_gt: list = field(default_factory=list)

    @property
    def n_gt(self):
        return len(self.pairs) + len(self.unmatched_gt)


@dataclass
class EvalCurve:
    n_values: list
    sensitivity: list
    mean_angle_err: list  # None where no pair falls under the threshold

    def rows(self):
        return list(zip(self.n_values, self.sensitivity, self.mean_angle_err))


def _centroids(gates):
    return np.array([g.centroid for g in gates], dtype=float).reshape(-1, 2)


def match(gts, preds):
    """Pair each ground truth with its nearest prediction.

    Distance ties go to the lower prediction index.
    """
    if not preds:
        return MatchSet(pairs=[], unmatched_gt=list(range(len(gts))))
    g = _centroids(gts)
    p = _centroids(preds)
    dist = np.hypot(g[:, None, 0] - p[None, :, 0], g[:, None, 1] - p[None, :, 1])
    nearest = np.argmin(dist, axis=1)  # first index wins ties
    pairs = [(i, int(j), float(dist[i, j])) for i, j in enumerate(nearest)]
    return MatchSet(pairs=pairs, unmatched_gt=[])


def sensitivity(match_set, n):
    if n <= 0:
        raise ValueError("threshold n must be positive")
    if match_set.n_gt == 0:
        raise NoGroundTruth("no ground-truth boxes")
    hits = sum(1 for _, _, d in match_set.pairs if d < n)
    return 100.0 * hits / match_set.n_gt


def angle_residual(a_true, a_pred, fold=False):
    d = abs(a_true - a_pred)
    return min(d, 180.0 - d) if fold else d


def mean_angle_error(gts, preds, match_set, n, fold=False):
    """Mean absolute angle difference over pairs closer than ``n`` pixels."""
    errs = [angle_residual(gts[i].vessel_angle_deg, preds[j].vessel_angle_deg, fold)
            for i, j, d in match_set.pairs if d < n]
    if not errs:
        raise NoMatches(f"no matched pair closer than {n} px")
    return float(np.mean(errs))


def sweep(gts, preds, n_range, fold=False):
    n_values = [float(n) for n in n_range]
    if any(n <= 0 for n in n_values) or any(b < a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_range must be positive and ascending")
    ms = match(gts, preds)
    sens, errs = [], []
    for n in n_values:
        sens.append(sensitivity(ms, n))
        try:
            errs.append(mean_angle_error(gts, preds, ms, n, fold))
        except NoMatches:
            errs.append(None)
    return EvalCurve(n_values, sens, errs)


def _fmt(x):
    if x is None:
        return ABSENT
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.6f}"


def curve_to_csv(curve):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_FIELDS)
    for n, s, e in curve.rows():
        writer.writerow([_fmt(n), f"{s:.6f}", ABSENT if e is None else f"{e:.6f}"])
    return buf.getvalue()


class CsvFormatError(ValueError):
    pass


def read_gate_csv(path):
    """Read gates from ``x_center,y_center,angle_deg,score`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_FIELDS:
            raise CsvFormatError(
                f"{path}: expected header {','.join(CSV_FIELDS)}, got {header}")
        gates = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, y, a, s = (float(v) for v in row)
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from exc
            gates.append(GateCandidate.at(x, y, a, s))
    return gates


def gates_to_csv(gates):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for g in gates:
        cx, cy = g.centroid
        writer.writerow([f"{cx:.6f}", f"{cy:.6f}", f"{g.vessel_angle_deg:.6f}", f"{g.score:.6f}"])
    return buf.getvalue()


def plot_curve(curve, path):
    """Two stacked panels: sensitivity and mean angle error against n."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(curve.n_values, curve.sensitivity, marker="o", ms=3)
    ax1.set_ylabel("sensitivity (%)")
    ax1.set_ylim(0, 105)
    errs = [np.nan if e is None else e for e in curve.mean_angle_err]
    ax2.plot(curve.n_values, errs, marker="o", ms=3, color="tab:red")
    ax2.set_ylabel("mean L1 angle error (deg)")
    ax2.set_xlabel("n (pixels)")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
