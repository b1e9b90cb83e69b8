"""Detection loss with an angle-regression term, plus its analytic gradient.

The classification/box part is the usual two-stage detector objective;
positive ROIs additionally regress the vessel angle with a smooth-L1 penalty
weighted by ``mu``. Box parameters are treated as an opaque 4-vector and
angle residuals are raw differences in whatever unit the caller uses.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, KinkError

KINK_TOL = 1e-9


@dataclass
class RoiBatch:
    p: np.ndarray  # (N,) predicted object probability
    t: np.ndarray  # (N, 4) predicted box parameters
    a: np.ndarray  # (N,) predicted angle
    p_star: np.ndarray  # (N,) 0/1 labels
    t_star: np.ndarray  # (N, 4)
    a_star: np.ndarray  # (N,)

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.p_star = np.atleast_1d(np.asarray(self.p_star, dtype=float))
        self.t_star = np.atleast_2d(np.asarray(self.t_star, dtype=float))
        self.a_star = np.atleast_1d(np.asarray(self.a_star, dtype=float))
        n = self.p.shape[0]
        shapes_ok = (
            self.a.shape == (n,) and self.p_star.shape == (n,) and self.a_star.shape == (n,)
            and self.t.shape == (n, 4) and self.t_star.shape == (n, 4)
        )
        if not shapes_ok:
            raise ValueError("predictions and truths must align index-wise")
        if not np.isin(self.p_star, (0.0, 1.0)).all():
            raise ValueError("p_star must be 0 or 1")


@dataclass
class LossConfig:
    lam: float = 1.0
    mu: float = 10.0
    n_cls: int = 1
    n_reg: int = 1

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lam and mu must be non-negative")
        if self.n_cls < 1 or self.n_reg < 1:
            raise ValueError("n_cls and n_reg must be >= 1")


def smooth_l1(x):
    """0.5 x**2 for |x| < 1, |x| - 0.5 otherwise; summed over vector input."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    vals = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return float(vals.sum()) if vals.ndim else float(vals)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def _smooth_l1_rows(x):
    ax = np.abs(x)
    vals = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return vals.reshape(vals.shape[0], -1).sum(axis=1)


def _check_domain(p, p_star):
    p = np.asarray(p, dtype=float)
    p_star = np.asarray(p_star, dtype=float)
    bad = ((p_star == 1) & ~((p > 0) & (p <= 1))) | ((p_star == 0) & ~((p >= 0) & (p < 1)))
    if np.any(bad):
        raise DomainError(f"probability outside the admissible range: {p[bad].tolist()}")


def _cls_terms(p, p_star):
    _check_domain(p, p_star)
    # only evaluate the log of the branch that is switched on
    pos = np.log(np.where(p_star == 1, p, 1.0))
    neg = np.log(np.where(p_star == 0, 1.0 - p, 1.0))
    return -(pos + neg)


def cls_loss(p, p_star):
    """Binary log loss ``-[p* ln p + (1 - p*) ln(1 - p)]``."""
    return float(_cls_terms(np.atleast_1d(p), np.atleast_1d(p_star)).sum())


def faster_rcnn_loss(batch, cfg=None):
    cfg = cfg or LossConfig()
    cls = _cls_terms(batch.p, batch.p_star).sum() / cfg.n_cls
    box = (batch.p_star * _smooth_l1_rows(batch.t - batch.t_star)).sum() / cfg.n_reg
    return float(cls + cfg.lam * box)


def angle_loss(batch, cfg=None):
    cfg = cfg or LossConfig()
    return float((batch.p_star * _smooth_l1_rows(batch.a - batch.a_star)).sum() / cfg.n_reg)


def total_loss(batch, cfg=None):
    cfg = cfg or LossConfig()
    return faster_rcnn_loss(batch, cfg) + cfg.mu * angle_loss(batch, cfg)


@dataclass
class LossGradient:
    p: np.ndarray
    t: np.ndarray
    a: np.ndarray

    def flat(self):
        return np.concatenate([self.p, self.t.ravel(), self.a])


def total_loss_gradient(batch, cfg=None):
    """Partial derivatives of :func:`total_loss` w.r.t. ``p``, ``t`` and ``a``.

    Raises
    ------
    KinkError
        A residual sits on the smooth-L1 kink (|x| = 1), where the second
        derivative is discontinuous and finite differences are unreliable.
    """
    cfg = cfg or LossConfig()
    _check_domain(batch.p, batch.p_star)
    dt = batch.t - batch.t_star
    da = batch.a - batch.a_star
    positive = batch.p_star == 1  # gated-off rows never see the kink
    for name, resid in (("t", dt), ("a", da)):
        on_kink = (np.abs(np.abs(resid) - 1.0) <= KINK_TOL).reshape(len(positive), -1)
        on_kink &= positive[:, None]
        if np.any(on_kink):
            raise KinkError(f"{name} residual on the smooth-L1 kink")

    p, ps = batch.p, batch.p_star
    with np.errstate(divide="ignore", invalid="ignore"):
        g_pos = np.where(ps == 1, -1.0 / np.where(ps == 1, p, 1.0), 0.0)
        g_neg = np.where(ps == 0, 1.0 / np.where(ps == 0, 1.0 - p, 1.0), 0.0)
    g_p = (g_pos + g_neg) / cfg.n_cls
    g_t = cfg.lam / cfg.n_reg * ps[:, None] * smooth_l1_grad(dt)
    g_a = cfg.mu / cfg.n_reg * ps * smooth_l1_grad(da)
    return LossGradient(g_p, g_t, g_a)
