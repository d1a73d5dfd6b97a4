"""Training objective: L1 camera loss, three-part depth loss, and the
closed-form optimal-confidence utilities, plus a generic central
finite-difference gradient checker.

All pixel losses are means over pixels so the loss scale is independent
of resolution.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "camera_loss",
    "spatial_gradient",
    "depth_loss",
    "optimal_confidence",
    "marginal_penalty",
    "confidence_objective",
    "finite_diff_grad",
    "finite_diff_check",
]


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.2
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0.0 or self.gamma <= 0.0:
            raise ValueError(f"loss weights must be positive: {self}")


@dataclass(frozen=True)
class LossBreakdown:
    cam: float
    reg: float
    unc: float
    grad: float

    @property
    def total(self):
        return self.cam + self.reg + self.unc + self.grad


def camera_loss(pred, gt):
    """L1 over translation (3), flattened rotation (9), and focal (1)."""
    return float(
        np.abs(pred.translation - gt.translation).sum()
        + np.abs(pred.rotation - gt.rotation).sum()
        + abs(pred.focal - gt.focal)
    )


def spatial_gradient(d):
    """Forward differences in x and y; the replicated edge has gradient 0."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 2 or d.shape[1] < 2:
        raise ValueError(f"spatial_gradient needs an H>=2, W>=2 grid, got {d.shape}")
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[:, :-1] = d[:, 1:] - d[:, :-1]
    gy[:-1, :] = d[1:, :] - d[:-1, :]
    return gx, gy


def depth_loss(pred, gt_depth, weights):
    """Regression, confidence-weighted uncertainty, and gradient terms.

    reg  = mean (Dhat - D)^2
    unc  = mean (gamma (Dhat - D)^2 * C - alpha log C)
    grad = mean (|dx Dhat - dx D| + |dy Dhat - dy D|)
    """
    d_hat = pred.depth
    conf = pred.confidence
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    if d_hat.shape != gt_depth.shape:
        raise ValueError(f"depth shape {d_hat.shape} != gt shape {gt_depth.shape}")
    if np.any(conf <= 0.0):
        raise ValueError("confidence map must be strictly positive")
    r_sq = (d_hat - gt_depth) ** 2
    reg = float(r_sq.mean())
    unc = float((weights.gamma * r_sq * conf - weights.alpha * np.log(conf)).mean())
    gx_p, gy_p = spatial_gradient(d_hat)
    gx_g, gy_g = spatial_gradient(gt_depth)
    grad = float((np.abs(gx_p - gx_g) + np.abs(gy_p - gy_g)).mean())
    return LossBreakdown(cam=0.0, reg=reg, unc=unc, grad=grad)


def depth_loss_backward(pred, gt_depth, weights):
    """Gradients of (reg + unc + grad) w.r.t. predicted depth and confidence."""
    d_hat = pred.depth
    conf = pred.confidence
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    n = d_hat.size
    resid = d_hat - gt_depth

    d_depth = 2.0 * resid / n  # reg
    d_depth += 2.0 * weights.gamma * resid * conf / n  # unc through residual
    d_conf = (weights.gamma * resid**2 - weights.alpha / conf) / n

    gx_p, gy_p = spatial_gradient(d_hat)
    gx_g, gy_g = spatial_gradient(gt_depth)
    sx = np.sign(gx_p - gx_g) / n
    sy = np.sign(gy_p - gy_g) / n
    # adjoint of the forward-difference operators
    d_depth[:, 1:] += sx[:, :-1]
    d_depth[:, :-1] -= sx[:, :-1]
    d_depth[1:, :] += sy[:-1, :]
    d_depth[:-1, :] -= sy[:-1, :]
    return d_depth, d_conf


def confidence_objective(conf, r_sq, weights):
    """Per-pixel uncertainty objective J(C) = gamma r^2 C - alpha log C."""
    if conf <= 0.0:
        raise ValueError(f"confidence must be > 0, got {conf}")
    return weights.gamma * r_sq * conf - weights.alpha * np.log(conf)


def optimal_confidence(r_sq, weights):
    """Unique minimizer of J: alpha / (gamma r^2); requires r^2 > 0."""
    if r_sq <= 0.0:
        raise ValueError(
            f"optimal confidence is undefined for r^2={r_sq}; "
            "a zero residual drives confidence to infinity"
        )
    return weights.alpha / (weights.gamma * r_sq)


def marginal_penalty(r_sq, weights):
    """min_C J(C) = alpha - alpha log(alpha / (gamma r^2))."""
    if r_sq <= 0.0:
        raise ValueError(f"marginal penalty is undefined for r^2={r_sq}")
    return weights.alpha - weights.alpha * np.log(
        weights.alpha / (weights.gamma * r_sq)
    )


def finite_diff_grad(f, point, step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = grad.ravel()
    p = point.copy().ravel()
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + step
        f_plus = f(p.reshape(point.shape))
        p[i] = orig - step
        f_minus = f(p.reshape(point.shape))
        p[i] = orig
        if not np.isfinite(f_plus) or not np.isfinite(f_minus):
            raise FloatingPointError(f"non-finite evaluation at coordinate {i}")
        flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def finite_diff_check(f, analytic_grad, point, step=1e-5):
    """Max relative error of an analytic gradient vs central differences.

    Error is measured relative to max(1, |analytic|) per coordinate.
    """
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    numeric = finite_diff_grad(f, point, step)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
