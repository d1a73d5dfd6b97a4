"""Dense float64 array helpers and activation functions.

Everything here is a pure function of its inputs; arrays are treated as
immutable and all arithmetic is done in 64-bit floating point.
"""

import numpy as np

__all__ = [
    "as_matrix",
    "as_vector",
    "matmul",
    "elu",
    "elu_grad",
    "leaky_relu",
    "leaky_relu_grad",
    "softmax_masked",
    "l2_norm",
    "cosine_similarity",
    "euclidean_distance",
]


def as_matrix(a, name="matrix"):
    """Coerce to a finite float64 2-D array, raising on anything else."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name="vector"):
    """Coerce to a finite float64 1-D array, raising on anything else."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def elu(x):
    """ELU activation: x for x >= 0, exp(x) - 1 otherwise."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    """Derivative of ELU."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


def leaky_relu(x, slope=0.2):
    """LeakyReLU activation with negative-side slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(x, slope=0.2):
    """Derivative of LeakyReLU."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, 1.0, slope)


def softmax_masked(logits, support):
    """Softmax restricted to an index set; entries off the support are 0.

    Uses the max-shift trick for overflow safety; the result is
    mathematically identical to the plain exponential form.
    """
    logits = as_vector(logits, "logits")
    support = np.asarray(support, dtype=np.intp)
    if support.size == 0:
        raise ValueError("softmax_masked requires a non-empty support")
    sel = logits[support]
    e = np.exp(sel - sel.max())
    out = np.zeros_like(logits)
    out[support] = e / e.sum()
    return out


def l2_norm(v):
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(as_vector(v)))


def cosine_similarity(x, y):
    """Cosine similarity; returns 0 when either vector is zero.

    The zero-vector convention keeps graph construction total: a token
    with an all-zero feature row is simply "similar to nothing".
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def euclidean_distance(x, y):
    """Euclidean distance between two vectors."""
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y))
