"""Dense small-matrix helpers: products, matrix exponential, hat map, norms.

Matrices are plain numpy arrays (float64 or complex128). Vectors may be
1-D arrays and are treated as n x 1 columns wherever that matters.
"""
import numba
import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DegeneracyError(ValueError):
    """Input matrix is (numerically) rank deficient."""


_THETA = 0.5


@numba.njit(cache=True)
def _matmul(a, b):
    n = a.shape[0]
    out = np.zeros_like(a)
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            for j in range(n):
                out[i, j] += aik * b[k, j]
    return out


@numba.njit(cache=True)
def _solve(a, b):
    # Gaussian elimination with partial pivoting, square right-hand side
    n = a.shape[0]
    a = a.copy()
    b = b.copy()
    for k in range(n):
        p = k
        big = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                p = i
        if p != k:
            for j in range(n):
                a[k, j], a[p, j] = a[p, j], a[k, j]
                b[k, j], b[p, j] = b[p, j], b[k, j]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            if f != 0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
                for j in range(n):
                    b[i, j] -= f * b[k, j]
    for k in range(n - 1, -1, -1):
        for j in range(n):
            s = b[k, j]
            for i in range(k + 1, n):
                s -= a[k, i] * b[i, j]
            b[k, j] = s / a[k, k]
    return b


@numba.njit(cache=True)
def _expm_kernel(m, theta):
    n = m.shape[0]
    norm = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(m[i, j])
        norm = max(norm, s)
    squarings = 0
    x = m.copy()
    if not np.isfinite(norm):
        return x * np.nan
    if norm > theta:
        squarings = int(np.ceil(np.log2(norm / theta)))
        x = x * (0.5**squarings)
    # diagonal [6/6] Pade: 1, 1/2, 5/44, 1/66, 1/792, 1/15840, 1/665280
    x2 = _matmul(x, x)
    x4 = _matmul(x2, x2)
    x6 = _matmul(x4, x2)
    odd = (1.0 / 66.0) * x2 + (1.0 / 15840.0) * x4
    even = (5.0 / 44.0) * x2 + (1.0 / 792.0) * x4 + (1.0 / 665280.0) * x6
    for i in range(n):
        odd[i, i] += 0.5
        even[i, i] += 1.0
    u = _matmul(x, odd)
    r = _solve(even - u, even + u)
    for _ in range(squarings):
        r = _matmul(r, r)
    return r


def _square(m):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    return m


def mat_mul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def expm(m):
    """Matrix exponential by scaling and squaring of the [6/6] Pade approximant.

    The matrix is scaled by 2**-s so that its 1-norm is at most 0.5; the
    truncation error of the approximant is then below double rounding.
    ``expm(0)`` is the identity exactly.
    """
    m = _square(m)
    dtype = np.complex128 if np.iscomplexobj(m) else np.float64
    return _expm_kernel(np.ascontiguousarray(m, dtype=dtype), _THETA)


def expm_minus_identity(m):
    """``exp(m) - I`` without the cancellation of forming ``expm(m)`` first.

    Taylor series for small arguments; the absolute error is then a few
    rounding units of ``|m|`` and not of 1.
    """
    m = _square(m)
    norm = float(np.max(np.sum(np.abs(m), axis=0), initial=0.0))
    if not norm < _THETA:
        return expm(m) - np.eye(m.shape[0])
    term = m
    out = m.copy()
    k = 1
    while True:
        k += 1
        term = (term @ m) / k
        out = out + term
        if np.max(np.abs(term), initial=0.0) <= 1e-17 * np.max(np.abs(out)):
            return out


def hat(v):
    """Map a 3-vector onto the skew matrix whose action is ``v x .``."""
    v1, v2, v3 = (float(x) for x in v)
    return np.array(
        [
            [0.0, -v3, v2],
            [v3, 0.0, -v1],
            [-v2, v1, 0.0],
        ]
    )


def commutator(u, v):
    u = _square(u)
    v = _square(v)
    if u.shape != v.shape:
        raise ShapeError(f"commutator of {u.shape} and {v.shape}")
    return u @ v - v @ u


def norm2(m):
    """Spectral norm of a matrix, Euclidean norm of a vector."""
    m = np.asarray(m)
    if m.ndim == 1 or 1 in m.shape:
        return float(np.linalg.norm(m.ravel()))
    return float(np.linalg.norm(m, 2))


def gram_schmidt_orthonormalize(m):
    """Orthonormalize the columns of ``m`` (modified Gram-Schmidt, two passes).

    Equivalent to the Q factor of a QR factorization whose R has a positive
    diagonal.
    """
    m = _square(np.asarray(m, dtype=float))
    scale = norm2(m)
    n = m.shape[0]
    q = np.array(m, dtype=float)
    for k in range(n):
        col = q[:, k].copy()
        for _ in range(2):
            for j in range(k):
                col -= (q[:, j] @ col) * q[:, j]
        pivot = np.linalg.norm(col)
        if scale == 0.0 or pivot < 1e-12 * scale:
            raise DegeneracyError(f"column {k} is linearly dependent")
        q[:, k] = col / pivot
    return q
