"""Fixed-step integrators for dY/dt = A(t, Y) Y.

Families
--------
``classical_rk``  explicit Runge-Kutta with f(t, y) = A(t, y) y
``classical_2n``  the same method in Williamson 2N-storage form
``lie_cf_2n``     commutator-free Lie group method in 2N-storage form: one
                  exponential per stage, two state-sized registers
``rkmk``          Runge-Kutta-Munthe-Kaas with truncated dexpinv
``generic_cf``    time-ordered products of exponentials of linear
                  combinations of stage slopes (Crouch-Grossman and friends)
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Callable, Optional

import numpy as np

from .smallmat import expm, expm_minus_identity
from .tableau import Tableau, TwoNScheme, as_tableau

FAMILIES = ("classical_rk", "classical_2n", "lie_cf_2n", "rkmk", "generic_cf")

# B_1 = -1/2 convention
BERNOULLI = (
    Fraction(1),
    Fraction(-1, 2),
    Fraction(1, 6),
    Fraction(0),
    Fraction(-1, 30),
    Fraction(0),
    Fraction(1, 42),
    Fraction(0),
    Fraction(-1, 30),
)


class ConfigurationError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    """The numerical state stopped being finite."""

    def __init__(self, t, message=None):
        super().__init__(message or f"non-finite state at t={t!r}")
        self.t = t


@dataclass(frozen=True)
class Problem:
    """dY/dt = rhs(t, Y) @ Y, with rhs(t, Y) a square matrix."""

    name: str
    rhs: Callable
    state_shape: tuple
    dtype: type = float
    invariant: Optional[Callable] = None


@dataclass(frozen=True, eq=False)
class CFCoefficients:
    """Exponent coefficients of a commutator-free method.

    ``alpha[i, l, j]`` weights stage slope ``K_j`` inside the ``l``-th
    exponential of stage ``i``; ``beta[l, j]`` does the same for the output.
    Exponential ``l = 0`` acts first (rightmost in the product). Unused
    exponentials are all-zero rows.
    """

    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True, eq=False)
class StepperConfig:
    scheme: object
    family: str
    dexpinv_truncation: Optional[int] = None
    cf_coefficients: Optional[CFCoefficients] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if self.family in ("classical_2n", "lie_cf_2n") and not isinstance(
            self.scheme, TwoNScheme
        ):
            raise ConfigurationError(f"{self.family} needs a 2N-storage scheme")
        if self.family == "rkmk" and self.truncation < 1:
            raise ConfigurationError("dexpinv truncation must be >= 1")
        if self.family == "generic_cf":
            if self.cf_coefficients is None:
                raise ConfigurationError("generic_cf needs cf_coefficients")
            check_cf_consistency(self.cf_coefficients, as_tableau(self.scheme))

    @property
    def truncation(self):
        if self.dexpinv_truncation is not None:
            return self.dexpinv_truncation
        return self.scheme.order

    @property
    def order(self):
        return self.scheme.order

    @property
    def label(self):
        return f"{self.scheme.name}/{self.family}"


def _rk_arrays(t):
    return t.a.tolist(), t.b.tolist(), t.c.tolist()


def step_classical_rk(tableau, prob, t0, h, Y):
    a, b, c = _rk_arrays(as_tableau(tableau))
    ks = []
    for i in range(len(b)):
        Yi = Y
        for j in range(i):
            if a[i][j] != 0.0:
                Yi = Yi + (h * a[i][j]) * ks[j]
        ks.append(prob.rhs(t0 + c[i] * h, Yi) @ Yi)
    out = Y
    for i in range(len(b)):
        if b[i] != 0.0:
            out = out + (h * b[i]) * ks[i]
    return out


def step_classical_2n(scheme, prob, t0, h, y):
    dy = 0.0
    for Ak, Bk, Ck in zip(scheme.A.tolist(), scheme.B.tolist(), scheme.C.tolist()):
        dy = Ak * dy + h * (prob.rhs(t0 + Ck * h, y) @ y)
        y = y + Bk * dy
    return y


def step_lie_cf_2n(scheme, prob, t0, h, Y):
    """One step of the low-storage commutator-free Lie group method.

    Exactly ``s`` right-hand-side evaluations and ``s`` exponentials; only
    ``Y`` and the accumulated increment ``dY`` are kept between stages.
    """
    dY = 0.0
    for Ak, Bk, Ck in zip(scheme.A.tolist(), scheme.B.tolist(), scheme.C.tolist()):
        dY = Ak * dY + h * prob.rhs(t0 + Ck * h, Y)
        Y = expm(Bk * dY) @ Y
    return Y


def dexpinv(U, V, p):
    """Truncated inverse derivative of exp: sum_{k<p} B_k/k! ad_U^k(V)."""
    if p < 1:
        raise ValueError("truncation must be >= 1")
    if p > len(BERNOULLI):
        raise ValueError(f"truncation above {len(BERNOULLI)} not supported")
    out = V
    ad = V
    for k in range(1, p):
        ad = U @ ad - ad @ U
        coef = BERNOULLI[k] / factorial(k)
        if coef:
            out = out + float(coef) * ad
    return out


def _rkmk_exponent(tableau, trunc, prob, t0, h, Y):
    # exponent V of the RKMK update Y -> expm(V) Y, or None if it is zero
    a, b, c = _rk_arrays(as_tableau(tableau))
    kt = []
    for i in range(len(b)):
        U = None
        for j in range(i):
            if a[i][j] != 0.0:
                term = (h * a[i][j]) * kt[j]
                U = term if U is None else U + term
        Yi = Y if U is None else expm(U) @ Y
        K = prob.rhs(t0 + c[i] * h, Yi)
        kt.append(K if U is None else dexpinv(U, K, trunc))
    V = None
    for i in range(len(b)):
        if b[i] != 0.0:
            term = (h * b[i]) * kt[i]
            V = term if V is None else V + term
    return V


def step_rkmk(tableau, trunc, prob, t0, h, Y):
    V = _rkmk_exponent(tableau, trunc, prob, t0, h, Y)
    return Y if V is None else expm(V) @ Y


def _ordered_exp_product(coefs, ks, h, Y):
    for row in coefs:
        X = None
        for j, w in enumerate(row):
            if w != 0.0:
                term = (h * w) * ks[j]
                X = term if X is None else X + term
        if X is not None:
            Y = expm(X) @ Y
    return Y


def step_generic_cf(cfg, prob, t0, h, Y):
    t = as_tableau(cfg.scheme)
    alpha = cfg.cf_coefficients.alpha.tolist()
    beta = cfg.cf_coefficients.beta.tolist()
    c = t.c.tolist()
    ks = []
    for i in range(t.stages):
        Yi = _ordered_exp_product(alpha[i], ks, h, Y)
        ks.append(prob.rhs(t0 + c[i] * h, Yi))
    return _ordered_exp_product(beta, ks, h, Y)


def check_cf_consistency(coefs, tableau, tol=1e-12):
    s = tableau.stages
    alpha, beta = coefs.alpha, coefs.beta
    if alpha.ndim != 3 or alpha.shape[0] != s or alpha.shape[2] != s:
        raise ConfigurationError(f"alpha must have shape ({s}, L, {s})")
    if beta.ndim != 2 or beta.shape[1] != s:
        raise ConfigurationError(f"beta must have shape (L, {s})")
    for i in range(s):
        if np.any(alpha[i, :, i:] != 0.0):
            raise ConfigurationError(f"stage {i + 1} uses slopes not yet computed")
    if np.max(np.abs(alpha.sum(axis=1) - tableau.a), initial=0.0) > tol:
        raise ConfigurationError("alpha does not sum to the tableau's a")
    if np.max(np.abs(beta.sum(axis=0) - tableau.b), initial=0.0) > tol:
        raise ConfigurationError("beta does not sum to the tableau's b")


def crouch_grossman_coefficients(tableau):
    """One exponential per previous slope: alpha[i, l, j] = a_ij if l == j."""
    t = as_tableau(tableau)
    s = t.stages
    alpha = np.zeros((s, s, s))
    for i in range(s):
        for j in range(i):
            alpha[i, j, j] = t.a[i, j]
    return CFCoefficients(alpha, np.diag(t.b))


def lie_cf_coefficients(tableau):
    """Encoding in which stage ``i`` reuses every exponential of stage ``i-1``.

    With the rows of ``a`` extended by ``b``, the ``l``-th exponential of
    any stage carries ``a[l+1] - a[l]``. For a tableau coming from a 2N
    scheme this reproduces :func:`step_lie_cf_2n`; for other tableaux it
    is the same exponential-reusing format applied to arbitrary coefficients.
    """
    t = as_tableau(tableau)
    s = t.stages
    ext = np.vstack([t.a, t.b])
    increments = ext[1:] - ext[:-1]
    alpha = np.zeros((s, max(s - 1, 1), s))
    for i in range(s):
        alpha[i, :i] = increments[:i]
    return CFCoefficients(alpha, increments.copy())


def make_stepper(cfg):
    """Return ``step(prob, t0, h, Y)`` for a configuration."""
    scheme = cfg.scheme
    if cfg.family == "classical_rk":
        t = as_tableau(scheme)
        return lambda prob, t0, h, Y: step_classical_rk(t, prob, t0, h, Y)
    if cfg.family == "classical_2n":
        return lambda prob, t0, h, Y: step_classical_2n(scheme, prob, t0, h, Y)
    if cfg.family == "lie_cf_2n":
        return lambda prob, t0, h, Y: step_lie_cf_2n(scheme, prob, t0, h, Y)
    if cfg.family == "rkmk":
        t = as_tableau(scheme)
        p = cfg.truncation
        return lambda prob, t0, h, Y: step_rkmk(t, p, prob, t0, h, Y)
    return lambda prob, t0, h, Y: step_generic_cf(cfg, prob, t0, h, Y)


def time_grid(t0, t1, h):
    """Yield ``(t, dt)`` for fixed steps of ``h``; the last one is shortened
    to land on ``t1``."""
    if not h > 0.0:
        raise ValueError("step size must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    tol = 1e-12 * h
    k = 0
    while True:
        t = t0 + k * h
        remaining = t1 - t
        if remaining <= tol:
            return
        yield t, min(h, remaining)
        k += 1


def integrate(cfg, prob, t0, t1, h, Y0, observer=None):
    """Integrate from ``t0`` to ``t1`` with step ``h`` and return ``Y(t1)``.

    ``observer(t, Y)`` is called with the initial state and after every step.
    """
    step = make_stepper(cfg)
    Y = np.array(Y0, dtype=prob.dtype)
    if observer is not None:
        observer(t0, Y)
    with np.errstate(over="ignore", invalid="ignore"):
        for t, dt in time_grid(t0, t1, h):
            Y = step(prob, t, dt, Y)
            if not np.isfinite(Y).all():
                raise DivergenceError(t + dt)
            if observer is not None:
                observer(t + dt, Y)
    return Y


def integrate_compensated(cfg, prob, t0, t1, h, Y0):
    """RKMK integration for reference solutions.

    The state is carried as an unevaluated sum ``hi + lo`` and every step
    adds ``(exp(V) - I) Y`` by compensated summation, so the rounding per
    step is proportional to the size of the increment and not of ``Y``.
    """
    if cfg.family != "rkmk":
        raise ConfigurationError("compensated integration is only for rkmk")
    t = as_tableau(cfg.scheme)
    p = cfg.truncation
    hi = np.array(Y0, dtype=prob.dtype)
    lo = np.zeros_like(hi)
    with np.errstate(over="ignore", invalid="ignore"):
        for tk, dt in time_grid(t0, t1, h):
            Y = hi + lo
            V = _rkmk_exponent(t, p, prob, tk, dt, Y)
            if V is None:
                continue
            inc = expm_minus_identity(V) @ Y + lo
            total = hi + inc
            lo = inc - (total - hi)
            hi = total
            if not np.isfinite(hi).all():
                raise DivergenceError(tk + dt)
    return hi + lo
