"""The five benchmark systems with their initial data and reference solutions."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .elliptic import jacobi_sn_cn_dn
from .integrators import Problem, StepperConfig, integrate_compensated
from .smallmat import gram_schmidt_orthonormalize, norm2
from .tableau import registry_lookup

# d(h) below this is dominated by rounding in any of the benchmarks
ROUNDOFF_FLOOR = 1e-14

INERTIA = (7.0 / 8.0, 5.0 / 8.0, 1.0 / 4.0)
RIGID_Y0 = (-math.sqrt(8.0) / 3.0, 0.0, 1.0 / 3.0)
VDP_MU = 60.0


@dataclass
class Reference:
    Y: np.ndarray
    # estimated error of Y (distance to a coarser self-reference); 0 if exact
    consistency: float

    @property
    def floor(self):
        return max(self.consistency, ROUNDOFF_FLOOR)


@dataclass(eq=False)
class BenchmarkCase:
    name: str
    problem: Problem
    Y0: np.ndarray
    t0: float
    t1: float
    distance: Callable
    drift: Optional[Callable] = None
    exact: Optional[Callable] = None
    reference_scheme: str = "BUTCHER65"
    reference_h: Optional[float] = None
    _reference: Optional[Reference] = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def reference(self):
        """Reference state at ``t1``; computed once and cached."""
        with self._lock:
            if self._reference is None:
                self._reference = self._compute_reference()
            return self._reference

    def _compute_reference(self):
        if self.exact is not None:
            return Reference(np.asarray(self.exact(self.t1)), 0.0)
        fine = self.self_reference(self.reference_h)
        coarse = self.self_reference(2.0 * self.reference_h)
        return Reference(fine, self.distance(fine, coarse))

    def self_reference(self, h):
        cfg = StepperConfig(registry_lookup(self.reference_scheme), "rkmk")
        return integrate_compensated(cfg, self.problem, self.t0, self.t1, h, self.Y0)


def euclidean(Y, Z):
    return float(np.linalg.norm(np.ravel(Y - Z)))


def spectral(Y, Z):
    return norm2(Y - Z)


def orthogonality_drift(Y):
    return norm2(Y.conj().T @ Y - np.eye(Y.shape[0]))


def unitary_drift(Y):
    return max(orthogonality_drift(Y), abs(np.linalg.det(Y) - 1.0))


# Example 1: free rigid body, Y = angular momentum on the unit sphere


def rigid_body_rhs(t, Y):
    i1, i2, i3 = INERTIA
    w1, w2, w3 = Y[0] / i1, Y[1] / i2, Y[2] / i3
    # -hat(I^-1 Y)
    return np.array([[0.0, w3, -w2], [-w3, 0.0, w1], [w2, -w1, 0.0]])


def rigid_body_constants(inertia=INERTIA, y0=RIGID_Y0):
    """Parameters of the elliptic-function solution for the given data."""
    i1, i2, i3 = inertia
    y0 = np.asarray(y0, dtype=float)
    energy = 0.5 * float(y0 @ (y0 / np.asarray(inertia)))
    y02 = float(y0 @ y0)
    a = y02 / (2.0 * energy)
    b = 2.0 * energy / math.sqrt(y02)
    return {
        "energy": energy,
        "a": a,
        "b": b,
        "alpha": math.sqrt(a * i2 * (a - i3) / (i2 - i3)) * b,
        "beta": math.sqrt(a * i2 * (i1 - a) / (i1 - i2)) * b,
        "mu": math.sqrt(a * (i1 - a) * (i2 - i3) / (i1 * i2 * i3)) * b,
        "k": math.sqrt((i1 - i2) * (a - i3) / (i1 - a) / (i2 - i3)),
        "delta": math.sqrt(i3 * (i1 - a) * a / (i1 - i3)) * b,
        "gamma": math.sqrt(i1 * (a - i3) * a / (i1 - i3)) * b,
    }


_RIGID = rigid_body_constants()


def rigid_body_exact(t):
    k = _RIGID
    sn, cn, dn = jacobi_sn_cn_dn(k["mu"] * t, k["k"] ** 2)
    return np.array([-k["gamma"] * cn, k["alpha"] * sn, k["delta"] * dn])


def rigid_body_problem(t1=3.0):
    y0 = np.array(RIGID_Y0)
    r0 = float(np.linalg.norm(y0))
    return BenchmarkCase(
        name="rigid",
        problem=Problem("rigid", rigid_body_rhs, (3,), float),
        Y0=y0,
        t0=0.0,
        t1=t1,
        distance=euclidean,
        drift=lambda Y: abs(float(np.linalg.norm(Y)) - r0),
        exact=rigid_body_exact,
    )


# Example 2: SO(5)


def so5_rhs(t, Y):
    d = np.diagonal(Y, 1)
    return np.diag(d, 1) - np.diag(d, -1)


def so5_initial():
    """Fixed orthogonal start: orthonormalized M_ij = sin(i*j + 5i), 1-based.

    The product term matters: any sin(f(i) + g(j)) has rank 2.
    """
    i, j = np.meshgrid(np.arange(1, 6), np.arange(1, 6), indexing="ij")
    return gram_schmidt_orthonormalize(np.sin(i * j + 5.0 * i))


def so5_problem():
    return BenchmarkCase(
        name="so5",
        problem=Problem("so5", so5_rhs, (5, 5), float),
        Y0=so5_initial(),
        t0=0.0,
        t1=5.0,
        distance=spectral,
        drift=orthogonality_drift,
        reference_h=1.0 / 1024.0,
    )


# Example 3: SU(3) gradient flow of a single link in a fixed background


def su3_background():
    """H_jk = sin(j + 3k) + i cos(2j - k), 1-based."""
    j, k = np.meshgrid(np.arange(1, 4), np.arange(1, 4), indexing="ij")
    return np.sin(j + 3.0 * k) + 1j * np.cos(2.0 * j - k)


def su3_project(M):
    """Traceless anti-Hermitian part of ``M``."""
    X = M - M.conj().T
    return 0.5 * X - (np.trace(X) / 6.0) * np.eye(M.shape[0])


_H = su3_background()


def su3_rhs(t, Y):
    return -su3_project(_H @ Y)


def su3_initial():
    return np.diag(np.exp(np.array([1j, 1j, -2j])))


def su3_flow_problem():
    return BenchmarkCase(
        name="su3",
        problem=Problem("su3", su3_rhs, (3, 3), complex),
        Y0=su3_initial(),
        t0=0.0,
        t1=10.0,
        distance=spectral,
        drift=unitary_drift,
        reference_h=1.0 / 1024.0,
    )


# Example 4: van der Pol, Y = (x, dx/dt)


def vdp_rhs(t, Y):
    return np.array([[0.0, 1.0], [-1.0, VDP_MU * (1.0 - Y[0] * Y[0])]])


def vdp_problem():
    return BenchmarkCase(
        name="vdp",
        problem=Problem("vdp", vdp_rhs, (2,), float),
        Y0=np.array([1.0, 1.0]),
        t0=0.0,
        t1=2.0,
        distance=euclidean,
        reference_h=1.0 / 8192.0,
    )


# Example 5: non-autonomous SO(3)


def so3t_rhs(t, Y):
    t2 = t * t
    return np.array([[0.0, t, 1.0], [-t, 0.0, -t2], [-1.0, t2, 0.0]])


def so3_nonautonomous_problem():
    return BenchmarkCase(
        name="so3t",
        problem=Problem("so3t", so3t_rhs, (3, 3), float),
        Y0=np.eye(3),
        t0=0.0,
        t1=1.0,
        distance=spectral,
        drift=orthogonality_drift,
        reference_h=1.0 / 1024.0,
    )


CASE_FACTORIES = {
    "rigid": rigid_body_problem,
    "so5": so5_problem,
    "su3": su3_flow_problem,
    "vdp": vdp_problem,
    "so3t": so3_nonautonomous_problem,
}

_cache = {}
_cache_lock = threading.Lock()


def get_case(name):
    """Shared instance of a benchmark case (so its reference is computed once)."""
    with _cache_lock:
        if name not in _cache:
            try:
                _cache[name] = CASE_FACTORIES[name]()
            except KeyError:
                raise KeyError(f"unknown problem {name!r}") from None
        return _cache[name]
