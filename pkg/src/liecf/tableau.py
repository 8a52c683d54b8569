"""Runge-Kutta coefficient schemes.

Two representations are supported: the classical Butcher tableau
``(a, b, c)`` of an explicit method and the Williamson 2N-storage form
``(A, B, C)``. This module converts between them, evaluates classical
order conditions through rooted trees, evaluates the third-order Lie group
constraints, and serves the built-in registry of coefficient files.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

ORDER_TOL = 1e-10
TWO_N_TOL = 1e-10
COEFF_DIR_ENV = "LIECF_COEFF_DIR"


class NotTwoNRepresentableError(ValueError):
    """The tableau has no Williamson 2N-storage form."""


class SchemeLookupError(KeyError):
    pass


class CoefficientFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Tableau:
    """Explicit Butcher tableau."""

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        s = b.shape[0]
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"{self.name}: inconsistent tableau shapes")
        if np.any(np.triu(a) != 0.0):
            raise ValueError(f"{self.name}: tableau is not explicit")
        if c[0] != 0.0:
            raise ValueError(f"{self.name}: c_1 must be 0")
        if np.max(np.abs(a.sum(axis=1) - c)) > 1e-14:
            raise ValueError(f"{self.name}: c is not the row sum of a")
        for arr in (a, b, c):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self):
        return self.b.shape[0]


@dataclass(frozen=True, eq=False)
class TwoNScheme:
    """Williamson 2N-storage coefficients ``A`` (with ``A[0] = 0``), ``B``, ``C``."""

    name: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    order: int

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        if not (A.ndim == 1 and A.shape == B.shape == C.shape):
            raise ValueError(f"{self.name}: A, B, C must have equal length")
        if A[0] != 0.0:
            raise ValueError(f"{self.name}: A_1 must be 0")
        for arr in (A, B, C):
            arr.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        c = _butcher_arrays(A, B)[0].sum(axis=1)
        if np.max(np.abs(c - C)) > 1e-12:
            raise ValueError(f"{self.name}: C disagrees with the implied nodes")

    @property
    def stages(self):
        return self.A.shape[0]


@dataclass
class OrderReport:
    residuals: dict = field(default_factory=dict)
    satisfied_order: int = 0


def _butcher_arrays(A, B):
    s = len(A)
    a = np.zeros((s, s))
    for i in range(1, s):
        a[i, i - 1] = B[i - 1]
        for j in range(i - 2, -1, -1):
            a[i, j] = A[j + 1] * a[i, j + 1] + B[j]
    b = np.zeros(s)
    b[s - 1] = B[s - 1]
    for i in range(s - 2, -1, -1):
        b[i] = A[i + 1] * b[i + 1] + B[i]
    return a, b


def to_butcher(scheme):
    """Classical tableau of a 2N-storage scheme."""
    a, b = _butcher_arrays(scheme.A, scheme.B)
    return Tableau(scheme.name, a, b, a.sum(axis=1), scheme.order)


def from_butcher(t):
    """Invert :func:`to_butcher`.

    ``B`` is read off the subdiagonal of ``a`` and ``b_s``. Each ``A_k``
    occurs in several equations; the one with the largest divisor is used and
    the whole system is then checked for consistency.
    """
    s = t.stages
    a, b = t.a, t.b
    B = np.empty(s)
    B[: s - 1] = np.diagonal(a, -1)
    B[s - 1] = b[s - 1]
    A = np.zeros(s)
    for k in range(1, s):
        candidates = [(b[k], b[k - 1] - B[k - 1])]
        candidates += [(a[i, k], a[i, k - 1] - B[k - 1]) for i in range(k + 1, s)]
        divisor, numerator = max(candidates, key=lambda p: abs(p[0]))
        if divisor != 0.0:
            A[k] = numerator / divisor
    a2, b2 = _butcher_arrays(A, B)
    residual = max(np.max(np.abs(a2 - a)), np.max(np.abs(b2 - b)))
    if residual > TWO_N_TOL:
        raise NotTwoNRepresentableError(
            f"{t.name}: no 2N-storage form (residual {residual:.3g})"
        )
    return TwoNScheme(t.name, A, B, t.c, t.order)


def as_tableau(scheme):
    return to_butcher(scheme) if isinstance(scheme, TwoNScheme) else scheme


# rooted trees, as sorted tuples of child subtrees


def _grow(tree):
    """All trees obtained by attaching one leaf somewhere in ``tree``."""
    out = {tuple(sorted(tree + ((),)))}
    for k, child in enumerate(tree):
        rest = tree[:k] + tree[k + 1 :]
        for g in _grow(child):
            out.add(tuple(sorted(rest + (g,))))
    return out


def rooted_trees(order):
    """Unlabelled rooted trees with ``order`` vertices, deterministic order."""
    level = {()}
    for _ in range(order - 1):
        level = set().union(*(_grow(t) for t in level))
    return sorted(level, key=level_sequence)


def level_sequence(tree, depth=0):
    return str(depth) + "".join(level_sequence(ch, depth + 1) for ch in tree)


def tree_order(tree):
    return 1 + sum(tree_order(ch) for ch in tree)


def tree_density(tree):
    g = tree_order(tree)
    for ch in tree:
        g *= tree_density(ch)
    return g


def _stage_weights(tree, a):
    w = np.ones(a.shape[0])
    for ch in tree:
        w = w * (a @ _stage_weights(ch, a))
    return w


def elementary_weight(tree, t):
    return float(t.b @ _stage_weights(tree, t.a))


def classical_order_residuals(scheme, up_to=5):
    """Residuals ``|Phi(tau) - 1/gamma(tau)|`` for all trees up to ``up_to`` vertices."""
    t = as_tableau(scheme)
    report = OrderReport()
    report.satisfied_order = up_to
    for p in range(1, up_to + 1):
        worst = 0.0
        for tree in rooted_trees(p):
            r = abs(elementary_weight(tree, t) - 1.0 / tree_density(tree))
            report.residuals[level_sequence(tree)] = r
            worst = max(worst, r)
        if worst > ORDER_TOL and report.satisfied_order == up_to:
            report.satisfied_order = p - 1
    return report


def williamson_constraint_residual(c2, c3):
    return abs(
        c3 * c3 * (1.0 - c2) + c3 * (c2 * c2 + 0.5 * c2 - 1.0) + (1.0 / 3.0 - 0.5 * c2)
    )


def lie_cf3_condition_residual(scheme):
    """Extra condition making a 3-stage classical order-3 tableau a third-order
    method in the exponential-reusing commutator-free format."""
    t = as_tableau(scheme)
    if t.stages != 3:
        raise ValueError(f"{t.name}: expected 3 stages, got {t.stages}")
    c2, c3 = t.c[1], t.c[2]
    return abs(t.a[2, 1] * c2 * (1.0 - c2) - (3.0 * c3 - 1.0) / 6.0)


def crouch_grossman_oc3_residual(scheme):
    t = as_tableau(scheme)
    b, c = t.b, t.c
    bc = b * c
    cross = sum(bc[i] * b[j] for i in range(t.stages) for j in range(i + 1, t.stages))
    return abs(float(b @ bc) + 2.0 * cross - 1.0 / 3.0)


# coefficient files


def _num(text):
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise CoefficientFileError(f"bad coefficient {text!r}") from exc


def _vec(record, key, n):
    try:
        values = [_num(x) for x in record[key]]
    except KeyError as exc:
        raise CoefficientFileError(f"missing array {key!r}") from exc
    if len(values) != n:
        raise CoefficientFileError(f"{key!r} has {len(values)} entries, expected {n}")
    return values


def parse_scheme(text):
    """Parse one coefficient record (JSON text) into a scheme."""
    try:
        rec = json.loads(text)
        name = str(rec["name"])
        fmt = rec["format"]
        s = int(rec["stages"])
        order = int(rec["order"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CoefficientFileError(f"malformed coefficient record: {exc}") from exc
    if fmt == "2N":
        return TwoNScheme(
            name, _vec(rec, "A", s), _vec(rec, "B", s), _vec(rec, "C", s), order
        )
    if fmt == "butcher":
        rows = rec.get("a")
        if not isinstance(rows, list) or len(rows) != s:
            raise CoefficientFileError(f"'a' must list {s} rows")
        a = np.zeros((s, s))
        for i, row in enumerate(rows):
            if len(row) != i:
                raise CoefficientFileError(f"row {i} of 'a' must have {i} entries")
            a[i, :i] = [_num(x) for x in row]
        return Tableau(name, a, _vec(rec, "b", s), _vec(rec, "c", s), order)
    raise CoefficientFileError(f"unknown format {fmt!r}")


def _arr(values):
    return "[" + ", ".join(f'"{float(x)!r}"' for x in values) + "]"


def dumps_scheme(scheme):
    """Serialize with shortest round-trip decimals, one array per line."""
    lines = [
        "{",
        f'  "name": {json.dumps(scheme.name)},',
        f'  "format": "{"2N" if isinstance(scheme, TwoNScheme) else "butcher"}",',
        f'  "stages": {scheme.stages},',
        f'  "order": {scheme.order},',
    ]
    if isinstance(scheme, TwoNScheme):
        lines += [
            f'  "A": {_arr(scheme.A)},',
            f'  "B": {_arr(scheme.B)},',
            f'  "C": {_arr(scheme.C)}',
        ]
    else:
        rows = ",\n".join(
            f"    {_arr(scheme.a[i, :i])}" for i in range(scheme.stages)
        )
        lines += [
            '  "a": [',
            rows,
            "  ],",
            f'  "b": {_arr(scheme.b)},',
            f'  "c": {_arr(scheme.c)}',
        ]
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_scheme(path):
    return parse_scheme(Path(path).read_text(encoding="utf-8"))


def save_scheme(scheme, path):
    Path(path).write_text(dumps_scheme(scheme), encoding="utf-8")


def _load_builtins():
    out = {}
    for entry in sorted(resources.files("liecf.data").iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            scheme = parse_scheme(entry.read_text(encoding="utf-8"))
            out[scheme.name.upper()] = scheme
    return out


BUILTINS = _load_builtins()


def _user_schemes(coeff_dir):
    out = {}
    for path in sorted(Path(coeff_dir).glob("*.json")):
        scheme = load_scheme(path)
        out[scheme.name.upper()] = scheme
    return out


def registry(coeff_dir=None):
    """Built-in schemes, extended (and possibly overridden) by a coefficient
    directory given explicitly or through ``$LIECF_COEFF_DIR``."""
    schemes = dict(BUILTINS)
    coeff_dir = coeff_dir or os.environ.get(COEFF_DIR_ENV)
    if coeff_dir:
        schemes.update(_user_schemes(coeff_dir))
    return schemes


def registry_lookup(name, coeff_dir=None):
    schemes = registry(coeff_dir)
    try:
        return schemes[name.upper()]
    except KeyError:
        raise SchemeLookupError(
            f"unknown scheme {name!r}; known: {', '.join(sorted(schemes))}"
        ) from None
