"""Convergence studies: sweep step sizes, measure d(h), fit the observed order."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrators import (
    DivergenceError,
    StepperConfig,
    integrate,
    lie_cf_coefficients,
)
from .problems import get_case
from .tableau import TwoNScheme, dumps_scheme, parse_scheme

CSV_HEADER = ("case", "scheme", "family", "h", "d", "seconds")

# rows with d below FLOOR_FACTOR * reference floor never enter a fit
FLOOR_FACTOR = 10.0
# the fit uses this many of the finest admissible step sizes
FIT_POINTS = 5
CONJECTURE_MARGIN = 0.2


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class CaseGrid:
    """Step sizes h = 2**-n, n in [nmin, nmax]; finer steps are dropped for
    high-order schemes once d(h) would reach rounding level."""

    nmin: int
    nmax: int
    finest_n: dict = field(default_factory=dict)

    def exponents(self, order):
        nmax = self.nmax
        for p, n in sorted(self.finest_n.items()):
            if order >= p:
                nmax = min(nmax, n)
        return list(range(self.nmin, nmax + 1))

    def steps(self, order):
        return [2.0**-n for n in self.exponents(order)]


GRIDS = {
    "rigid": CaseGrid(3, 11, {4: 8, 5: 6}),
    "so5": CaseGrid(1, 10, {4: 7, 5: 5}),
    "su3": CaseGrid(1, 10, {4: 7, 5: 6}),
    "vdp": CaseGrid(7, 12, {5: 11}),
    "so3t": CaseGrid(1, 10, {4: 8, 5: 6}),
}
CASE_NAMES = tuple(GRIDS)


@dataclass
class ConvergenceRow:
    h: float
    d: float
    seconds: float = 0.0
    # largest invariant drift seen along the trajectory, if tracked
    drift: float = math.nan


@dataclass
class ConvergenceReport:
    case_name: str
    scheme_name: str
    family: str
    rows: list
    fitted_slope: float
    fit_range: Optional[tuple]
    nominal_order: int


def fit_slope(rows, floor=0.0):
    """Least-squares slope of log2 d against log2 h over the admissible rows."""
    pts = [
        (r.h, r.d) if isinstance(r, ConvergenceRow) else (r[0], r[1]) for r in rows
    ]
    pts = [(h, d) for h, d in pts if math.isfinite(d) and d > FLOOR_FACTOR * floor]
    if len(pts) < 3:
        raise InsufficientDataError(f"{len(pts)} admissible rows, need at least 3")
    x = np.log2([h for h, _ in pts])
    y = np.log2([d for _, d in pts])
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def _stepper_for(scheme, family):
    if family == "generic_cf":
        return StepperConfig(scheme, family, cf_coefficients=lie_cf_coefficients(scheme))
    return StepperConfig(scheme, family)


def _timed_solve(case, cfg, h, track_drift=False):
    worst = [math.nan]
    observer = None
    if track_drift and case.drift is not None:
        worst[0] = 0.0

        def observer(t, Y):
            worst[0] = max(worst[0], case.drift(Y))

    start = time.perf_counter()
    try:
        Y = integrate(cfg, case.problem, case.t0, case.t1, h, case.Y0, observer)
    except DivergenceError:
        Y = None
    return Y, time.perf_counter() - start, worst[0]


def _job(case_name, scheme_text, family, h, cf, track_drift):
    # runs in a worker process; the scheme travels as its (bit-exact) file text
    scheme = parse_scheme(scheme_text)
    cfg = StepperConfig(scheme, family, cf_coefficients=cf)
    return _timed_solve(get_case(case_name), cfg, h, track_drift)


def run_convergence(case, cfg, h_list, jobs=1, fit_points=FIT_POINTS, track_drift=False):
    """Integrate ``case`` at each step size and compare with its reference.

    Divergent runs are kept with ``d = inf`` and never enter the fit. With
    ``track_drift`` the case's invariant drift is monitored after every step.
    """
    if not h_list or any(not h > 0.0 for h in h_list):
        raise ValueError("h_list must be nonempty with positive entries")
    ref = case.reference()
    hs = sorted(h_list)
    if jobs > 1:
        if case.name not in GRIDS:
            raise ValueError("parallel sweeps need a built-in case")
        text = dumps_scheme(cfg.scheme)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _job, case.name, text, cfg.family, h, cfg.cf_coefficients, track_drift
                )
                for h in hs
            ]
            results = [f.result() for f in futures]
    else:
        results = [_timed_solve(case, cfg, h, track_drift) for h in hs]

    rows = []
    for h, (Y, seconds, drift) in zip(hs, results):
        d = math.inf if Y is None else case.distance(Y, ref.Y)
        rows.append(ConvergenceRow(h, d, seconds, drift))

    admissible = [
        r for r in rows if math.isfinite(r.d) and r.d > FLOOR_FACTOR * ref.floor
    ]
    window = admissible[:fit_points]
    try:
        slope = fit_slope(window, ref.floor)
        fit_range = (window[0].h, window[-1].h)
    except InsufficientDataError:
        slope, fit_range = math.nan, None
    return ConvergenceReport(
        case.name, cfg.scheme.name, cfg.family, rows, slope, fit_range, cfg.order
    )


def conjecture_family(scheme):
    """2N schemes run natively; any other tableau is pushed through the same
    exponential-reusing format by the generic executor."""
    return "lie_cf_2n" if isinstance(scheme, TwoNScheme) else "generic_cf"


@dataclass
class Verdict:
    case_name: str
    scheme_name: str
    slope: float
    required: float
    report: ConvergenceReport

    @property
    def passed(self):
        return self.slope >= self.required


def verify_conjecture(scheme, cases=None, jobs=1):
    """Check that ``scheme`` keeps its classical order as a Lie group method."""
    cases = [get_case(n) for n in CASE_NAMES] if cases is None else cases
    family = conjecture_family(scheme)
    verdicts = []
    for case in cases:
        cfg = _stepper_for(scheme, family)
        report = run_convergence(case, cfg, GRIDS[case.name].steps(scheme.order), jobs)
        if math.isnan(report.fitted_slope):
            raise InsufficientDataError(
                f"{scheme.name} on {case.name}: too few rows above the reference floor"
            )
        verdicts.append(
            Verdict(
                case.name,
                scheme.name,
                report.fitted_slope,
                scheme.order - CONJECTURE_MARGIN,
                report,
            )
        )
    return verdicts


def emit_csv(report, stream, header=True):
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow(CSV_HEADER)
    for r in sorted(report.rows, key=lambda r: r.h):
        writer.writerow(
            [report.case_name, report.scheme_name, report.family, repr(r.h), repr(r.d), repr(r.seconds)]
        )
    stream.write(f"# slope={report.fitted_slope!r} nominal={report.nominal_order}\n")


def parse_csv(stream):
    """Read reports written by :func:`emit_csv` (several may share one header)."""
    reports = []
    rows = []
    names = None
    for line in stream:
        line = line.strip()
        if not line or line == ",".join(CSV_HEADER):
            continue
        if line.startswith("#"):
            fields = dict(kv.split("=", 1) for kv in line[1:].split())
            case_name, scheme_name, family = names or ("", "", "")
            reports.append(
                ConvergenceReport(
                    case_name,
                    scheme_name,
                    family,
                    rows,
                    float(fields["slope"]),
                    None,
                    int(fields["nominal"]),
                )
            )
            rows, names = [], None
            continue
        case_name, scheme_name, family, h, d, seconds = next(csv.reader([line]))
        names = (case_name, scheme_name, family)
        rows.append(ConvergenceRow(float(h), float(d), float(seconds)))
    return reports
