import dataclasses
import io
import math
import threading

import numpy as np
import pytest

from liecf.harness import (
    CSV_HEADER,
    FLOOR_FACTOR,
    GRIDS,
    CaseGrid,
    ConvergenceReport,
    ConvergenceRow,
    InsufficientDataError,
    emit_csv,
    fit_slope,
    parse_csv,
    run_convergence,
    verify_conjecture,
)
from liecf.integrators import Problem, StepperConfig
from liecf.problems import BenchmarkCase, Reference, euclidean, get_case
from liecf.tableau import registry_lookup


def liecf(name):
    return StepperConfig(registry_lookup(name), "lie_cf_2n")


def test_fit_slope_exact_power_law():
    rows = [(2.0**-n, 3.0 * 2.0 ** (-3 * n)) for n in range(3, 8)]
    assert fit_slope(rows) == pytest.approx(3.0, abs=1e-12)
    rows = [(2.0**-n, 2.0 ** (-4 * n)) for n in range(2, 7)]
    assert fit_slope(rows) == pytest.approx(4.0, abs=1e-12)


def test_fit_slope_excludes_floor_and_nonfinite():
    rows = [(2.0**-n, 2.0 ** (-3 * n)) for n in range(1, 6)]
    noisy = rows + [(2.0**-6, 1e-16), (2.0**-7, math.inf), (2.0**-8, math.nan)]
    assert fit_slope(noisy, floor=1e-15) == pytest.approx(3.0, abs=1e-12)


def test_fit_slope_needs_three_rows():
    with pytest.raises(InsufficientDataError):
        fit_slope([(0.5, 0.1), (0.25, 0.01)])
    with pytest.raises(InsufficientDataError):
        fit_slope([(0.5, 1e-20), (0.25, 1e-21), (0.125, 1e-22)], floor=1e-14)


def test_case_grid():
    g = CaseGrid(3, 11, {4: 8, 5: 6})
    assert g.exponents(3) == list(range(3, 12))
    assert g.exponents(4) == list(range(3, 9))
    assert g.exponents(5) == list(range(3, 7))
    assert GRIDS["vdp"].steps(3) == [2.0**-n for n in range(7, 13)]


def test_run_convergence_rigid():
    hs = [2.0**-n for n in range(3, 9)]
    rep = run_convergence(get_case("rigid"), liecf("BWRRK33"), hs)
    assert 2.85 <= rep.fitted_slope <= 3.15
    assert rep.nominal_order == 3 and rep.family == "lie_cf_2n"
    ds = [r.d for r in rep.rows]
    assert all(d1 < d2 for d1, d2 in zip(ds, ds[1:]))
    assert rep.fit_range == (2.0**-8, 2.0**-4)


def test_run_convergence_rejects_bad_steps():
    with pytest.raises(ValueError):
        run_convergence(get_case("rigid"), liecf("BWRRK33"), [])
    with pytest.raises(ValueError):
        run_convergence(get_case("rigid"), liecf("BWRRK33"), [0.1, -0.1])


def test_rows_near_reference_floor_never_fitted():
    rigid = get_case("rigid")
    # same problem, but pretend the reference is only good to 1e-11
    case = dataclasses.replace(
        rigid, _reference=Reference(rigid.reference().Y, 1e-11), _lock=threading.Lock()
    )
    rep = run_convergence(case, liecf("TSRKF84"), [2.0**-n for n in range(3, 12)])
    fitted = [r for r in rep.rows if rep.fit_range[0] <= r.h <= rep.fit_range[1]]
    assert all(r.d > FLOOR_FACTOR * 1e-11 for r in fitted)
    assert min(r.d for r in rep.rows) < FLOOR_FACTOR * 1e-11
    assert rep.fit_range[0] > rep.rows[0].h


def test_insufficient_data_gives_nan():
    rep = run_convergence(get_case("rigid"), liecf("YRK135"), [2.0**-10, 2.0**-11])
    assert math.isnan(rep.fitted_slope) and rep.fit_range is None


def test_divergent_rows_are_kept_as_inf():
    A0 = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def rhs(t, Y):
        return A0 * (1.0 + 1e300 * float(Y[0] > 2.0))

    case = BenchmarkCase(
        name="blowup",
        problem=Problem("blowup", rhs, (2,)),
        Y0=np.array([1.0, 0.0]),
        t0=0.0,
        t1=1.0,
        distance=euclidean,
        _reference=Reference(np.array([math.cos(1.0), -math.sin(1.0)]), 0.0),
    )
    rep = run_convergence(case, StepperConfig(registry_lookup("RALSTON3"), "classical_rk"), [0.5, 0.25, 0.125, 0.0625])
    assert all(math.isfinite(r.d) for r in rep.rows)
    hot = StepperConfig(registry_lookup("RALSTON3"), "classical_rk")
    case.Y0 = np.array([3.0, 0.0])
    rep = run_convergence(case, hot, [0.5, 0.25])
    assert all(math.isinf(r.d) for r in rep.rows)
    assert math.isnan(rep.fitted_slope)


def test_drift_tracking():
    case = get_case("so3t")
    rep = run_convergence(case, liecf("BWRRK33"), [0.25, 0.125, 0.0625], track_drift=True)
    assert all(0.0 <= r.drift <= 1e-13 for r in rep.rows)
    rep = run_convergence(case, liecf("BWRRK33"), [0.25, 0.125, 0.0625])
    assert all(math.isnan(r.drift) for r in rep.rows)


def test_determinism():
    hs = [2.0**-n for n in range(1, 5)]
    a = run_convergence(get_case("so5"), liecf("TSRKF84"), hs)
    b = run_convergence(get_case("so5"), liecf("TSRKF84"), hs)
    assert [r.d for r in a.rows] == [r.d for r in b.rows]
    assert a.fitted_slope == b.fitted_slope


def strip_seconds(text):
    out = []
    for line in text.splitlines():
        if line.startswith("#") or line.startswith("case"):
            out.append(line)
        else:
            out.append(",".join(line.split(",")[:5]))
    return out


def test_parallel_matches_serial():
    hs = [2.0**-n for n in range(1, 6)]
    for name in ("so5", "su3"):
        cfg = liecf("BWRRK33")
        serial, parallel = io.StringIO(), io.StringIO()
        emit_csv(run_convergence(get_case(name), cfg, hs), serial)
        emit_csv(run_convergence(get_case(name), cfg, list(reversed(hs)), jobs=2), parallel)
        assert strip_seconds(serial.getvalue()) == strip_seconds(parallel.getvalue())


def sample_report():
    rows = [ConvergenceRow(2.0**-n, 0.1 * 2.0 ** (-3 * n) / 3.0, 0.001 * n) for n in range(3, 7)]
    return ConvergenceReport("rigid", "BWRRK33", "lie_cf_2n", rows, 3.0000000000000004, (2.0**-6, 2.0**-3), 3)


def test_emit_csv_format():
    buf = io.StringIO()
    emit_csv(sample_report(), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("rigid,BWRRK33,lie_cf_2n,0.015625,")
    assert len(lines) == 6
    assert lines[-1] == "# slope=3.0000000000000004 nominal=3"


def test_csv_round_trip():
    rep = sample_report()
    other = ConvergenceReport("so5", "YRK135", "rkmk", [ConvergenceRow(0.5, math.inf, 0.0)], math.nan, None, 5)
    buf = io.StringIO()
    emit_csv(rep, buf)
    emit_csv(other, buf, header=False)
    buf.seek(0)
    back = parse_csv(buf)
    assert len(back) == 2
    assert (back[0].case_name, back[0].scheme_name, back[0].family) == ("rigid", "BWRRK33", "lie_cf_2n")
    assert [(r.h, r.d, r.seconds) for r in back[0].rows] == sorted(
        [(r.h, r.d, r.seconds) for r in rep.rows]
    )
    assert back[0].fitted_slope == rep.fitted_slope and back[0].nominal_order == 3
    assert back[0].fit_range is None
    assert math.isinf(back[1].rows[0].d) and math.isnan(back[1].fitted_slope)


def test_verify_conjecture_subset():
    verdicts = verify_conjecture(registry_lookup("BWRRK33"), [get_case("rigid"), get_case("so3t")])
    assert [v.case_name for v in verdicts] == ["rigid", "so3t"]
    assert all(v.passed and v.required == pytest.approx(2.8) for v in verdicts)


def test_verify_conjecture_negative_control():
    (v,) = verify_conjecture(registry_lookup("RALSTON3"), [get_case("rigid")])
    assert v.report.family == "generic_cf"
    assert not v.passed and v.slope <= 2.5
