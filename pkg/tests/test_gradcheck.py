import numpy as np

from handfit.gradcheck import relative_error, run_gradcheck


def test_relative_error_floor():
    err = relative_error([1.0, 0.0, 1e-12], [1.0 + 1e-6, 0.0, -1e-12])
    assert err[0] < 1.1e-6 and err[1] == 0.0 and err[2] < 1e-3
    assert relative_error([2.0], [1.0])[0] == 0.5


def test_short_run_passes(tpl):
    report = run_gradcheck(n_points=2, seed=5, tpl=tpl)
    assert report.passed, "\n".join(report.lines())
    assert len(report.checks) == 5
    assert all(line.startswith("ok") for line in report.lines())


def test_failure_is_reported(tpl):
    report = run_gradcheck(n_points=1, tpl=tpl, tolerance=1e-30)
    assert not report.passed
    assert any(line.startswith("FAIL") for line in report.lines())
    assert np.isfinite(report.max_rel_error)
