import json

import numpy as np
import pytest

from handfit.camera import FullParams
from handfit.metrics import evaluate
from handfit.objectives import total_loss
from handfit.optim import FitResult
from handfit.report import emit_report, read_metrics_csv, read_per_sample_csv


def _results(n):
    return [FitResult(FullParams.rest(), total_loss({"2d": 0.5 + i}), [1.0, 0.5 + i], 2, "converged") for i in range(n)]


def test_empty_report_has_headers_only(tmp_path):
    paths = emit_report(evaluate([], []), [], tmp_path)
    assert paths["metrics"].read_text().strip() == "threshold_mm,pck"
    assert paths["per_sample"].read_text().strip() == "sample_id,epe_mm,loss,iterations,stop_reason"
    assert paths["curve"].exists()
    assert json.loads(paths["summary"].read_text())["n_samples"] == 0


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    preds, gts = rng.normal(0, 20, (4, 21, 3)), rng.normal(0, 20, (4, 21, 3))
    report = evaluate(preds, gts, sample_ids=list("abcd"))
    paths = emit_report(report, _results(4), tmp_path)
    thresholds, pck = read_metrics_csv(paths["metrics"])
    assert np.array_equal(thresholds, report.thresholds) and np.array_equal(pck, report.pck)
    rows = read_per_sample_csv(paths["per_sample"])
    assert [r["sample_id"] for r in rows] == list("abcd")
    assert [float(r["epe_mm"]) for r in rows] == report.per_sample_epe
    assert float(rows[2]["loss"]) == pytest.approx(2.5) and rows[2]["stop_reason"] == "converged"
    summary = json.loads(paths["summary"].read_text())
    assert summary["mean_epe_mm"] == report.mean_epe and summary["auc"] == report.auc


def test_overlays_written_at_source_size(tmp_path):
    from handfit.imaging import load_image

    image = np.zeros((48, 40, 3), np.uint8)
    paths = emit_report(evaluate([], []), None, tmp_path, overlays={"s0": image})
    assert load_image(paths["overlay:s0"]).shape == image.shape


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(evaluate([], []), None, blocker / "sub")
