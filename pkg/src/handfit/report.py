"""Write evaluation results to CSV, SVG and PNG files."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .imaging import save_image
from .metrics import MetricsReport

METRICS_FILE = "metrics.csv"
SAMPLES_FILE = "per_sample.csv"
SUMMARY_FILE = "summary.json"
CURVE_FILE = "pck_curve.svg"


def _writable_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_metrics_csv(report: MetricsReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold_mm", "pck"])
        if report.per_sample_epe:
            for t, p in zip(report.thresholds, report.pck):
                w.writerow([repr(float(t)), repr(float(p))])
    return path


def read_metrics_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["threshold_mm"]) for r in rows]), np.array([float(r["pck"]) for r in rows]))


def write_per_sample_csv(report: MetricsReport, results, path) -> Path:
    """One row per sample: id, EPE and, when fit results are given, the
    final loss, iteration count and stop reason."""
    path = Path(path)
    results = list(results or [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "epe_mm", "loss", "iterations", "stop_reason"])
        for i, (sid, e) in enumerate(zip(report.sample_ids, report.per_sample_epe)):
            r = results[i] if i < len(results) else None
            w.writerow([sid, repr(float(e)),
                        "" if r is None else repr(float(r.loss)),
                        "" if r is None else r.iterations,
                        "" if r is None else r.stop_reason])
    return path


def read_per_sample_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def plot_pck_curve(report: MetricsReport, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    if report.per_sample_epe:
        ax.plot(report.thresholds, report.pck, marker="o", markersize=2.5,
                label=f"AUC={report.auc:.3f}, EPE={report.mean_epe:.2f} mm")
        ax.legend(loc="lower right")
    ax.set_xlabel("error threshold (mm)")
    ax.set_ylabel("3D PCK")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def emit_report(report: MetricsReport, results=None, out_dir=".", overlays=None) -> dict[str, Path]:
    """Write metrics CSV, per-sample CSV, summary JSON, PCK curve SVG and
    optional overlay PNGs (``overlays`` maps file stems to RGB arrays).

    Returns:
        Mapping from artefact name to written path.
    """
    out = _writable_dir(out_dir)
    written = {
        "metrics": write_metrics_csv(report, out / METRICS_FILE),
        "per_sample": write_per_sample_csv(report, results, out / SAMPLES_FILE),
        "curve": plot_pck_curve(report, out / CURVE_FILE),
    }
    summary = {
        "mean_epe_mm": None if not report.per_sample_epe else float(report.mean_epe),
        "auc": float(report.auc),
        "n_samples": len(report.per_sample_epe),
        "thresholds_mm": [float(t) for t in report.thresholds],
    }
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=1))
    written["summary"] = out / SUMMARY_FILE
    for stem, image in (overlays or {}).items():
        written[f"overlay:{stem}"] = save_image(out / "overlays" / f"{stem}.png", image)
    return written
