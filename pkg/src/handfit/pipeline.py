"""Dataset-level fitting, prediction files and evaluation."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import objectives as obj
from .camera import FullParams, pack, unpack
from .dataset import AnnotationRecord, DatasetManifest
from .errors import SchemaError
from .metrics import MetricsReport, evaluate
from .optim import FitProblem, FitResult, OptimizerConfig, fit, fit_with_adapter, init_from_silhouette, init_heuristic
from .renderer import RasterConfig
from .scene import Observations, predict
from .template import HandTemplate


@dataclass
class SamplePrediction:
    sample_id: str
    params: FullParams
    keypoints_3d: np.ndarray
    keypoints_2d: np.ndarray
    result: FitResult | None = None

    def to_dict(self) -> dict:
        doc = {
            "id": self.sample_id,
            "params": pack(self.params).tolist(),
            "keypoints_3d": np.asarray(self.keypoints_3d).tolist(),
            "keypoints_2d": np.asarray(self.keypoints_2d).tolist(),
        }
        if self.result is not None:
            doc.update(loss=self.result.loss, iterations=self.result.iterations, stop_reason=self.result.stop_reason,
                       terms=self.result.breakdown.terms)
        return doc


def observations_for(record: AnnotationRecord, manifest: DatasetManifest, use_2d: bool = True,
                     use_mask: bool = True, use_3d: bool = True) -> Observations:
    return Observations(
        record.keypoints_2d if use_2d else None,
        manifest.load_mask(record) if use_mask and record.mask is not None else None,
        record.keypoints_3d if use_3d else None,
    )


def initial_guess(obs: Observations, tpl: HandTemplate, raster: RasterConfig, jitter: float = 0.0,
                  rng: np.random.Generator | None = None) -> FullParams:
    if obs.keypoints_2d is not None:
        init = init_heuristic(obs.keypoints_2d, tpl)
    elif obs.mask is not None:
        init = init_from_silhouette(obs.mask, tpl, raster)
    else:
        raise SchemaError("sample has neither 2D keypoints nor a mask to initialise from")
    if jitter > 0 and rng is not None:
        x = pack(init)
        x[3:] += rng.normal(0.0, jitter, x.size - 3)
        init = unpack(x)
    return init


def _fit_one(args):
    tpl, obs, init, weights, raster, config = args
    return fit(FitProblem(tpl, obs, init, weights, raster=raster), config)


def fit_manifest(manifest: DatasetManifest, tpl: HandTemplate, weights: obj.LossWeights | None = None,
                 config: OptimizerConfig | None = None, use_2d: bool = True, use_mask: bool = True,
                 use_3d: bool = True, seed: int = 0, init_jitter: float = 0.0, jobs: int = 1,
                 limit: int | None = None) -> list[SamplePrediction]:
    """Fit every record independently (optionally in worker processes).

    ``seed`` drives the optional Gaussian jitter added to the rotation,
    pose and shape of the heuristic initialisation.
    """
    weights = weights or obj.LossWeights()
    config = config or OptimizerConfig()
    raster = RasterConfig(width=manifest.width, height=manifest.height)
    rng = np.random.default_rng(seed)
    records = manifest.records[:limit] if limit is not None else manifest.records
    tasks = []
    for rec in records:
        obs = observations_for(rec, manifest, use_2d, use_mask, use_3d)
        tasks.append((tpl, obs, initial_guess(obs, tpl, raster, init_jitter, rng), weights, raster, config))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(t) for t in tasks]
    out = []
    for rec, res in zip(records, results):
        pred = predict(res.params, tpl)
        out.append(SamplePrediction(rec.sample_id, res.params, pred.keypoints_3d, pred.keypoints_2d, res))
    return out


def fit_manifest_with_adapter(manifest: DatasetManifest, tpl: HandTemplate, weights=None, config=None,
                              use_mask: bool = True, limit: int | None = None):
    weights = weights or obj.LossWeights()
    raster = RasterConfig(width=manifest.width, height=manifest.height)
    records = manifest.records[:limit] if limit is not None else manifest.records
    problems = []
    for rec in records:
        obs = observations_for(rec, manifest, use_mask=use_mask)
        problems.append(FitProblem(tpl, obs, initial_guess(obs, tpl, raster), weights, raster=raster))
    joint = fit_with_adapter(problems, config)
    out = []
    for rec, res in zip(records, joint.results):
        pred = predict(res.params, tpl, adapter=joint.adapter)
        out.append(SamplePrediction(rec.sample_id, res.params, pred.keypoints_3d, pred.keypoints_2d, res))
    return out, joint.adapter


def save_predictions(predictions, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta or {}, "samples": [p.to_dict() for p in predictions]}
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_predictions(path) -> dict[str, np.ndarray]:
    """Map sample id to predicted (21, 3) keypoints."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"predictions not found: {path}")
    try:
        doc = json.loads(path.read_text())
        return {str(s["id"]): np.asarray(s["keypoints_3d"], dtype=np.float64) for s in doc["samples"]}
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed predictions file ({exc})") from exc


def evaluate_predictions(predicted: dict[str, np.ndarray], manifest: DatasetManifest, thresholds=None) -> MetricsReport:
    """Metrics over records that have both 3D ground truth and a prediction."""
    preds, gts, ids = [], [], []
    for rec in manifest.records:
        if rec.keypoints_3d is None or rec.sample_id not in predicted:
            continue
        preds.append(predicted[rec.sample_id])
        gts.append(rec.keypoints_3d)
        ids.append(rec.sample_id)
    if thresholds is None:
        return evaluate(preds, gts, sample_ids=ids)
    return evaluate(preds, gts, thresholds, sample_ids=ids)
