"""Dataset manifests and the seed-controlled synthetic hand generator.

A manifest is one JSON document per split. Keypoints live inside the
manifest; images (PNG) and masks (PGM or PNG) are files referenced by
paths relative to the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import FullParams, ViewParams, pack, unpack
from .errors import DimensionError, InvariantError, SchemaError
from .imaging import colorize_silhouette, load_mask, save_image, save_mask
from .renderer import RasterConfig
from .scene import predict
from .template import HandTemplate

N_KEYPOINTS = 21
MANIFEST_VERSION = 1


@dataclass
class AnnotationRecord:
    sample_id: str
    image: str | None
    keypoints_2d: np.ndarray
    keypoints_3d: np.ndarray | None = None
    mask: str | None = None
    params: np.ndarray | None = None  # packed ground truth, synthetic data only

    def __post_init__(self):
        self.keypoints_2d = np.asarray(self.keypoints_2d, dtype=np.float64)
        if self.keypoints_2d.shape != (N_KEYPOINTS, 2):
            raise DimensionError(f"sample {self.sample_id}: keypoints_2d must be (21, 2), got {self.keypoints_2d.shape}")
        if self.keypoints_3d is not None:
            self.keypoints_3d = np.asarray(self.keypoints_3d, dtype=np.float64)
            if self.keypoints_3d.shape != (N_KEYPOINTS, 3):
                raise DimensionError(
                    f"sample {self.sample_id}: keypoints_3d must be (21, 3), got {self.keypoints_3d.shape}")
        if self.params is not None:
            self.params = np.asarray(self.params, dtype=np.float64)

    def to_dict(self) -> dict:
        doc = {"id": self.sample_id, "image": self.image, "keypoints_2d": self.keypoints_2d.tolist()}
        if self.keypoints_3d is not None:
            doc["keypoints_3d"] = self.keypoints_3d.tolist()
        if self.mask is not None:
            doc["mask"] = self.mask
        if self.params is not None:
            doc["params"] = self.params.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "AnnotationRecord":
        try:
            return cls(
                sample_id=str(doc["id"]),
                image=doc.get("image"),
                keypoints_2d=doc["keypoints_2d"],
                keypoints_3d=doc.get("keypoints_3d"),
                mask=doc.get("mask"),
                params=doc.get("params"),
            )
        except KeyError as exc:
            raise SchemaError(f"annotation record is missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"malformed annotation record: {exc}") from exc


@dataclass
class DatasetManifest:
    records: list[AnnotationRecord]
    width: int = 64
    height: int = 64
    split: str = "train"
    root: Path | None = None  # directory file paths are relative to
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvariantError("sample ids in a manifest must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, relative: str | None) -> Path | None:
        if relative is None:
            return None
        return (self.root or Path(".")) / relative

    def load_mask(self, record: AnnotationRecord) -> np.ndarray | None:
        path = self.resolve(record.mask)
        return None if path is None else load_mask(path)

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "split": self.split,
            "width": self.width,
            "height": self.height,
            "meta": self.meta,
            "samples": [r.to_dict() for r in self.records],
        }


def save_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_dict(), indent=1))
    return path


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a manifest; referenced image and mask files must exist."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "samples" not in doc:
        raise SchemaError(f"{path}: manifest needs a 'samples' list")
    records = [AnnotationRecord.from_dict(d) for d in doc["samples"]]
    manifest = DatasetManifest(records, int(doc.get("width", 64)), int(doc.get("height", 64)),
                               str(doc.get("split", "train")), path.parent, dict(doc.get("meta", {})))
    if check_files:
        for r in records:
            for rel in (r.image, r.mask):
                if rel is not None and not manifest.resolve(rel).exists():
                    raise FileNotFoundError(f"sample {r.sample_id}: missing file {manifest.resolve(rel)}")
    return manifest


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SynthRanges:
    """Uniform sampling bounds for each parameter block."""

    tx: tuple[float, float] = (28.0, 36.0)
    ty: tuple[float, float] = (46.0, 52.0)
    s: tuple[float, float] = (0.20, 0.25)
    r: tuple[float, float] = (-0.3, 0.3)
    theta: tuple[float, float] = (-0.35, 0.35)
    beta: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        self.validate()

    def validate(self) -> "SynthRanges":
        for name in ("tx", "ty", "s", "r", "theta", "beta"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise InvariantError(f"empty or invalid range for {name}: ({lo}, {hi})")
        if self.s[0] <= 0:
            raise InvariantError("scale range must stay positive")
        return self

    def sample(self, rng: np.random.Generator, n_theta: int = 45, n_beta: int = 10) -> FullParams:
        t = np.array([rng.uniform(*self.tx), rng.uniform(*self.ty)])
        view = ViewParams(t, rng.uniform(*self.s), rng.uniform(*self.r, size=3))
        return FullParams(view, rng.uniform(*self.theta, size=n_theta), rng.uniform(*self.beta, size=n_beta))


@dataclass
class SyntheticSample:
    record: AnnotationRecord
    params: FullParams
    image: np.ndarray
    mask: np.ndarray


def reproject_keypoints(keypoints_3d, view: ViewParams) -> np.ndarray:
    """2D keypoints from stored 3D ones, which already carry the rotation."""
    kp = np.asarray(keypoints_3d, dtype=np.float64)
    return view.s * kp[:, :2] + view.t


def synth_samples(tpl: HandTemplate, n_samples: int, ranges: SynthRanges | None = None, seed: int = 0,
                  raster: RasterConfig | None = None) -> list[SyntheticSample]:
    """Draw ``n_samples`` parameter sets and render them in memory."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    ranges = (ranges or SynthRanges()).validate()
    raster = raster or RasterConfig()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_samples):
        params = ranges.sample(rng, n_theta=3 * tpl.k)
        pred = predict(params, tpl, raster)
        record = AnnotationRecord(f"{i:05d}", None, pred.keypoints_2d, pred.keypoints_3d, None, pack(params))
        out.append(SyntheticSample(record, params, colorize_silhouette(pred.silhouette), pred.silhouette))
    return out


def synth_dataset(tpl: HandTemplate, n_samples: int, ranges: SynthRanges | None = None, seed: int = 0,
                  out_dir=None, raster: RasterConfig | None = None, mask_format: str = "png",
                  split: str = "synthetic") -> DatasetManifest:
    """Synthetic dataset with images, masks, 2D/3D keypoints and true parameters.

    With ``out_dir`` the images go to ``images/``, masks to ``masks/`` and
    the manifest to ``manifest.json``; otherwise nothing touches disk.
    """
    raster = raster or RasterConfig()
    if mask_format not in ("png", "pgm"):
        raise ValueError("mask_format must be 'png' or 'pgm'")
    samples = synth_samples(tpl, n_samples, ranges, seed, raster)
    root = None if out_dir is None else Path(out_dir)
    records = []
    for smp in samples:
        rec = smp.record
        if root is not None:
            rec.image = f"images/{rec.sample_id}.png"
            rec.mask = f"masks/{rec.sample_id}.{mask_format}"
            save_image(root / rec.image, smp.image)
            save_mask(root / rec.mask, smp.mask)
        records.append(rec)
    meta = {"seed": seed, "template": tpl.name, "generator": "synth_dataset"}
    manifest = DatasetManifest(records, raster.width, raster.height, split, root, meta)
    if root is not None:
        save_manifest(manifest, root / "manifest.json")
    return manifest


def record_params(record: AnnotationRecord) -> FullParams | None:
    return None if record.params is None else unpack(record.params)
