"""Command-line entry point: ``handfit <command> [options]``.

Every option can also come from a ``--config`` file of ``key = value``
lines (``#`` starts a comment; keys use the long option names with
dashes or underscores). Command-line flags win over the file.

On failure a single line ``error: <category>: <message>`` goes to stderr
and the exit code identifies the category (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import GROUPS, AugmentationConfig, augment
from .camera import FullParams, ViewParams, unpack
from .dataset import SynthRanges, load_manifest, synth_dataset
from .errors import HandfitError, SchemaError
from .gradcheck import run_gradcheck
from .imaging import draw_overlay, load_image, save_image, save_mask
from .metrics import DEFAULT_THRESHOLDS
from .objectives import LossWeights
from .optim import OptimizerConfig
from .pipeline import (
    evaluate_predictions,
    fit_manifest,
    fit_manifest_with_adapter,
    load_predictions,
    save_predictions,
)
from .renderer import RasterConfig
from .report import emit_report
from .scene import predict
from .template import load_template, make_toy_template, save_template

EXIT_CODES = {
    "usage": 2,
    "dimension": 3,
    "schema": 4,
    "invariant": 5,
    "degenerate": 6,
    "divergence": 7,
    "io": 8,
    "gradcheck": 9,
    "error": 1,
}

log = logging.getLogger("handfit")


class _Parser(argparse.ArgumentParser):
    """Usage errors as one ``error: usage: ...`` line."""

    def error(self, message):
        print(f"error: usage: {self.prog}: {' '.join(message.split())}", file=sys.stderr)
        raise SystemExit(EXIT_CODES["usage"])


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# config file


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines into a dict with underscore keys."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, values: dict[str, str]):
    """Turn config entries into parser defaults, converting through each
    option's own type so the file and the flags agree."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise SchemaError(f"unknown config keys for this command: {', '.join(unknown)}")
    defaults = {}
    for key, text in values.items():
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = text.lower() in ("1", "true", "yes", "on")
            defaults[key] = flag if isinstance(action, argparse._StoreTrueAction) else not flag
        elif action.type is not None:
            try:
                defaults[key] = action.type(text)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"config key {key}: {exc}") from exc
        else:
            defaults[key] = text
    sub.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# argument types


def _weights(text: str) -> LossWeights:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("weights need five values: w_sfe,w_3d,w_2d,w_mask,w_reg")
    return LossWeights.from_sequence(float(p) for p in parts)


def _groups(text: str) -> tuple[str, ...]:
    groups = tuple(g for g in text.replace(" ", "").split(",") if g)
    bad = set(groups) - set(GROUPS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown groups {sorted(bad)}; choose from {','.join(GROUPS)}")
    return groups


def _template(path):
    return make_toy_template() if path in (None, "", "toy") else load_template(path)


def _optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(lr=args.lr, max_iters=args.steps, tol=args.tol, patience=args.patience,
                           view_only_iters=args.view_only_steps, translation_scale=args.translation_scale)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    tpl = _template(args.template)
    ranges = SynthRanges(tx=(args.tx_min, args.tx_max), ty=(args.ty_min, args.ty_max), s=(args.s_min, args.s_max),
                         r=(-args.r_max, args.r_max), theta=(-args.theta_max, args.theta_max),
                         beta=(-args.beta_max, args.beta_max))
    raster = RasterConfig(width=args.size, height=args.size)
    manifest = synth_dataset(tpl, args.n, ranges, args.seed, args.out, raster, args.mask_format)
    if args.save_template:
        save_template(tpl, Path(args.out) / "template.json")
    print(f"wrote {len(manifest)} samples to {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_fit(args) -> int:
    tpl = _template(args.template)
    manifest = load_manifest(args.manifest)
    cfg = _optimizer_config(args)
    use = dict(use_mask=not args.no_mask)
    if args.adapt_skeleton:
        preds, adapter = fit_manifest_with_adapter(manifest, tpl, args.weights, cfg, limit=args.limit, **use)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        np.savez(Path(args.out) / "adapter.npz", matrix=adapter.matrix, bias=adapter.bias)
    else:
        preds = fit_manifest(manifest, tpl, args.weights, cfg, use_2d=not args.no_2d, use_3d=not args.no_3d,
                             seed=args.seed, init_jitter=args.init_jitter, jobs=args.jobs, limit=args.limit, **use)
    out = Path(args.out)
    meta = {"manifest": str(args.manifest), "weights": args.weights.as_dict(), "optimizer": vars(cfg),
            "seed": args.seed}
    save_predictions(preds, out / "predictions.json", meta)
    report = evaluate_predictions({p.sample_id: p.keypoints_3d for p in preds}, manifest)
    overlays = {}
    if args.overlays:
        raster = RasterConfig(width=manifest.width, height=manifest.height)
        by_id = {r.sample_id: r for r in manifest.records}
        for p in preds:
            rec = by_id[p.sample_id]
            base = load_image(manifest.resolve(rec.image)) if rec.image else np.zeros(raster.shape + (3,), np.uint8)
            sil = predict(p.params, tpl, raster).silhouette
            overlays[p.sample_id] = draw_overlay(base, p.keypoints_2d, sil, rec.keypoints_2d, radius=0.8)
    emit_report(report, [p.result for p in preds], out, overlays)
    if report.per_sample_epe:
        print(f"fitted {len(preds)} samples: mean EPE {report.mean_epe:.4f} mm, AUC {report.auc:.4f}")
    else:
        print(f"fitted {len(preds)} samples (no 3D ground truth to score)")
    return 0


def _read_params(path, sample: str | None = None) -> FullParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"parameter file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(doc, dict) and isinstance(doc.get("samples"), list):  # a predictions file
        chosen = [d for d in doc["samples"] if sample is None or str(d.get("id")) == sample]
        if not chosen:
            raise SchemaError(f"{path}: no sample {sample!r}")
        doc = chosen[0]
    if isinstance(doc, list):
        return unpack(doc)
    if isinstance(doc, dict) and "params" in doc:
        return unpack(doc["params"])
    if isinstance(doc, dict) and {"t", "s", "r"} <= set(doc):
        return FullParams(ViewParams(doc["t"], doc["s"], doc["r"]), doc.get("theta", np.zeros(45)),
                          doc.get("beta", np.zeros(10)))
    raise SchemaError(f"{path}: expected 61 values, {{'params': [...]}}, t/s/r/theta/beta keys or a predictions file")


def cmd_render(args) -> int:
    tpl = _template(args.template)
    params = _read_params(args.params, args.sample)
    raster = RasterConfig(width=args.size, height=args.size)
    pred = predict(params, tpl, raster)
    out = Path(args.out)
    save_mask(out, pred.silhouette)
    if args.overlay:
        base = load_image(args.image) if args.image else np.zeros(raster.shape + (3,), np.uint8)
        save_image(args.overlay, draw_overlay(base, pred.keypoints_2d, pred.silhouette, radius=0.8))
    print(f"rendered {int(pred.silhouette.sum())} pixels to {out}")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest, check_files=False)
    predicted = load_predictions(args.predictions)
    thresholds = np.arange(args.t_min, args.t_max + args.t_step / 2, args.t_step)
    report = evaluate_predictions(predicted, manifest, thresholds)
    emit_report(report, None, args.out)
    print(f"{len(report.per_sample_epe)} samples: mean EPE {report.mean_epe:.4f} mm, AUC {report.auc:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(args.points, args.seed, args.h, _template(args.template), args.tolerance)
    for line in report.lines():
        print(line)
    if not report.passed:
        raise CliError("gradcheck", f"max relative error {report.max_rel_error:.2e} >= {args.tolerance}")
    print(f"gradcheck passed: max relative error {report.max_rel_error:.2e}")
    return 0


def cmd_augment(args) -> int:
    if args.image:
        image = load_image(args.image)
    else:
        tpl = _template(args.template)
        from .dataset import synth_samples  # preview on a synthetic hand

        image = synth_samples(tpl, 1, seed=args.seed)[0].image
    cfg = AugmentationConfig(groups=args.groups, max_groups=args.max_groups, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "original.png", image)
    for i in range(args.count):
        aug, _, applied = augment(image, None, cfg, seed=args.seed + i)
        save_image(out / f"augmented_{i:03d}.png", aug)
        print(f"augmented_{i:03d}.png: {','.join(applied) or 'none'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="handfit", description="Model-based hand pose fitting toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, help_text, func):
        p = subs.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file with defaults for any option")
        p.add_argument("--template", default="toy", help="template JSON path, or 'toy' (default)")
        p.set_defaults(func=func)
        return p

    p = sub("synth", "generate a synthetic dataset", cmd_synth)
    p.add_argument("--n", type=int, default=50, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth", help="output directory")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--mask-format", choices=("png", "pgm"), default="png")
    p.add_argument("--save-template", action="store_true", help="also write template.json")
    for name, default in (("tx-min", 28.0), ("tx-max", 36.0), ("ty-min", 46.0), ("ty-max", 52.0),
                          ("s-min", 0.20), ("s-max", 0.25), ("r-max", 0.3), ("theta-max", 0.35), ("beta-max", 1.0)):
        p.add_argument(f"--{name}", type=float, default=default)

    p = sub("fit", "fit the hand model to every sample of a manifest", cmd_fit)
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", type=_weights, default=LossWeights(), help="w_sfe,w_3d,w_2d,w_mask,w_reg")
    p.add_argument("--steps", type=int, default=OptimizerConfig.max_iters, help="maximum iterations")
    p.add_argument("--lr", type=float, default=OptimizerConfig.lr, help="Adam step size")
    p.add_argument("--tol", type=float, default=OptimizerConfig.tol)
    p.add_argument("--patience", type=int, default=OptimizerConfig.patience)
    p.add_argument("--view-only-steps", type=int, default=OptimizerConfig.view_only_iters)
    p.add_argument("--translation-scale", type=float, default=OptimizerConfig.translation_scale)
    p.add_argument("--seed", type=int, default=0, help="seed for --init-jitter")
    p.add_argument("--init-jitter", type=float, default=0.0, help="std of noise added to the initial r, theta, beta")
    p.add_argument("--out", default="fit_out")
    p.add_argument("--limit", type=int, default=None, help="fit only the first N samples")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-mask", action="store_true", help="ignore silhouettes")
    p.add_argument("--no-2d", action="store_true", help="ignore 2D keypoints")
    p.add_argument("--no-3d", action="store_true", help="ignore 3D keypoints")
    p.add_argument("--adapt-skeleton", action="store_true", help="jointly fit a shared skeleton adapter")
    p.add_argument("--overlays", action="store_true", help="write keypoint/silhouette overlay PNGs")

    p = sub("render", "render a parameter file to a silhouette", cmd_render)
    p.add_argument("--params", required=True, help="JSON: 61 values, {'params': [...]}, or t/s/r/theta/beta")
    p.add_argument("--sample", default=None, help="sample id when --params is a predictions file")
    p.add_argument("--out", default="silhouette.png", help="mask path (.png or .pgm)")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--overlay", default=None, help="also write an overlay PNG here")
    p.add_argument("--image", default=None, help="background image for the overlay")

    p = sub("eval", "score predictions against a manifest", cmd_eval)
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default="eval_out")
    p.add_argument("--t-min", type=float, default=float(DEFAULT_THRESHOLDS[0]))
    p.add_argument("--t-max", type=float, default=float(DEFAULT_THRESHOLDS[-1]))
    p.add_argument("--t-step", type=float, default=1.0)

    p = sub("gradcheck", "compare analytic and finite-difference gradients", cmd_gradcheck)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub("augment", "write augmented previews of an image", cmd_augment)
    p.add_argument("--image", default=None, help="input image (default: a synthetic hand)")
    p.add_argument("--out", default="augment_out")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", type=_groups, default=GROUPS)
    p.add_argument("--max-groups", type=int, default=4)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, HandfitError):
        return exc.category
    if isinstance(exc, (FileNotFoundError, PermissionError, OSError)):
        return "io"
    return "error"


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.config:
            sub = parser._subparsers._group_actions[0].choices[args.command]
            _apply_config(parser, sub, read_config(args.config))
            args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors and --help
        code = exc.code if isinstance(exc.code, int) else EXIT_CODES["usage"]
        return code
    except (CliError, HandfitError, OSError, ValueError, ArithmeticError) as exc:
        category = _category(exc)
        message = " ".join(str(exc).split())
        print(f"error: {category}: {message}", file=sys.stderr)
        return EXIT_CODES.get(category, 1)


if __name__ == "__main__":
    sys.exit(main())
