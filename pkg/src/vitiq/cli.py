"""Command-line surface: score, eval-edc, validate-gradient, inspect-model.

Every command is deterministic given its inputs, flags and seed, and emits
a run manifest (command, config echo, tool version, sha256 input digests)
alongside its output: commands that write files put a `<out>.manifest.json`
next to them, commands that print to stdout end with a single
`# manifest <json>` line.

Outputs are plain TSV so fixtures stay diff-able. Image scoring fans out
over a thread pool sized by --jobs; output order always follows input
order. The environment variable VITNT_EPS_NORM overrides the normalization
guard epsilon.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .degradation import (
    DEGRADATION_KINDS,
    NUM_LEVELS,
    DegradationSpec,
    apply as apply_degradation,
    derive_seed,
    read_ppm,
)
from .errors import ContractError, FormatError, ValidationError
from .evaluation import (
    default_reject_grid,
    edc_curve,
    group_distance_stats,
    join_qualities,
    read_pairs,
    read_qualities,
    spearman,
    write_edc_curve,
)
from .model_io import read_model, validate_model
from .quality_core import (
    AGGREGATION_MODES,
    DEFAULT_ALPHA,
    DEFAULT_EPS_NORM,
    QualityConfig,
    cross_block_distances,
    score_image,
)
from .vit_engine import forward_with_taps, preprocess

EPS_NORM_ENV = "VITNT_EPS_NORM"

_AGG_FLAG_TO_MODE = {
    "uniform": "uniform",
    "attn-last": "attention_last",
    "attn-all": "attention_all",
}


# --- run manifests ----------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reconstruct a run."""

    command: str
    config: dict
    tool_version: str
    input_digests: dict

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "config": self.config,
            "tool_version": self.tool_version,
            "input_digests": self.input_digests,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest(command: str, config: dict, input_paths) -> RunManifest:
    digests = {}
    for p in input_paths:
        try:
            digests[str(p)] = _sha256(p)
        except OSError:
            # unreadable inputs already surfaced as per-file errors; the
            # manifest still lists them so the run's inputs stay on record
            digests[str(p)] = None
    return RunManifest(command=command, config=config,
                       tool_version=__version__, input_digests=digests)


def _emit_manifest(manifest: RunManifest, out_path, stream) -> None:
    # file outputs get a sidecar; stream outputs get a trailing comment line
    if out_path is not None:
        Path(str(out_path) + ".manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    else:
        stream.write(f"# manifest {manifest.to_json()}\n")


# --- shared flag handling -----------------------------------------------------

def _parse_blocks(text: str) -> tuple:
    """`a..b` inclusive -> (a, a+1, ..., b)."""
    parts = text.split("..")
    if len(parts) != 2:
        raise ContractError(f"--blocks expects 'a..b', got {text!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ContractError(f"--blocks expects integer endpoints, got {text!r}") from None
    if hi < lo:
        raise ContractError(f"--blocks range is empty: {text!r}")
    return tuple(range(lo, hi + 1))


def _eps_norm_override() -> float:
    raw = os.environ.get(EPS_NORM_ENV)
    if raw is None:
        return DEFAULT_EPS_NORM
    try:
        value = float(raw)
    except ValueError:
        raise ContractError(f"{EPS_NORM_ENV}={raw!r} is not a number") from None
    return value


def _quality_config(args, num_blocks: int) -> QualityConfig:
    overrides = {
        "alpha": args.alpha,
        "aggregation": _AGG_FLAG_TO_MODE[args.agg],
        "eps_norm": _eps_norm_override(),
    }
    if args.blocks is not None:
        return QualityConfig(block_set=_parse_blocks(args.blocks), **overrides)
    return QualityConfig.default_for(num_blocks, **overrides)


def _config_echo(args, cfg: QualityConfig) -> dict:
    return {
        "model": str(args.model),
        "alpha": cfg.alpha,
        "block_set": list(cfg.block_set),
        "aggregation": cfg.aggregation,
        "eps_norm": cfg.eps_norm,
        "seed": getattr(args, "seed", None),
    }


def _add_quality_flags(sub):
    sub.add_argument("--model", required=True, help="VWTF model file")
    sub.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                     help="sharpness of the distance-to-quality mapping (default 1.0)")
    sub.add_argument("--blocks", default=None, metavar="A..B",
                     help="inclusive consecutive block range (default 0..min(L,12)-1)")
    sub.add_argument("--agg", choices=sorted(_AGG_FLAG_TO_MODE), default="attn-last",
                     help="patch aggregation rule (default attn-last)")


# --- score --------------------------------------------------------------------

def _score_one(path, model, cfg):
    img = preprocess(read_ppm(path))
    return score_image(img, model, cfg)


def cmd_score(args) -> int:
    model = read_model(args.model)
    cfg = _quality_config(args, model.config.num_blocks)
    paths = list(args.images)
    if not paths:
        raise ContractError("no images given")
    if args.per_patch and args.out is None:
        raise ContractError("--per-patch needs --out (the sidecar sits next to it)")

    def task(path):
        try:
            return path, _score_one(path, model, cfg), None
        except Exception as exc:  # per-file record; the run keeps going
            return path, None, exc

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(task, paths))
    else:
        results = [task(p) for p in paths]

    score_lines = []
    patch_lines = []
    failures = 0
    for path, result, exc in results:
        if exc is not None:
            failures += 1
            sys.stderr.write(f"error\t{path}\t{exc}\n")
            continue
        score_lines.append(f"{path}\t{result.image_score:.8f}\n")
        if args.per_patch:
            d_bar = result.per_patch_mean_distance
            q = result.per_patch_quality
            for ix in range(len(q)):
                patch_lines.append(f"{path}\t{ix}\t{float(d_bar[ix])!r}\t{float(q[ix])!r}\n")

    manifest = _manifest("score", _config_echo(args, cfg) | {"jobs": args.jobs},
                         [args.model] + paths)
    if args.out is None:
        sys.stdout.write("".join(score_lines))
        _emit_manifest(manifest, None, sys.stdout)
    else:
        Path(args.out).write_text("".join(score_lines), encoding="utf-8")
        if args.per_patch:
            sidecar = str(args.out) + ".patches.tsv"
            Path(sidecar).write_text("".join(patch_lines), encoding="utf-8")
        _emit_manifest(manifest, args.out, sys.stdout)

    if failures == len(paths):
        sys.stderr.write("error\tall images failed\n")
        return 1
    return 0


# --- eval-edc -------------------------------------------------------------------

def cmd_eval_edc(args) -> int:
    pairs = read_pairs(args.pairs)
    qualities = read_qualities(args.qualities)
    pairs = join_qualities(pairs, qualities)
    grid = default_reject_grid(args.grid)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sys.stdout.write("fmr_target\tthreshold\tauc\tpauc25\tcurve_file\n")
    for target in args.fmr:
        curve = edc_curve(pairs, target, grid, pair_quality=args.pair_quality)
        curve_path = out_dir / f"edc_fmr{target:g}.tsv"
        write_edc_curve(curve, curve_path)
        manifest = _manifest(
            "eval-edc",
            {"pairs": str(args.pairs), "qualities": str(args.qualities),
             "fmr_target": target, "grid": args.grid, "pair_quality": args.pair_quality},
            [args.pairs, args.qualities],
        )
        _emit_manifest(manifest, curve_path, sys.stdout)
        sys.stdout.write(
            f"{target:g}\t{curve.threshold!r}\t{curve.auc!r}\t{curve.pauc25!r}\t{curve_path}\n"
        )
    return 0


# --- validate-gradient ------------------------------------------------------------

def cmd_validate_gradient(args) -> int:
    model = read_model(args.model)
    cfg = _quality_config(args, model.config.num_blocks)
    image_paths = sorted(Path(args.images).glob("*.ppm"))
    if not image_paths:
        raise ContractError(f"no .ppm images found in {args.images}")

    def mean_distance(raw) -> float:
        taps = forward_with_taps(preprocess(raw), model)
        return float(np.mean(cross_block_distances(taps, cfg)))

    variants = []  # (level, raw image) in (image, kind, level) order
    for img_ix, path in enumerate(image_paths):
        raw = read_ppm(path)
        for kind_ix, kind in enumerate(args.kinds):
            for level in range(NUM_LEVELS):
                spec = DegradationSpec(
                    kind=kind, level=level,
                    seed=derive_seed(args.seed, img_ix, kind_ix, level),
                )
                variants.append((level, apply_degradation(raw, spec)))

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            distances = list(pool.map(lambda v: mean_distance(v[1]), variants))
    else:
        distances = [mean_distance(raw) for _, raw in variants]
    levels = [level for level, _ in variants]

    sys.stdout.write("level\tq1\tmedian\tq3\twhisker_lo\twhisker_hi\tmean\n")
    for st in group_distance_stats(zip(levels, distances)):
        sys.stdout.write(
            f"{st.level}\t{st.q1!r}\t{st.median!r}\t{st.q3!r}\t"
            f"{st.whisker_lo!r}\t{st.whisker_hi!r}\t{st.mean!r}\n"
        )
    try:
        rho = spearman(levels, distances)
        sys.stdout.write(f"spearman\t{rho!r}\n")
    except ContractError as exc:  # reporting, not asserting
        sys.stdout.write(f"spearman\tundefined\t{exc}\n")

    manifest = _manifest(
        "validate-gradient",
        _config_echo(args, cfg) | {"kinds": list(args.kinds), "jobs": args.jobs},
        [args.model] + image_paths,
    )
    _emit_manifest(manifest, None, sys.stdout)
    return 0


# --- inspect-model -----------------------------------------------------------------

def cmd_inspect_model(args) -> int:
    model = read_model(args.model, validate=False)
    sys.stdout.write(f"config\t{model.config.to_json()}\n")
    for name in sorted(model.tensors):
        shape = "x".join(str(d) for d in model.tensors[name].shape)
        sys.stdout.write(f"tensor\t{name}\t{shape}\n")
    violations = validate_model(model)
    for v in violations:
        sys.stdout.write(f"violation\t{v}\n")
    sys.stdout.write(f"violations\t{len(violations)}\n")
    manifest = _manifest("inspect-model", {"model": str(args.model)}, [args.model])
    _emit_manifest(manifest, None, sys.stdout)
    return 1 if violations else 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitiq",
        description="Training-free face image quality scoring and verification-error evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("score", help="score images: one `path\\tQ` line per image")
    _add_quality_flags(p)
    p.add_argument("images", nargs="+", help="PPM images sized to the model's input")
    p.add_argument("--out", default=None, help="score file (default: stdout)")
    p.add_argument("--per-patch", action="store_true",
                   help="also write `<out>.patches.tsv` with per-patch distance and quality")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-edc", help="error-versus-discard curves from pair and quality files")
    p.add_argument("--pairs", required=True, help="id_a\\tid_b\\tsimilarity\\tis_genuine file")
    p.add_argument("--qualities", required=True, help="id\\tscore file")
    p.add_argument("--fmr", type=float, nargs="+", action="extend", default=None,
                   help="FMR target(s), repeatable (default 1e-3)")
    p.add_argument("--grid", type=int, default=101, help="reject-grid size over [0,1] (default 101)")
    p.add_argument("--pair-quality", choices=("min", "mean"), default="min",
                   help="pairwise quality combination rule (default min)")
    p.add_argument("--out-dir", default=".", help="directory for curve files (default .)")
    p.set_defaults(func=cmd_eval_edc)

    p = sub.add_parser("validate-gradient",
                       help="degrade images over 11 levels and report distance stats per level")
    _add_quality_flags(p)
    p.add_argument("--images", required=True, help="directory of source .ppm images")
    p.add_argument("--kinds", nargs="+", choices=DEGRADATION_KINDS,
                   default=list(DEGRADATION_KINDS), help="degradation kinds (default: all)")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="base seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.set_defaults(func=cmd_validate_gradient)

    p = sub.add_parser("inspect-model", help="print model config, tensor inventory and violations")
    p.add_argument("--model", required=True, help="VWTF model file")
    p.set_defaults(func=cmd_inspect_model)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "fmr", None) is None and args.subcommand == "eval-edc":
        args.fmr = [1e-3]
    if getattr(args, "jobs", 1) < 1:
        sys.stderr.write("error\t--jobs must be >= 1\n")
        return 1
    try:
        return args.func(args)
    except (ContractError, FormatError, ValidationError, OSError) as exc:
        sys.stderr.write(f"error\t{exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
