"""Command-line surface: MOO utilities, training, evaluation, comparison.

Exit codes: 0 success, 1 validation or precondition failure, 2 I/O failure.
Every command is deterministic given its inputs; wall-clock timestamps appear
only inside run manifests.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, model
from .autodiff import gradcheck_suite
from .data_io import bicubic_downscale, load_image, read_points_csv
from .metrics import gmsd, psnr, ssim
from .moo import Orientation, hypervolume_exact, hypervolume_mc, pareto_filter
from .synth import write_corpus

GRADCHECK_GATE = 1e-4

_ORIENTATIONS = {"min": Orientation.MINIMIZE, "max": Orientation.MAXIMIZE}

COMPARE_MODES = ("linear", "hv_log", "hv_log_norm")

RESULTS_HEADER = "mode,psnr,ssim,gmsd,clamp_events"


def _fmt12(v: float) -> str:
    """12 significant digits; exact zero prints as plain 0."""
    if v == 0.0:
        return "0"
    return np.format_float_positional(v, precision=12, unique=False, fractional=False)


def _fmt_point(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_json_atomic(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_hv(args) -> int:
    points = read_points_csv(args.points, _ORIENTATIONS[args.orient])
    ref = [float(v) for v in args.ref.split(",")]
    print(_fmt12(hypervolume_exact(points, ref)))
    if args.mc is not None:
        est, stderr = hypervolume_mc(points, ref, args.mc, args.seed)
        print(f"{_fmt12(est)} {_fmt12(stderr)}")
    return 0


def cmd_pareto(args) -> int:
    points = read_points_csv(args.points, _ORIENTATIONS[args.orient])
    for p in pareto_filter(points).points:
        print(",".join(_fmt_point(v) for v in p.values))
    return 0


def _eval_row(report_psnr: float, report_ssim: float, report_gmsd: float) -> str:
    psnr_field = "inf" if np.isinf(report_psnr) else f"{report_psnr:.6f}"
    return f"{psnr_field},{report_ssim:.6f},{report_gmsd:.6f}"


def cmd_eval(args) -> int:
    ref = load_image(args.ref)
    test = load_image(args.test)
    if ref.data.shape != test.data.shape:
        raise ValueError(
            f"shape mismatch: {args.ref} is {ref.data.shape}, "
            f"{args.test} is {test.data.shape}"
        )
    print(
        _eval_row(
            psnr(ref.data, test.data, peak=args.peak),
            ssim(ref.data, test.data),
            gmsd(ref.data, test.data),
        )
    )
    return 0


def cmd_train(args) -> int:
    raw_text = Path(args.config).read_text(encoding="utf-8")
    config = model.TrainConfig.from_dict(json.loads(raw_text))
    started = _utc_now()
    result = model.train(config)
    outputs = [result.pretrain_path, result.history_path, result.checkpoint_path]
    manifest = Path(config.output_dir) / "manifest.json"
    _write_json_atomic(
        manifest,
        {
            "artifact_version": __version__,
            "seed": config.seed,
            "started_at": started,
            "finished_at": _utc_now(),
            "config": raw_text,
            "outputs": outputs,
        },
    )
    print(f"wrote {result.history_path}")
    return 0


def _evaluate_generator(g: model.GeneratorNet, eval_paths) -> tuple[float, float, float]:
    """Average metrics of x4 SR reconstructions against the originals."""
    psnrs, ssims, gmsds = [], [], []
    for path in eval_paths:
        img = load_image(path)
        sr = model.apply_generator(g, bicubic_downscale(img, 4))
        psnrs.append(psnr(sr.data, img.data))
        ssims.append(ssim(sr.data, img.data))
        gmsds.append(gmsd(sr.data, img.data))
    return float(np.mean(psnrs)), float(np.mean(ssims)), float(np.mean(gmsds))


def cmd_compare(args) -> int:
    raw_text = Path(args.config).read_text(encoding="utf-8")
    config = model.TrainConfig.from_dict(json.loads(raw_text))
    if not config.eval_list:
        raise ValueError("compare requires a nonempty eval_list in the config")
    started = _utc_now()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    images = model.load_corpus(config.dataset)
    channels = images[0].channels
    g, d = model.init_networks(
        config.seed, channels, config.gen_width, config.disc_width
    )
    extractor = model.FeatureExtractor(channels, [config.seed, 3], config.feature_tap)
    pre_rows = model.pretrain_generator(
        g,
        images,
        config.pretrain_iters,
        config.lr,
        config.batch_size,
        config.patch_size,
        np.random.default_rng([config.seed, 1]),
        config.norm_p,
    )
    shared_params = g.params() + d.params()
    shared_ckpt = out / "pretrained.hvgn"
    model.save_checkpoint(shared_ckpt, shared_params)
    ckpt_sha = hashlib.sha256(shared_ckpt.read_bytes()).hexdigest()
    print(f"pretrained checkpoint sha256 {ckpt_sha}")
    model.write_pretrain_csv(out / "pretrain.csv", pre_rows)
    shared_state = model.load_checkpoint(shared_ckpt)

    outputs = [str(shared_ckpt), str(out / "pretrain.csv")]
    rows = []
    for mode_name in COMPARE_MODES:
        run_cfg = dataclasses.replace(
            config, mode=mode_name, output_dir=str(out / mode_name)
        )
        g_m, d_m = model.init_networks(
            config.seed, channels, config.gen_width, config.disc_width
        )
        model.set_state(g_m.params() + d_m.params(), shared_state)
        history = model.adversarial_phase(
            g_m, d_m, images, run_cfg, extractor,
            np.random.default_rng([config.seed, 2]),
        )
        mode_dir = out / mode_name
        mode_dir.mkdir(parents=True, exist_ok=True)
        history_path = mode_dir / "history.csv"
        model.write_history_csv(history_path, history)
        outputs.append(str(history_path))
        clamp_events = sum(int(r[8]) for r in history)
        mean_psnr, mean_ssim, mean_gmsd = _evaluate_generator(g_m, config.eval_list)
        rows.append((mode_name, mean_psnr, mean_ssim, mean_gmsd, clamp_events))

    results_path = out / "results.csv"
    lines = [RESULTS_HEADER]
    for (mode_name, p_, s_, g_, c_) in rows:
        lines.append(f"{mode_name},{repr(p_)},{repr(s_)},{repr(g_)},{c_}")
    results_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs.append(str(results_path))

    _write_json_atomic(
        out / "manifest.json",
        {
            "artifact_version": __version__,
            "seed": config.seed,
            "started_at": started,
            "finished_at": _utc_now(),
            "config": raw_text,
            "pretrained_checkpoint_sha256": ckpt_sha,
            "outputs": outputs,
        },
    )
    print(f"wrote {results_path}")
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(trials=10)
    failures = []
    for name, err in results:
        print(f"{name} {err:.3g}")
        if err > GRADCHECK_GATE:
            failures.append(name)
    if failures:
        print(f"failed primitives: {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    paths = write_corpus(args.out, args.seed, args.count, args.size)
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvgan",
        description=(
            "Hypervolume-scalarized GAN training at desk scale, plus Pareto "
            "and hypervolume utilities."
        ),
    )
    parser.add_argument("--version", action="version", version=f"hvgan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hv", help="exact (and optional Monte-Carlo) hypervolume")
    p.add_argument("points", help="headerless CSV, one objective vector per line")
    p.add_argument("--ref", required=True, help="reference point, e.g. '3,3'")
    p.add_argument("--orient", choices=("min", "max"), default="min")
    p.add_argument("--mc", type=int, default=None, help="Monte-Carlo sample count")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_hv)

    p = sub.add_parser("pareto", help="print the nondominated subset")
    p.add_argument("points")
    p.add_argument("--orient", choices=("min", "max"), default="min")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("train", help="run the two-phase training loop")
    p.add_argument("--config", required=True, help="JSON config path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM/GMSD of test against reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "compare", help="train baseline + both hypervolume modes from one checkpoint"
    )
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write the seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
