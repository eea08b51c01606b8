"""The ``dtspr`` command line: synth, corrupt, train, eval, gradcheck, report.

Every subcommand echoes its fully resolved flags before acting, routes all
randomness through --seed, and exits nonzero with a single-line error on
failure.  Output directories receive a provenance.txt (the only place a
timestamp appears), so repeated runs are otherwise byte-identical.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import nn
from .corrupt import CorruptionSpec, corrupt_dataset
from .metrics import ReportRow, compute_metrics, rows_to_table, rows_to_tsv
from .model import (
    ClipBatch,
    ModelConfig,
    build_variant,
    config_from_json,
    config_to_json,
    load_model,
    predict,
    preset_config,
    save_model,
)
from .synth import GenConfig, derive_seed, generate_dataset
from .training import ClipSpec, TrainConfig, evaluate, load_videos, train, write_log

GRADCHECK_THRESHOLD = 1e-3


def _echo_config(sub: str, flags: dict) -> None:
    for key in sorted(flags):
        print(f"config {sub}.{key}={flags[key]}")


def _provenance(path: Path, sub: str, flags: dict, digest_hex: str) -> None:
    lines = [f"command: dtspr {sub}"]
    for key in sorted(flags):
        lines.append(f"flag {key}={flags[key]}")
    lines.append(f"config_digest: {digest_hex}")
    lines.append(f"timestamp: {datetime.datetime.now(datetime.timezone.utc).isoformat()}")
    path.write_text("\n".join(lines) + "\n")


def _variant_arg(value: str) -> str:
    return value.replace("-", "_")


def cmd_synth(args) -> int:
    h, _, w = args.size.partition("x")
    config = GenConfig(videos=args.videos, frames_min=args.frames_min,
                       frames_max=args.frames_max, height=int(h), width=int(w),
                       domain=args.domain, extract_noise=args.extract_noise,
                       seed=args.seed)
    flags = {"out": args.out, "videos": config.videos, "frames_min": config.frames_min,
             "frames_max": config.frames_max, "size": f"{config.height}x{config.width}",
             "domain": config.domain, "extract_noise": config.extract_noise,
             "seed": config.seed, "threads": args.threads}
    _echo_config("synth", flags)
    generate_dataset(config, args.out, threads=args.threads)
    digest = hashlib.sha256(config.to_text().encode()).hexdigest()
    _provenance(Path(args.out) / "provenance.txt", "synth", flags, digest)
    print(f"synth wrote {config.videos} videos to {args.out}")
    return 0


def cmd_corrupt(args) -> int:
    spec = CorruptionSpec(args.hue, args.brightness, args.contrast)
    flags = {"in": args.in_dir, "out": args.out, "hue": spec.hue_severity,
             "brightness": spec.brightness_severity, "contrast": spec.contrast_severity}
    _echo_config("corrupt", flags)
    corrupt_dataset(args.in_dir, args.out, spec)
    digest = hashlib.sha256(repr(spec).encode()).hexdigest()
    _provenance(Path(args.out) / "provenance.txt", "corrupt", flags, digest)
    print(f"corrupt wrote dataset to {args.out}")
    return 0


def _model_config_for(args) -> ModelConfig:
    overrides = {}
    if args.clip_len is not None:
        overrides["clip_len"] = args.clip_len
    return preset_config(_variant_arg(args.variant), args.preset, **overrides)


def cmd_train(args) -> int:
    model_cfg = _model_config_for(args)
    clip = ClipSpec(length=model_cfg.clip_len, rate=args.rate)
    train_cfg = TrainConfig(variant=model_cfg.variant, lr=args.lr, epochs=args.epochs,
                            batch=args.batch, seed=args.seed,
                            train_corrupt=args.train_corrupt == "on", clip=clip)
    flags = {"data": args.data, "variant": args.variant, "preset": args.preset,
             "epochs": args.epochs, "batch": args.batch, "lr": args.lr,
             "clip_len": model_cfg.clip_len, "rate": args.rate,
             "train_corrupt": args.train_corrupt, "seed": args.seed, "out": args.out}
    _echo_config("train", flags)
    videos = load_videos(args.data)
    result = train(train_cfg, model_cfg, videos)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, result.model)
    Path(str(out) + ".json").write_text(config_to_json(model_cfg) + "\n")
    write_log(str(out) + ".log", result.log_lines)
    _provenance(Path(str(out) + ".provenance.txt"), "train", flags, model_cfg.digest().hex())
    print(f"train wrote checkpoint {args.out} ({len(result.log_lines)} epochs logged)")
    if result.log_lines:
        print(f"final {result.log_lines[-1]}")
    return 0


def _load_checkpoint_with_sidecar(ckpt: str):
    sidecar = Path(ckpt + ".json")
    if not sidecar.exists():
        raise FileNotFoundError(f"missing model-config sidecar {sidecar}")
    config = config_from_json(sidecar.read_text())
    return load_model(ckpt, config), config


def cmd_eval(args) -> int:
    model, config = _load_checkpoint_with_sidecar(args.ckpt)
    flags = {"ckpt": args.ckpt, "data": args.data, "tag": args.tag, "out": args.out}
    _echo_config("eval", flags)
    videos = load_videos(args.data)
    preds = evaluate(model, videos)
    rep = compute_metrics(preds, [v.phases for v in videos])
    payload = {
        "variant": config.variant,
        "dataset": args.tag,
        "accuracy": rep.mean_accuracy,
        "precision": rep.macro_precision,
        "recall": rep.macro_recall,
        "jaccard": rep.macro_jaccard,
        "single_phase": rep.single_phase,
        "excluded": rep.excluded,
        "video_accuracies": rep.video_accuracies,
        "per_phase": [{"tp": c.tp, "fp": c.fp, "fn": c.fn,
                       "precision": p, "recall": r, "jaccard": j}
                      for c, p, r, j in zip(rep.counts, rep.precision, rep.recall, rep.jaccard)],
        "config_digest": config.digest().hex(),
        "flags": {k: str(v) for k, v in flags.items()},
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"eval {config.variant} on {args.tag}: acc={rep.mean_accuracy:.2f}")
    return 0


def cmd_gradcheck(args) -> int:
    variant = _variant_arg(args.variant)
    config = preset_config(variant, args.preset)
    flags = {"variant": args.variant, "preset": args.preset, "samples": args.samples,
             "seed": args.seed}
    _echo_config("gradcheck", flags)
    rng = np.random.default_rng(derive_seed(args.seed, "gradcheck", variant))
    model = build_variant(config, args.seed)
    side = 64 if args.preset == "tiny" else 24
    batch = ClipBatch(
        spatial=rng.random((1, config.clip_len, config.input_channels, side, side)),
        mask_tokens=(np.concatenate(
            [rng.standard_normal((1, config.clip_len, 10, 256)),
             rng.integers(0, 2, (1, config.clip_len, 10, 1)).astype(float)], axis=-1)
            if config.uses_mask_tokens else None),
        depth_tokens=(rng.standard_normal((1, config.clip_len, config.depth_token_dim))
                      if config.uses_depth_tokens else None))
    labels = rng.integers(0, config.n_phases, 1)

    def loss_fn():
        return nn.cross_entropy(predict(model, batch), labels)

    err = nn.grad_check(loss_fn, model.parameters(), eps=1e-4,
                        samples=args.samples, seed=args.seed)
    passed = err < GRADCHECK_THRESHOLD
    print(f"gradcheck variant={variant} preset={args.preset} "
          f"max_rel_err={err:.3e} threshold={GRADCHECK_THRESHOLD:g} "
          f"{'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def cmd_report(args) -> int:
    flags = {"inputs": ",".join(args.inputs), "format": args.format}
    _echo_config("report", flags)
    rows = []
    for path in args.inputs:
        payload = json.loads(Path(path).read_text())
        rows.append(ReportRow(
            variant=payload["variant"], dataset=payload["dataset"],
            accuracy=payload["accuracy"], precision=payload["precision"],
            recall=payload["recall"], jaccard=payload["jaccard"],
            excluded=payload.get("excluded", {}),
            single_phase=payload.get("single_phase", False)))
    text = rows_to_tsv(rows) if args.format == "tsv" else rows_to_table(rows)
    if args.out:
        Path(args.out).write_text(text)
        print(f"report wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtspr",
                                     description="digital-twin surgical phase recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic DTSEQ dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, required=True)
    p.add_argument("--frames-min", type=int, default=200)
    p.add_argument("--frames-max", type=int, default=400)
    p.add_argument("--size", default="64x64", help="HxW, e.g. 64x64")
    p.add_argument("--domain", choices=["A", "B"], default="A")
    p.add_argument("--extract-noise", type=int, default=0, choices=range(6))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("corrupt", help="write a photometrically corrupted copy of a dataset")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hue", type=int, default=0, choices=range(6))
    p.add_argument("--brightness", type=int, default=0, choices=range(6))
    p.add_argument("--contrast", type=int, default=0, choices=range(6))
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("train", help="train a variant and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", required=True,
                   choices=["dt", "depth", "mask", "raw", "raw-dtaug", "raw_dtaug"])
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--clip-len", type=int, default=None,
                   help="override the preset's clip length")
    p.add_argument("--rate", type=int, default=4)
    p.add_argument("--preset", choices=["tiny", "small"], default="small")
    p.add_argument("--train-corrupt", choices=["on", "off"], default="off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tag", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--variant", required=True,
                   choices=["dt", "depth", "mask", "raw", "raw-dtaug", "raw_dtaug"])
    p.add_argument("--preset", choices=["tiny", "small"], default="tiny")
    p.add_argument("--samples", type=int, default=2,
                   help="coordinates checked per parameter")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="render eval outputs as a robustness table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--format", choices=["tsv", "txt"], default="txt")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single-line machine-readable failure
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
