"""Command-line pipeline driver.

Subcommands: fixture-gen, simulate-sdr, train, expand, evaluate. Flags mirror
the library configs; an optional key=value config file supplies defaults that
explicit flags override. Exit codes: 0 success, 1 internal numeric failure,
2 invalid input or flags.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .exposure import SdrFrame, quantize8, simulate_sdr_sequence
from .fixture import FixtureConfig, generate_fixture
from .fusion import FusionConfig, expand_stack_offsets, fuse_stack
from .media_io import (
    FrameSequenceSpec,
    MediaFormatError,
    read_exposure_sidecar,
    read_hdr_sequence,
    read_sdr_sequence,
    write_exposure_sidecar,
    write_hdr_sequence,
    write_png8,
    write_sdr_sequence,
)
from .metrics import DisplayModel, PuCurve, evaluate_sequence
from .model import ModelConfig, load_weights, save_weights
from .nn import AdamConfig
from .training import TrainConfig, train_video

logger = logging.getLogger("zshdr")

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

DEFAULT_STACK = "-4,-2,0,2,4"


def _parse_offsets(text: str) -> list[float]:
    try:
        offsets = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValueError(f"bad --stack value {text!r}; expected comma-separated f-stops") from None
    if not offsets:
        raise ValueError("--stack must name at least one offset")
    return offsets


def _offset_tag(offset: float) -> str:
    sign = "m" if offset < 0 else "p"
    return f"{sign}{abs(int(offset))}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fixture_gen(args) -> int:
    config = FixtureConfig(
        n_frames=args.frames, size=args.size, seed=args.seed,
        disk_radiance=args.disk_radiance,
    )
    spec = FrameSequenceSpec(Path(args.output), args.pattern, "pfm", config.fps)
    frames = generate_fixture(config)
    write_hdr_sequence(frames, spec)
    print(f"wrote {len(frames)} ground-truth frames to {spec.directory}")
    return EXIT_OK


def cmd_simulate_sdr(args) -> int:
    in_spec = FrameSequenceSpec(Path(args.input), args.input_pattern, args.input_format, args.fps)
    out_spec = FrameSequenceSpec(Path(args.output), args.output_pattern, "png8", args.fps)
    hdr = read_hdr_sequence(in_spec)
    sdr, exposures = simulate_sdr_sequence(hdr, alpha=args.alpha)
    write_sdr_sequence(sdr, out_spec)
    sidecar = args.sidecar or str(out_spec.directory / "exposures.txt")
    write_exposure_sidecar(exposures, sidecar)
    print(f"wrote {len(sdr)} SDR frames to {out_spec.directory}, exposures to {sidecar}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = TrainConfig(
        max_epochs=args.max_epochs,
        adam=AdamConfig(args.lr, args.beta1, args.beta2, args.epsilon),
        lambda_cos=args.lambda_cos,
        seed=args.seed,
        early_stop_patience=args.early_stop_patience,
        checkpoint_every=args.checkpoint_every,
        model=ModelConfig(base_channels=args.base_channels),
    )
    spec = FrameSequenceSpec(Path(args.input), args.pattern, "png8", args.fps)
    video, fps = read_sdr_sequence(spec)
    if args.checkpoint_dir:
        Path(args.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    model, report = train_video(
        video, fps, config, log_path=args.log, checkpoint_dir=args.checkpoint_dir
    )
    save_weights(model, args.weights_out, include_moments=args.save_moments)
    last = report.epochs[-1]
    print(
        f"trained {report.final_epoch} epochs on {len(video)} frames; "
        f"final mean loss {last.total_loss:.6g}; weights -> {args.weights_out}"
    )
    return EXIT_OK


def cmd_expand(args) -> int:
    offsets = _parse_offsets(args.stack)
    fusion = FusionConfig(weight_floor=args.weight_floor)
    in_spec = FrameSequenceSpec(Path(args.input), args.pattern, "png8", args.fps)
    out_spec = FrameSequenceSpec(Path(args.output), args.output_pattern, args.output_format, args.fps)
    model = load_weights(args.weights)
    video, _ = read_sdr_sequence(in_spec)
    compensation = None
    if args.exposure_sidecar:
        exposures = read_exposure_sidecar(args.exposure_sidecar)
        if len(exposures) != len(video):
            raise ValueError(
                f"sidecar has {len(exposures)} exposures for {len(video)} frames"
            )
        compensation = [2.0 ** (-f) for f in exposures]

    dump_dir = Path(args.dump_stack) if args.dump_stack else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    def expand_one(item):
        i, frame = item
        stack = expand_stack_offsets(model, frame, offsets)
        fused = fuse_stack(stack, fusion)
        if compensation is not None:
            fused.pixels *= compensation[i]
        return i, stack, fused

    results = []
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(expand_one, enumerate(video)))
    else:
        results = [expand_one(item) for item in enumerate(video)]

    out_spec.directory.mkdir(parents=True, exist_ok=True)
    for i, stack, fused in results:
        write_hdr_sequence([fused], out_spec, start=i)
        if dump_dir is not None:
            for pixels, offset in zip(stack.frames, stack.offsets):
                name = f"{args.pattern % i}_{_offset_tag(offset)}.png"
                write_png8(SdrFrame(quantize8(pixels)), dump_dir / name)
    print(f"expanded {len(results)} frames to {out_spec.directory}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred_spec = FrameSequenceSpec(Path(args.pred), args.pred_pattern, args.pred_format, 30.0)
    ref_spec = FrameSequenceSpec(Path(args.ref), args.ref_pattern, args.ref_format, 30.0)
    preds = read_hdr_sequence(pred_spec)
    refs = read_hdr_sequence(ref_spec)
    display = DisplayModel(args.peak, args.black, args.percentile)
    _, csv_text = evaluate_sequence(preds, refs, display, PuCurve())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="zshdr",
        description="Per-video self-supervised SDR-to-HDR expansion pipeline",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="key=value file giving flag defaults")
        registry[name] = p
        return p

    p = sub("fixture-gen", cmd_fixture_gen, "generate the synthetic HDR ground-truth scene")
    p.add_argument("--output", required=True)
    p.add_argument("--pattern", default="frame_%06d")
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--disk-radiance", type=float, default=2.0)

    p = sub("simulate-sdr", cmd_simulate_sdr, "auto-expose an HDR sequence down to 8-bit SDR")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--input-pattern", default="frame_%06d")
    p.add_argument("--output-pattern", default="frame_%06d")
    p.add_argument("--input-format", default="pfm", choices=("pfm", "hdr"))
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("--alpha", type=float, default=0.9, help="auto-exposure smoothing factor")
    p.add_argument("--sidecar", default=None, help="per-frame exposure output path")

    p = sub("train", cmd_train, "train the residual network on one SDR video")
    p.add_argument("--input", required=True)
    p.add_argument("--weights-out", required=True)
    p.add_argument("--pattern", default="frame_%06d")
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("--max-epochs", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--lambda-cos", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--early-stop-patience", type=int, default=0)
    p.add_argument("--log", default=None, help="per-epoch loss log path")
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--save-moments", action="store_true")

    p = sub("expand", cmd_expand, "expand an SDR video to HDR with trained weights")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--pattern", default="frame_%06d")
    p.add_argument("--output-pattern", default="frame_%06d")
    p.add_argument("--output-format", default="pfm", choices=("pfm", "hdr"))
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("--stack", default=DEFAULT_STACK, help="comma-separated f-stop offsets")
    p.add_argument("--weight-floor", type=float, default=1e-4)
    p.add_argument("--dump-stack", default=None, help="directory for per-exposure PNG dumps")
    p.add_argument("--exposure-sidecar", default=None,
                   help="undo the recorded auto-exposure to output absolute radiance")
    p.add_argument("--threads", type=int, default=1)

    p = sub("evaluate", cmd_evaluate, "score predicted HDR frames against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--pred-pattern", default="frame_%06d")
    p.add_argument("--ref-pattern", default="frame_%06d")
    p.add_argument("--pred-format", default="pfm", choices=("pfm", "hdr"))
    p.add_argument("--ref-format", default="pfm", choices=("pfm", "hdr"))
    p.add_argument("--peak", type=float, default=1400.0)
    p.add_argument("--black", type=float, default=0.02)
    p.add_argument("--percentile", type=float, default=99.9)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    return parser, registry


def _load_config_file(path: str, sub_parser: argparse.ArgumentParser) -> dict:
    valid = {a.dest for a in sub_parser._actions}
    values: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            dest = key.strip().replace("-", "_")
            if dest not in valid:
                raise ValueError(f"{path}:{lineno}: unknown option {key.strip()!r}")
            values[dest] = value.strip()
    # let argparse's type converters run on the raw strings
    for action in sub_parser._actions:
        if action.dest in values and action.type is not None:
            values[action.dest] = action.type(values[action.dest])
    return values


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get("ZSHDR_LOG_LEVEL", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")

    parser, registry = build_parser()
    try:
        args, _ = parser.parse_known_args(argv)
        if args.config:
            registry[args.command].set_defaults(**_load_config_file(args.config, registry[args.command]))
        args = parser.parse_args(argv)
        return args.func(args)
    except FloatingPointError as exc:
        print(f"zshdr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, MediaFormatError) as exc:
        print(f"zshdr: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
