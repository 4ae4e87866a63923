"""Command-line harness.

Subcommands:
    attack      single-image attack run, trace + result files
    ablation    bias-grid experiment from a JSON config
    serve-stub  run the reference /classify oracle service
    verify      run the library's invariant suites

All outputs are deterministic given --seed; rerunning an invocation
produces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .biases import BiasConfig
from .config import (
    DEFAULT_THRESHOLD_FACTOR,
    build_criterion,
    build_oracle,
    build_surrogate,
    generate_instances,
)
from .engine import run_bba, run_random_guessing
from .errors import BBAttackError
from .harness import emit_report, fmt, run_ablation, write_trace_file
from .surrogate import make_gradient_provider
from .tensor_core import ImageShape

DEFAULT_SHAPE = "32x32x1"
DEFAULT_POOL = [{"along": 2.0, "lateral": 3.0}, {"along": 3.0, "lateral": 2.0},
                {"along": 4.0, "lateral": 0.5}]


def _parse_shape(text: str) -> list[int]:
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must look like 64x64x3, got {text!r}")
    return parts


def _center_region(shape: ImageShape) -> list[int]:
    return [shape.height // 4, shape.width // 4, shape.height // 2, shape.width // 2]


def oracle_spec_from_flags(args) -> dict:
    shape = args.shape
    image_shape = ImageShape(*shape)
    linear = {"kind": "linear", "shape": shape, "weights": {"pattern": "smooth", "seed": 0}}
    if args.oracle == "linear":
        spec = linear
    elif args.oracle == "lowpass":
        spec = {"kind": "lowpass", "radius": args.blur_radius, "inner": linear}
    elif args.oracle == "region":
        spec = {"kind": "region", "region": _center_region(image_shape), "inner": linear}
    elif args.oracle == "composite":
        spec = {"kind": "lowpass", "radius": args.blur_radius,
                "inner": {"kind": "region", "region": _center_region(image_shape), "inner": linear}}
    elif args.oracle == "remote":
        if not args.endpoint:
            raise BBAttackError("--oracle remote requires --endpoint")
        return {"kind": "remote", "endpoint": args.endpoint, "shape": shape}
    else:
        raise BBAttackError(f"unknown oracle {args.oracle!r}")
    spec["margin"] = args.margin
    return spec


def criterion_spec_from_flag(text: str) -> dict:
    kind, _, rest = text.partition(":")
    if kind == "target" and rest:
        return {"kind": "exact-target", "target": rest}
    if kind == "in-set" and rest:
        return {"kind": "label-in-set", "allowed": rest.split("|")}
    if kind == "substring" and rest:
        required, _, forbidden = rest.partition("!")
        spec = {"kind": "substring-match", "required": required}
        if forbidden:
            spec["forbidden"] = forbidden.split(",")
        return spec
    raise BBAttackError(
        f"bad --criterion {text!r}; use target:LABEL, in-set:A|B, or substring:REQ[!BAD1,BAD2]")


def bias_config_from_flags(args) -> BiasConfig:
    names = set()
    if args.biases and args.biases != "none":
        names = {part.strip() for part in args.biases.split(",") if part.strip()}
    unknown = names - {"perlin", "mask", "gradient"}
    if unknown:
        raise BBAttackError(f"unknown bias name(s) {sorted(unknown)}; pick from perlin,mask,gradient")
    return BiasConfig(use_perlin="perlin" in names, use_mask="mask" in names,
                      use_gradient="gradient" in names, gradient_weight=args.gradient_weight)


def _load_instance(args, oracle):
    if args.image:
        x_orig = np.load(args.image).astype(np.float64)
        if not args.start:
            raise BBAttackError("--image requires at least one --start")
        pool = [np.load(p).astype(np.float64) for p in args.start]
        return x_orig, pool
    images_spec = {"kind": "synthetic", "count": 1, "image_seed": args.seed,
                   "base": "smooth", "pool": {"mode": "oracle-direction", "candidates": DEFAULT_POOL}}
    instance = generate_instances(images_spec, oracle)[0]
    return instance.x_orig, instance.pool


def cmd_attack(args) -> int:
    oracle_spec = oracle_spec_from_flags(args)
    oracle = build_oracle(oracle_spec)
    criterion = build_criterion(criterion_spec_from_flag(args.criterion))
    bias = bias_config_from_flags(args)
    threshold = (DEFAULT_THRESHOLD_FACTOR * math.sqrt(oracle.shape.k)
                 if args.threshold == "auto" else float(args.threshold))

    x_orig, pool = _load_instance(args, oracle)

    provider = None
    if bias.use_gradient:
        if args.surrogate:
            setup = build_surrogate({"kind": "file", "path": args.surrogate,
                                     "target_class": args.surrogate_target}, oracle)
        else:
            setup = build_surrogate({"kind": "from-oracle"}, oracle)
        provider = make_gradient_provider(setup.model, x_orig, setup.target_class,
                                          setup.retreat_fraction)

    rng = np.random.default_rng(args.seed)
    if args.method == "bba":
        result = run_bba(oracle, criterion, x_orig, pool, bias, budget=args.budget,
                         threshold=threshold, rng=rng, gradient_provider=provider)
    else:
        distribution = "perlin" if args.method == "random-perlin" else "normal"
        result = run_random_guessing(oracle, criterion, x_orig, distribution,
                                     budget=args.budget, initial_epsilon=args.initial_epsilon,
                                     rng=rng, threshold=threshold)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_file(out / "trace.csv", result.trace)
    summary = {
        "method": args.method,
        "oracle": args.oracle,
        "criterion": args.criterion,
        "biases": bias.label(),
        "gradient_weight": bias.gradient_weight,
        "seed": args.seed,
        "budget": args.budget,
        "threshold": threshold,
        "queries": result.queries,
        "final_distance": result.distance,
        "success": result.success,
    }
    (out / "result.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8", newline="\n")
    if result.x_adv is not None:
        np.save(out / "x_adv.npy", result.x_adv)
    print(f"{args.method}: distance {fmt(result.distance)} after {result.queries} queries "
          f"(threshold {fmt(threshold)}, success={str(result.success).lower()})")
    return 0


def cmd_ablation(args) -> int:
    from .config import load_config

    config = load_config(args.config)
    if args.out:
        config.output_dir = args.out
    report = run_ablation(config)
    written = emit_report(report, config.output_dir)
    print(f"wrote {written['summary_csv']} ({len(report.summaries)} rows, "
          f"{len(report.runs)} runs)")
    return 0


def cmd_serve_stub(args) -> int:
    from .service import serve

    if args.fixed_labels:
        spec = {"kind": "fixed", "shape": args.shape, "labels": args.fixed_labels.split(",")}
    else:
        spec = oracle_spec_from_flags(args)
    oracle = build_oracle(spec)
    print(f"serving {spec['kind']} oracle on http://{args.host}:{args.port}/classify "
          f"(shape {tuple(args.shape)})")
    serve(oracle, host=args.host, port=args.port)
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    return 0 if run_all() else 1


def _add_oracle_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--oracle", default="linear",
                        choices=["linear", "lowpass", "region", "composite", "remote"])
    parser.add_argument("--shape", type=_parse_shape, default=_parse_shape(DEFAULT_SHAPE),
                        help="image shape HxWxC (default %s)" % DEFAULT_SHAPE)
    parser.add_argument("--margin", type=float, default=1.0,
                        help="toy-oracle boundary margin from the mid-gray image")
    parser.add_argument("--blur-radius", type=int, default=2)
    parser.add_argument("--endpoint", help="remote oracle base URL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bbattack",
                                     description="Decision-based boundary attacks with biased sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    attack = sub.add_parser("attack", help="attack a single image")
    _add_oracle_flags(attack)
    attack.add_argument("--criterion", default="target:pos")
    attack.add_argument("--budget", type=int, default=1000)
    attack.add_argument("--threshold", default="auto")
    attack.add_argument("--biases", default="none",
                        help="comma list from perlin,mask,gradient (or 'none')")
    attack.add_argument("--gradient-weight", type=float, default=0.5)
    attack.add_argument("--seed", type=int, default=0)
    attack.add_argument("--out", default="attack_out")
    attack.add_argument("--method", default="bba",
                        choices=["bba", "random-normal", "random-perlin"])
    attack.add_argument("--initial-epsilon", type=float, default=10.0)
    attack.add_argument("--image", help="original image (.npy, HxWxC in [0,1])")
    attack.add_argument("--start", action="append", default=[],
                        help="candidate starting image (.npy); repeatable")
    attack.add_argument("--surrogate", help="surrogate parameter file for the gradient bias")
    attack.add_argument("--surrogate-target", type=int, default=0)
    attack.set_defaults(func=cmd_attack)

    ablation = sub.add_parser("ablation", help="run a bias-grid experiment")
    ablation.add_argument("--config", required=True)
    ablation.add_argument("--out", help="override the config's output_dir")
    ablation.set_defaults(func=cmd_ablation)

    stub = sub.add_parser("serve-stub", help="serve the reference classify oracle")
    _add_oracle_flags(stub)
    stub.add_argument("--host", default="127.0.0.1")
    stub.add_argument("--port", type=int, default=8000)
    stub.add_argument("--fixed-labels", help="serve fixed labels instead of a toy oracle")
    stub.set_defaults(func=cmd_serve_stub)

    verify = sub.add_parser("verify", help="run invariant self-checks")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BBAttackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
