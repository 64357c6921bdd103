"""Command-line surface for the full hide/recover pipeline.

Subcommands compose into the two sides of the protocol:

    sender:    fit -> keygen -> hide
    receiver:  recover -> render

plus metrics (psnr, ber, erate), pool build/export for detectability
studies, and a gradcheck self-test.

Exit codes: 0 success, 2 I/O, 3 file format, 4 bad arguments or structure,
5 training divergence. All randomness flows from explicit --seed flags;
when stdin is not a terminal a missing seed is an error rather than a
silent time-based default.

Width flags name hidden layers only ("--widths 64,64,64"); input and output
widths are inferred from the data arity or the secret model.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import codec, pool, recovery, training
from .errors import ArgumentError, SinrError
from .expansion import ExpansionPlan, embed, expansion_rate, keygen
from .model import (
    FunctionSpec,
    ModelFile,
    RffConfig,
    Role,
    Strategy,
    init_params,
    load_key,
    load_model,
    param_count,
    pinned_rng,
    save_key,
    save_model,
)
from .numerics import ActivationKind, gradcheck


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with the argument exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(4, f"{self.prog}: error: {message}\n")


def _widths(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad width list {text!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError(f"widths must be positive, got {text!r}")
    return widths


def _shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(tok) for tok in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, want HxW") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"shape must be positive, got {text!r}")
    return h, w


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, want lo,hi") from None
    return lo, hi


def _rff(text: str) -> tuple[int, float, int | None]:
    toks = text.split(",")
    try:
        if len(toks) == 2:
            return int(toks[0]), float(toks[1]), None
        if len(toks) == 3:
            return int(toks[0]), float(toks[1]), int(toks[2])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"bad rff spec {text!r}, want m,sigma[,seed]")


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    if not sys.stdin.isatty():
        raise ArgumentError("--seed is required when not running interactively")
    import time

    fallback = time.time_ns() & 0xFFFFFFFFFFFFFFFF
    print(f"warning: no --seed given, using time-derived seed {fallback}", file=sys.stderr)
    return fallback


def _train_config(args, seed: int) -> training.TrainConfig:
    return training.TrainConfig(
        eta=args.eta,
        epochs=args.epochs,
        batch_size=args.batch,
        resample=args.resample,
        seed=seed,
        log_every=args.log_every,
    )


def _add_train_flags(p: argparse.ArgumentParser, default_eta: float) -> None:
    p.add_argument("--eta", type=float, default=default_eta, help="learning rate")
    p.add_argument("--epochs", type=int, default=2000, help="training epochs")
    p.add_argument("--batch", type=int, default=None,
                   help="batch size (default: full batch)")
    p.add_argument("--resample", action="store_true",
                   help="redraw the batch subset every epoch")
    p.add_argument("--log-every", type=int, default=10, help="loss log cadence")
    p.add_argument("--curve", default=None, help="write the loss curve CSV here")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _finish_training(args, report: training.TrainReport) -> None:
    if args.curve:
        with open(args.curve, "w", encoding="utf-8") as fh:
            fh.write(report.curve_csv())
    print(report.summary())
    if report.diverged:
        raise SystemExit(5)


def _data_arity(signal) -> int:
    return signal.channels if isinstance(signal, codec.RasterImage) else 1


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_fit(args) -> int:
    seed = _resolve_seed(args.seed)
    signal = pool.load_signal(args.data)
    rff = None
    if args.rff is not None:
        m, sigma, rff_seed = args.rff
        rff = RffConfig(m=m, sigma=sigma, seed=rff_seed if rff_seed is not None else seed)
    spec = FunctionSpec(
        layer_widths=(2, *args.widths, _data_arity(signal)),
        activation=ActivationKind(args.activation),
        rff=rff,
    )
    cfg = _train_config(args, seed)
    mf, report = training.fit_secret(signal, spec, cfg, verbose=not args.quiet)
    if args.role == "plain":
        mf = ModelFile(spec=mf.spec, role=Role.PLAIN, params=mf.params)
    if not report.diverged:
        save_model(args.out, mf)
        print(f"wrote {args.out}: {list(spec.layer_widths)}, {param_count(spec)} params")
    _finish_training(args, report)
    return 0


def cmd_keygen(args) -> int:
    seed = _resolve_seed(args.seed)
    secret = load_model(args.secret)
    out_width = args.stego_out if args.stego_out is not None else secret.spec.d_out
    plan = ExpansionPlan(
        strategy=Strategy(args.strategy),
        stego_widths=(secret.spec.d_in, *args.stego_widths, out_width),
        seed=seed,
    )
    key = keygen(secret.spec, plan)
    save_key(args.out, key)
    print(
        f"wrote {args.out}: {args.strategy} key, popcounts {key.popcounts()}, "
        f"expansion rate {expansion_rate(secret.spec, plan.stego_spec(secret.spec)):.3f}"
    )
    return 0


def cmd_hide(args) -> int:
    seed = _resolve_seed(args.seed)
    secret = load_model(args.secret)
    key = load_key(args.key)
    cover = pool.load_signal(args.cover)
    scaffold = embed(secret, key, init_seed=seed)
    if scaffold.spec.d_out != _data_arity(cover):
        raise ArgumentError(
            f"cover has {_data_arity(cover)} feature channels, stego outputs "
            f"{scaffold.spec.d_out}"
        )
    ds = pool.signal_dataset(cover)
    cfg = _train_config(args, seed)
    params, report = training.fit_masked(
        scaffold.spec, scaffold.params, scaffold.mask, ds, cfg, verbose=not args.quiet
    )
    if not report.diverged:
        save_model(args.out, ModelFile(spec=scaffold.spec, role=Role.STEGO, params=params))
        print(
            f"wrote {args.out}: {list(scaffold.spec.layer_widths)}, "
            f"{scaffold.mask.frozen_count()} frozen / {scaffold.mask.trainable_count()} trained"
        )
    _finish_training(args, report)
    return 0


def cmd_recover(args) -> int:
    stego = load_model(args.stego)
    key = load_key(args.key)
    secret = recovery.recover(stego, key)
    save_model(args.out, secret)
    print(f"wrote {args.out}: recovered structure {list(secret.spec.layer_widths)}")
    return 0


def cmd_render(args) -> int:
    mf = load_model(args.model)
    h, w = args.shape
    if args.out.lower().endswith(".png"):
        img = codec.render_image(mf.spec, mf.params, h, w)
        codec.save_png(args.out, img)
    else:
        lo, hi = args.range
        grid = codec.render_grid(mf.spec, mf.params, h, w, lo, hi)
        codec.save_grid(args.out, grid)
    print(f"wrote {args.out}: {h}x{w}")
    return 0


def cmd_metrics(args) -> int:
    if args.metric == "psnr":
        a = codec.load_png(args.a)
        b = codec.load_png(args.b)
        print(f"{codec.psnr(a.samples, b.samples)!r}")
    elif args.metric == "ber":
        print(f"{recovery.ber(load_model(args.a), load_model(args.b))!r}")
    else:  # erate
        print(f"{expansion_rate(load_model(args.a).spec, load_model(args.b).spec)!r}")
    return 0


def cmd_pool_build(args) -> int:
    seed = _resolve_seed(args.seed)
    secret = load_model(args.secret)
    out_width = args.stego_out if args.stego_out is not None else secret.spec.d_out
    plan = ExpansionPlan(
        strategy=Strategy(args.strategy),
        stego_widths=(secret.spec.d_in, *args.stego_widths, out_width),
        seed=0,  # per-item placements come from the master seed
    )
    cfg = _train_config(args, seed)
    manifest = pool.build_pool(
        covers=args.covers,
        secret=secret,
        plan=plan,
        count=args.count,
        seed=seed,
        cfg=cfg,
        out_dir=args.out,
        verbose=not args.quiet,
    )
    diverged = sum(
        item["clean_diverged"] or item["stego_diverged"] for item in manifest["items"]
    )
    print(f"wrote {args.out}: {args.count} pairs, {diverged} diverged")
    return 0


def cmd_pool_export(args) -> int:
    seed = _resolve_seed(args.seed)
    rows = pool.export_features(args.pool, args.out, feature_count=args.features, seed=seed)
    print(f"wrote {args.out}: {rows} rows x {args.features} features")
    return 0


def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args.seed)
    rng = pinned_rng(seed)
    spec = FunctionSpec(layer_widths=args.widths, activation=ActivationKind(args.activation))
    params = init_params(spec, seed)
    inputs = rng.uniform(-1.0, 1.0, size=(args.batch, spec.d_in))
    targets = rng.uniform(0.0, 1.0, size=(args.batch, spec.d_out))
    report = gradcheck(spec.activation, params, inputs, targets, tolerance=args.tolerance)
    print(report)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="sinr", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a function to an image or grid")
    p.add_argument("--data", required=True, help="signal: .png image or text grid")
    p.add_argument("--widths", type=_widths, required=True, help="hidden widths, e.g. 64,64,64")
    p.add_argument("--rff", type=_rff, default=None, help="Fourier features: m,sigma[,seed]")
    p.add_argument("--activation", choices=["relu", "sine"], default="relu")
    p.add_argument("--role", choices=["secret", "plain"], default="secret")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_train_flags(p, default_eta=1e-4)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("keygen", help="generate a stego key for an expansion plan")
    p.add_argument("--secret", required=True, help="secret model file")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    p.add_argument("--stego-widths", type=_widths, required=True,
                   help="stego hidden widths (horizontal: secret widths first)")
    p.add_argument("--stego-out", type=int, default=None,
                   help="stego output width (default: secret's)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_keygen)

    p = sub.add_parser("hide", help="embed a secret model and train on a cover")
    p.add_argument("--secret", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--cover", required=True, help="cover signal: .png or grid")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_train_flags(p, default_eta=1e-3)
    p.set_defaults(handler=cmd_hide)

    p = sub.add_parser("recover", help="extract the secret model with the key")
    p.add_argument("--stego", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_recover)

    p = sub.add_parser("render", help="sample a model into an image or grid")
    p.add_argument("--model", required=True)
    p.add_argument("--shape", type=_shape, required=True, help="HxW, e.g. 64x64")
    p.add_argument("--range", type=_range, default=(0.0, 1.0),
                   help="grid output value range lo,hi (grid outputs only)")
    p.add_argument("--out", required=True, help=".png for images, else text grid")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("metrics", help="psnr | ber | erate")
    msub = p.add_subparsers(dest="metric", required=True, parser_class=_Parser)
    mp = msub.add_parser("psnr", help="PSNR between two PNGs")
    mp.add_argument("a")
    mp.add_argument("b")
    mp.set_defaults(handler=cmd_metrics)
    mp = msub.add_parser("ber", help="bit error rate between two models")
    mp.add_argument("a")
    mp.add_argument("b")
    mp.set_defaults(handler=cmd_metrics)
    mp = msub.add_parser("erate", help="expansion rate secret -> stego")
    mp.add_argument("a", help="secret model")
    mp.add_argument("b", help="stego model")
    mp.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("pool", help="clean/stego pools for detectability studies")
    psub = p.add_subparsers(dest="pool_command", required=True, parser_class=_Parser)
    pb = psub.add_parser("build", help="train a pool of clean/stego pairs")
    pb.add_argument("--covers", nargs="+", required=True, help="cover signal files")
    pb.add_argument("--secret", required=True)
    pb.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    pb.add_argument("--stego-widths", type=_widths, required=True)
    pb.add_argument("--stego-out", type=int, default=None)
    pb.add_argument("--count", type=int, required=True, help="number of pairs")
    pb.add_argument("--seed", type=int, default=None)
    pb.add_argument("--out", required=True, help="output pool directory")
    _add_train_flags(pb, default_eta=1e-3)
    pb.set_defaults(handler=cmd_pool_build)
    pe = psub.add_parser("export", help="export the labeled feature CSV")
    pe.add_argument("--pool", required=True, help="pool directory or manifest path")
    pe.add_argument("--features", type=int, default=1000)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--out", required=True)
    pe.set_defaults(handler=cmd_pool_export)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--widths", type=_widths, default=(2, 8, 7, 3),
                   help="full layer widths of the test net")
    p.add_argument("--activation", choices=["relu", "sine", "identity"], default="relu")
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SinrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
