"""Command-line entry point.

Exit codes: 0 success, 1 self-check failure, 2 usage/config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checks import format_table, run_checks
from .config import RunConfig, load_config
from .density import GridSpec, guided_density_grid
from .denoiser import OracleDenoiser
from .errors import CheckpointError, ConfigError, DomainError, NumericError
from .guidance import GuidanceConfig
from .metrics import rows_to_csv, stream_seeds, sweep, sweep_labels
from .nn import DenoiserNet
from .sampler import SamplerConfig, sample_batch
from .trainer import load_checkpoint, save_checkpoint, train

log = logging.getLogger("guidance_lab")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _thread_limit():
    raw = os.environ.get("GUIDANCE_LAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"must be an integer, got {raw!r}", "GUIDANCE_LAB_THREADS")
    if n < 0:
        raise ConfigError("must be >= 0", "GUIDANCE_LAB_THREADS")
    if n == 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _denoiser(cfg: RunConfig, args):
    """The oracle, or a checkpointed net whose schedule and shapes match the config."""
    if args.checkpoint is None:
        return OracleDenoiser(cfg.world), {"denoiser": "oracle"}
    try:
        net, schedule, header = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise CheckpointError(f"cannot read {args.checkpoint} ({exc.strerror})")
    if schedule != cfg.schedule:
        raise ConfigError(
            f"checkpoint schedule {schedule.to_dict()} differs from config {cfg.schedule.to_dict()}",
            "schedule",
        )
    if net.dims != cfg.world.dims or net.num_classes != cfg.world.num_classes:
        raise ConfigError("checkpoint dims/classes do not match the configured world", "world")
    return net, {"denoiser": "checkpoint", "checkpoint": str(args.checkpoint)}


# -- subcommands ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.steps is not None:
        cfg = replace(cfg, train=replace(cfg.train, steps=args.steps))
    out = _out_dir(cfg, args)
    net = DenoiserNet(cfg.world.dims, cfg.world.num_classes, seed=cfg.train.seed)
    losses = []
    trained = train(net, cfg.world, cfg.train, cfg.schedule, losses)
    meta = {"config": cfg.to_dict(), "seed": cfg.train.seed}
    save_checkpoint(out / "checkpoint.bin", trained, cfg.schedule, meta)
    with open(out / "train_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses, 1):
            writer.writerow([step, repr(loss)])
    _write_json(out / "train.json", meta)
    print(f"wrote {out / 'checkpoint.bin'} ({len(losses)} steps)")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load(args)
    guidance = GuidanceConfig(args.mode or cfg.guidance.mode, cfg.guidance.w if args.w is None else args.w)
    sampler = SamplerConfig(cfg.sampler.T if args.T is None else args.T, cfg.sampler.v, cfg.schedule)
    denoiser, info = _denoiser(cfg, args)
    out = _out_dir(cfg, args)
    if args.n < 0:
        raise ConfigError("must be >= 0", "--n")
    if args.cls is not None:
        if not 0 <= args.cls < cfg.world.num_classes:
            raise ConfigError(f"class must lie in [0, {cfg.world.num_classes})", "--class")
        labels = np.full(args.n, args.cls, dtype=int)
    else:
        labels = sweep_labels(cfg.world, args.n, cfg.seed)
    rng = np.random.default_rng(stream_seeds(cfg.seed)[1])
    x, labels = sample_batch(denoiser, guidance, sampler, labels, rng, world=cfg.world)
    with open(out / "samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class"] + [f"x_{i}" for i in range(cfg.world.dims)])
        for c, row in zip(labels, x):
            writer.writerow([int(c)] + [repr(float(v)) for v in row])
    resolved = cfg.to_dict()
    resolved["guidance"] = guidance.to_dict()
    resolved["sampler"] = sampler.to_dict()
    _write_json(out / "samples.json", {"config": resolved, "seed": cfg.seed, "n": args.n,
                                       "class": args.cls, **info})
    print(f"wrote {out / 'samples.csv'} ({args.n} samples)")
    return EXIT_OK


def _w_label(w: float) -> str:
    return repr(float(w)).replace(".", "p")


def cmd_density(args) -> int:
    cfg = _load(args)
    spec = GridSpec(tuple(args.bounds), args.resolution)
    out = _out_dir(cfg, args)
    summary = []
    for w in args.w:
        grid = guided_density_grid(cfg.world, w, spec, cfg.schedule.lambda_max)
        grid.write(out / f"density_w{_w_label(w)}.csv")
        for c, h in enumerate(grid.entropies):
            summary.append([repr(float(w)), c, repr(float(h)), repr(grid.residual)])
    with open(out / "density_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["w", "class", "entropy", "residual"])
        writer.writerows(summary)
    _write_json(out / "density.json", {"config": cfg.to_dict(), "w": list(map(float, args.w)),
                                       "bounds": list(spec.bounds), "resolution": spec.resolution})
    print(f"wrote {len(args.w)} density grids to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    mode = args.mode or cfg.guidance.mode
    if mode == "none":
        raise ConfigError("a sweep over w needs a guidance mode other than 'none'", "guidance.mode")
    out = _out_dir(cfg, args)
    if args.p_uncond and args.checkpoint is not None:
        raise ConfigError("--p-uncond trains fresh nets and cannot be combined with --checkpoint", "--p-uncond")
    t_values = args.T or [cfg.sampler.T]
    p_values = args.p_uncond or [None]
    extra = {}
    rows = []
    info = {}
    for p in p_values:
        if p is None:
            denoiser, info = _denoiser(cfg, args)
        else:
            tc = replace(cfg.train, p_uncond=p)
            net = DenoiserNet(cfg.world.dims, cfg.world.num_classes, seed=tc.seed)
            denoiser = train(net, cfg.world, tc, cfg.schedule)
            info = {"denoiser": "trained", "train": cfg.train.to_dict()}
        for T in t_values:
            sampler = SamplerConfig(T, cfg.sampler.v, cfg.schedule)
            new = sweep(cfg.world, denoiser, args.w, sampler, args.n, cfg.seed, mode=mode)
            rows.extend(new)
            if args.p_uncond:
                extra.setdefault("p_uncond", []).extend([p] * len(new))
            if args.T:
                extra.setdefault("T", []).extend([T] * len(new))
    (out / "sweep.csv").write_text(rows_to_csv(rows, extra))
    _write_json(out / "sweep.json", {"config": cfg.to_dict(), "w": list(map(float, args.w)),
                                     "n": args.n, "mode": mode, "T": t_values,
                                     "p_uncond": args.p_uncond, **info})
    print(rows_to_csv(rows, extra), end="")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(seed=args.seed or 0)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guidance-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="run config JSON")
            p.add_argument("--out", help="output directory (overrides config output_dir)")
        p.add_argument("--seed", type=int, help="override the config seed")

    def source(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--checkpoint", help="trained checkpoint to sample from")
        g.add_argument("--oracle", action="store_true", help="use the exact oracle denoiser (default)")

    p = sub.add_parser("train", help="train the denoiser with conditioning dropout")
    common(p)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="guided ancestral sampling")
    common(p)
    source(p)
    p.add_argument("--w", type=float)
    p.add_argument("--mode", choices=["none", "classifier-free", "classifier"])
    p.add_argument("--class", dest="cls", type=int)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--T", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("density", help="guided density grids by quadrature")
    common(p)
    p.add_argument("--w", type=float, nargs="+", default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--bounds", type=float, nargs=2, default=[-4.0, 4.0], metavar=("LO", "HI"))
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("sweep", help="sweep guidance strength and report metrics")
    common(p)
    source(p)
    p.add_argument("--w", type=float, nargs="+", default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--mode", choices=["classifier-free", "classifier"])
    p.add_argument("--T", type=int, nargs="+", help="also sweep the step count")
    p.add_argument("--p-uncond", type=float, nargs="+", help="train one net per value and sweep each")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the analytic identity suite")
    common(p, config=False)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (ConfigError, CheckpointError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
