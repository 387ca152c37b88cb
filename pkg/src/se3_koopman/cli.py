"""Command-line entry point: ``se3-koopman {train,validate,track,sweep,reproduce-all}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import experiments
from .errors import ConfigError, EmptyDatasetError, ModelFileError, NumericalError, Se3KoopmanError

log = logging.getLogger("se3_koopman")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4


def _load_config(args, default_name: str):
    path = Path(args.config) if args.config else config_mod.bundled_config(default_name)
    cfg = config_mod.load(path)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "workers", None):
        cfg = dataclasses.replace(cfg, workers=args.workers)
        cfg.validate()
    return cfg


def _out(args, cfg, sub: str = "") -> Path:
    base = Path(args.out) if args.out else Path(cfg.output_dir)
    return base / sub if sub else base


def _model_path(args, out: Path) -> Path:
    return Path(args.model) if args.model else out / "model.json"


def _raw_inputs(cfg):
    training = dataclasses.replace(cfg.training, gravity_feedforward=False)
    return dataclasses.replace(cfg, training=training)


def run_train(args) -> int:
    cfg = _load_config(args, "train")
    if args.zero_mean_inputs:
        cfg = _raw_inputs(cfg)
    out = _out(args, cfg)
    res = experiments.cmd_train(cfg, out, Path(args.model) if args.model else None)
    r = res["report"]
    print(f"model N={r['lifted_dim']} rank(G2)={r['g2_rank']} snapshots={r['n_snapshots']} -> {res['model_path']}")
    return EXIT_OK


def _print_metrics(summary: dict) -> None:
    for row in experiments.METRIC_ROWS:
        mean, std = summary[row]
        print(f"{row:>8s}  {mean:8.3f} +- {std:.3f} %")


def run_validate(args) -> int:
    cfg = _load_config(args, "validate")
    out = _out(args, cfg)
    res = experiments.cmd_validate(cfg, _model_path(args, out), out)
    _print_metrics(res["summary"])
    return EXIT_OK


def run_track(args) -> int:
    cfg = _load_config(args, "track")
    out = _out(args, cfg)
    res = experiments.cmd_track(cfg, _model_path(args, out), out, plots=not args.no_plots)
    _print_tracking(res["summary"])
    return EXIT_OK


def _print_tracking(s: dict) -> None:
    p = s["nrmse_eval_window"]["p"]
    print(f"position nRMSE (eval window): {'n/a' if p is None else f'{p:.3f} %'}")
    print(f"inputs within limits: {s['inputs_within_limits']}")
    t = s["timing"]
    print(f"MPC step: mean {t['mean_ms']:.3f} ms, p95 {t['p95_ms']:.3f} ms ({t['rate_hz']:.0f} Hz)")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def run_sweep(args) -> int:
    cfg = _load_config(args, "train")
    if not args.orders:
        raise ConfigError("sweep grid is empty")
    horizons = args.horizons or [None]
    res = experiments.cmd_sweep(cfg, args.orders, horizons, _out(args, cfg))
    for r in res["rows"]:
        avg = r.get("nrmse_average")
        print(f"p={r['p']} N_h={r['N_h'] or '-'} {r['status']}" + (f" avg nRMSE {avg:.3f} %" if avg is not None else ""))
    if res["failed"]:
        print(f"{res['failed']} of {len(res['rows'])} grid points failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def run_reproduce_all(args) -> int:
    """Train, validate and track with the bundled configs (or ``--config`` for all three)."""
    base = Path(args.out) if args.out else Path("out")
    stage_args = argparse.Namespace(config=args.config, seed=args.seed, workers=args.workers)
    train_cfg = _load_config(stage_args, "train")
    trained = experiments.cmd_train(train_cfg, base / "train")
    model = trained["model"]
    print(f"train: N={model.dim}")
    val = experiments.cmd_validate(_load_config(stage_args, "validate"), trained["model_path"], base / "validate", model)
    _print_metrics(val["summary"])
    trk = experiments.cmd_track(
        _load_config(stage_args, "track"), trained["model_path"], base / "track", plots=not args.no_plots, model=model
    )
    _print_tracking(trk["summary"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="se3-koopman", description="Koopman/EDMD quadrotor model and lifted MPC.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config", help="YAML config (defaults to the bundled one)")
        p.add_argument("--seed", type=int, help="master seed; training=seed, validation=seed+1, reference=seed+2")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes for data generation and rollouts")
        if model:
            p.add_argument("--model", help="model file (default <out>/model.json)")

    p = sub.add_parser("train", help="generate training data and fit the lifted model")
    common(p)
    p.add_argument(
        "--raw-paper-dist",
        "--zero-mean-inputs",
        dest="zero_mean_inputs",
        action="store_true",
        help="excite with zero-mean inputs (no m*g thrust offset)",
    )
    p.set_defaults(func=run_train)

    p = sub.add_parser("validate", help="open-loop nRMSE on fresh trajectories")
    common(p)
    p.set_defaults(func=run_validate)

    p = sub.add_parser("track", help="closed-loop MPC tracking run")
    common(p)
    p.add_argument("--no-plots", action="store_true", help="skip PNG rendering (CSV plot data is still written)")
    p.set_defaults(func=run_track)

    p = sub.add_parser("sweep", help="train/validate over lift orders, track over horizons")
    common(p, model=False)
    p.add_argument("--orders", type=_int_list, default=[1, 2, 3, 4], help="comma-separated lift orders")
    p.add_argument("--horizons", type=_int_list, default=None, help="comma-separated MPC horizons (omit to skip tracking)")
    p.set_defaults(func=run_sweep)

    p = sub.add_parser("reproduce-all", help="train, validate and track in one go")
    common(p, model=False)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=run_reproduce_all)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptyDatasetError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        step = getattr(exc, "step_index", None)
        where = f" (step {step})" if step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Se3KoopmanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
