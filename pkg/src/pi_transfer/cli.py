"""Command-line entry point: ``pi-transfer {synth,eval,sweep,distance,export}``.

Exit codes: 0 success, 2 config/validation, 3 no convergence,
4 policy fingerprint mismatch, 5 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

from .dimension import (
    context_distance,
    context_fingerprint,
    dimensionless_difference,
    load_context,
    tomllib,
)
from .errors import NoConvergence, PiTransferError
from .pendulum import INITIAL_STATE, PendulumParams, PendulumState, rollout
from .policy import GridSpec, load_policy, save_policy, save_value, value_iteration
from .sweep import (
    SweepSpec,
    export_csv,
    export_svg_heatmap,
    grid_points,
    read_report_csv,
    render_svg_heatmap,
    run_sweep,
    summarize,
    write_summary_json,
)
from .transfer import MODES, transfer

log = logging.getLogger("pi_transfer")

EXIT_OK, EXIT_CONFIG, EXIT_NO_CONVERGENCE, EXIT_FINGERPRINT, EXIT_IO = 0, 2, 3, 4, 5
THREADS_ENV = "PI_TRANSFER_THREADS"


class ConfigError(Exception):
    pass


class FingerprintError(Exception):
    pass


def data_file(name: str) -> Path:
    return Path(str(resources.files("pi_transfer") / "data" / name))


DEFAULT_CONTEXT = "original_context.toml"
DEFAULT_SWEEP = "default_sweep.toml"


@dataclass
class RunConfig:
    context: Path = field(default_factory=lambda: data_file(DEFAULT_CONTEXT))
    target: Path | None = None
    policy: Path | None = None
    sweep: Path = field(default_factory=lambda: data_file(DEFAULT_SWEEP))
    out: Path = Path("runs")
    grid: GridSpec = field(default_factory=GridSpec)
    seed: int = 0
    workers: int = 1

    def require(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"--{name} is required")
            if not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _default_workers() -> int:
    return os.cpu_count() or 1


_GRID_FLAGS = {"n_theta": int, "n_theta_dot": int, "theta_dot_max": float,
               "n_actions": int, "discount": float, "tolerance": float, "max_iterations": int}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < PI_TRANSFER_THREADS (workers only) < command-line flags."""
    cfg = RunConfig(workers=_default_workers())
    grid_kw = {}
    if getattr(args, "config", None):
        doc = _read_toml(args.config)
        run = doc.get("run", {})
        for key in ("context", "target", "policy", "sweep", "out"):
            if key in run:
                setattr(cfg, key, Path(run[key]))
        cfg.seed = int(run.get("seed", cfg.seed))
        cfg.workers = int(run.get("workers", cfg.workers))
        unknown = set(doc.get("synth", {})) - set(_GRID_FLAGS)
        if unknown:
            raise ConfigError(f"unknown [synth] keys {sorted(unknown)}")
        grid_kw.update(doc.get("synth", {}))
    if os.environ.get(THREADS_ENV):
        try:
            cfg.workers = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    for key in ("context", "target", "policy", "sweep", "out"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, Path(value))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    for key in _GRID_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            grid_kw[key] = value
    try:
        cfg.grid = GridSpec(**grid_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthesis settings: {exc}") from None
    if cfg.workers < 1:
        raise ConfigError("worker count must be >= 1")
    return cfg


def _load_params(path):
    ctx = load_context(path)
    return ctx, PendulumParams.from_context(ctx)


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = build_config(args)
    cfg.require("context")
    ctx, params = _load_params(cfg.context)
    fingerprint = context_fingerprint(ctx)
    value, policy = value_iteration(params, cfg.grid, fingerprint=fingerprint)
    out = _out_dir(cfg.out)
    save_policy(policy, out / "policy.pipolicy")
    save_value(value, out / "value.pivalue", fingerprint)
    synth_log = {
        "context": ctx.name,
        "fingerprint": fingerprint,
        "grid": asdict(cfg.grid),
        "iterations": value.iterations,
        "final_residual": value.residuals[-1],
        "action_at_origin": policy(0.0, 0.0),
        "seed": cfg.seed,
    }
    write_summary_json(synth_log, out / "synth_log.json")
    print(f"policy written to {out / 'policy.pipolicy'}")
    print(f"fingerprint {fingerprint}")
    print(f"converged in {value.iterations} sweeps (residual {value.residuals[-1]:.3g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = build_config(args)
    cfg.require("context", "policy")
    source, _ = _load_params(cfg.context)
    if cfg.target is not None:
        cfg.require("target")
        target = load_context(cfg.target)
    else:
        target = source
    params = PendulumParams.from_context(target)
    policy = load_policy(cfg.policy)
    if policy.fingerprint != context_fingerprint(source):
        raise FingerprintError(
            f"policy {cfg.policy} was not synthesized for source context {cfg.context}")
    adapter = transfer(policy, source, target, args.mode)
    initial = PendulumState(args.theta0, args.theta_dot0)
    traj = rollout(params, adapter, initial)
    out = Path(args.trajectory) if args.trajectory else _out_dir(cfg.out) / "trajectory.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out)
    print(f"mode={args.mode} total_reward={traj.total_reward:.17g}")
    return EXIT_OK


def _sweep_outputs(reports, out: Path, original, seed: int) -> list[Path]:
    written = [out / "report.csv", out / "summary.json"]
    export_csv(reports, written[0])
    write_summary_json({**summarize(reports), "seed": seed}, written[1])
    values = original.values()
    names = {n for r in reports for n in r.factors}
    pairs = [("m", "l", "total_reward")]
    if "tau_max" in names:
        pairs.append(("m", "tau_max", "total_reward"))
    if any(r.oracle_reward is not None for r in reports):
        with_oracle = [r for r in reports if r.oracle_reward is not None]
        path = out / "relative_reward_m_tau_max.svg"
        export_svg_heatmap(with_oracle, ("m", "tau_max"), "relative_reward", path, values)
        written.append(path)
    for x, y, metric in pairs:
        path = out / f"{metric}_{x}_{y}.svg"
        export_svg_heatmap(reports, (x, y), metric, path, values)
        written.append(path)
    return written


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    cfg.require("context", "sweep")
    original, params = _load_params(cfg.context)
    try:
        spec = SweepSpec.from_dict(_read_toml(cfg.sweep))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep spec {cfg.sweep}: {exc}") from None
    if any(getattr(args, k, None) is not None for k in _GRID_FLAGS):
        spec = replace(spec, grid=cfg.grid)
    points = grid_points(original, spec)

    if args.dry_run:
        for p in points:
            tag = " [oracle]" if spec.wants_oracle(p.factors) else ""
            factors = " ".join(f"{k}x{v:.4g}" for k, v in p.factors.items())
            values = " ".join(f"{k}={v:.6g}" for k, v in p.context.values().items())
            print(f"{p.index:3d} {factors} | {values}{tag}")
        print(f"{len(points)} contexts planned; nothing written")
        return EXIT_OK

    if cfg.policy is not None:
        cfg.require("policy")
        policy = load_policy(cfg.policy)
        if policy.fingerprint != context_fingerprint(original):
            raise FingerprintError(f"policy {cfg.policy} does not match {cfg.context}")
    else:
        log.info("synthesizing source policy")
        _, policy = value_iteration(params, spec.grid, fingerprint=context_fingerprint(original))

    reports = run_sweep(original, policy, spec, workers=cfg.workers)
    out = _out_dir(cfg.out)
    for path in _sweep_outputs(reports, out, original, cfg.seed):
        print(f"wrote {path}")
    s = summarize(reports)
    print(f"scaled better on {s['scaled_wins']}, naive better on {s['naive_wins']}, "
          f"ties {s['ties']} (of {s['n_evaluated']} contexts)")
    return EXIT_OK


def cmd_distance(args) -> int:
    for path in (args.ctx_a, args.ctx_b):
        if not Path(path).is_file():
            raise ConfigError(f"context file not found: {path}")
    a = load_context(args.ctx_a)
    b = load_context(args.ctx_b)
    diff = dimensionless_difference(a, b)
    print(f"distance {context_distance(a, b):.17g}")
    for name, d in zip(a.names, diff):
        print(f"  {name:10s} {d: .17g}")
    return EXIT_OK


def cmd_export(args) -> int:
    if not Path(args.report).is_file():
        raise ConfigError(f"report file not found: {args.report}")
    original = load_context(args.context or data_file(DEFAULT_CONTEXT))
    rows = read_report_csv(args.report)
    if args.metric == "relative_reward":
        rows = [r for r in rows if r["relative_reward"] is not None]
    svg = render_svg_heatmap(rows, args.x, args.y, args.metric, original.values())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthesis")
    g.add_argument("--n-theta", dest="n_theta", type=int)
    g.add_argument("--n-theta-dot", dest="n_theta_dot", type=int)
    g.add_argument("--theta-dot-max", dest="theta_dot_max", type=float,
                   help="dimensionless rate bound, in units of sqrt(g/l)")
    g.add_argument("--actions", dest="n_actions", type=int)
    g.add_argument("--gamma", dest="discount", type=float)
    g.add_argument("--tol", dest="tolerance", type=float)
    g.add_argument("--max-iter", dest="max_iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pi-transfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML run config ([run] and [synth] tables)")
        p.add_argument("--context", help="source context file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="synthesize a lookup-table policy by value iteration")
    common(p)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="roll out a policy, naive or scaled, in a target context")
    common(p)
    p.add_argument("--policy", help="policy file from `synth`")
    p.add_argument("--target", help="target context file (default: the source context)")
    p.add_argument("--mode", choices=MODES, default="scaled")
    p.add_argument("--trajectory", help="trajectory CSV path (default: OUT/trajectory.csv)")
    p.add_argument("--theta0", type=float, default=INITIAL_STATE.theta)
    p.add_argument("--theta-dot0", dest="theta_dot0", type=float, default=INITIAL_STATE.theta_dot)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate naive vs scaled transfer over a context grid")
    common(p)
    p.add_argument("--sweep", help="sweep spec file (default: the shipped 5x5x5 grid)")
    p.add_argument("--policy", help="source policy file (synthesized if omitted)")
    p.add_argument("--workers", type=int, help=f"parallel oracle workers (env {THREADS_ENV})")
    p.add_argument("--dry-run", action="store_true", help="print planned contexts only")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("distance", help="dimensionless distance between two contexts")
    p.add_argument("ctx_a")
    p.add_argument("ctx_b")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("export", help="render an SVG heatmap from a sweep report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--x", default="m")
    p.add_argument("--y", default="tau_max")
    p.add_argument("--metric", default="total_reward", choices=("total_reward", "relative_reward"))
    p.add_argument("--context", help="original context to mark (default: shipped original)")
    p.add_argument("--out", required=True, help="SVG output path")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except FingerprintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINGERPRINT
    except (PiTransferError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
