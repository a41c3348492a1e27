"""Context sweeps: naive vs scaled transfer of one source policy over a grid of contexts."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dimension import Context, context_distance, context_fingerprint, generate_similar_context
from .errors import EmptyReport, PiTransferError, UnknownAxis
from .pendulum import INITIAL_STATE, PendulumParams, rollout
from .policy import GridSpec, PolicyGrid, value_iteration
from .transfer import NAIVE, SCALED, clamp_fraction, transfer

log = logging.getLogger(__name__)

NONE = "none"
PER_CONTEXT_DP = "per_context_dp"
ORACLE_MODES = (NONE, PER_CONTEXT_DP)
TIE_ATOL = 1e-9
SIMILAR_ATOL = 1e-9
DIAGONAL_RELATIVE_MIN = 0.98

CSV_HEADER = ("m", "l", "g", "tau_max", "t_f", "w_theta", "w_tau", "dt",
              "distance", "mode", "total_reward", "relative_reward", "clamp_frac")
CONTEXT_COLUMNS = CSV_HEADER[:8]
METRICS = ("total_reward", "relative_reward")


@dataclass(frozen=True)
class SweepAxis:
    name: str
    factors: tuple[float, ...]
    similar: bool = True

    def __post_init__(self):
        factors = tuple(float(f) for f in self.factors)
        if not factors or any(not (f > 0 and math.isfinite(f)) for f in factors):
            raise ValueError(f"axis {self.name!r}: factors must be finite and strictly positive")
        object.__setattr__(self, "factors", factors)


def log_factors(n: int, low: float = 0.1, high: float = 10.0) -> tuple[float, ...]:
    if n == 1:
        return (1.0,)
    return tuple(float(x) for x in np.logspace(math.log10(low), math.log10(high), n))


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[SweepAxis, ...]
    oracle: str = NONE
    # factor sets per axis where the oracle runs; empty means every context
    oracle_subgrid: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    grid: GridSpec = GridSpec()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValueError("a sweep needs at least one axis")
        if self.oracle not in ORACLE_MODES:
            raise ValueError(f"oracle must be one of {ORACLE_MODES}, got {self.oracle!r}")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate sweep axes {names}")
        unknown = set(self.oracle_subgrid) - set(names)
        if unknown:
            raise UnknownAxis(f"oracle sub-grid names unknown axes {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> SweepSpec:
        axes = []
        for name, ax in doc["axes"].items():
            if "factors" in ax:
                factors = ax["factors"]
            else:
                factors = log_factors(int(ax["count"]), ax.get("low", 0.1), ax.get("high", 10.0))
            axes.append(SweepAxis(name, tuple(factors), ax.get("similar", True)))
        oracle = doc.get("oracle", {})
        return cls(tuple(axes),
                   oracle=oracle.get("mode", NONE),
                   oracle_subgrid={k: tuple(v) for k, v in oracle.get("subgrid", {}).items()},
                   grid=GridSpec(**doc.get("synth", {})),
                   seed=int(doc.get("seed", 0)))

    def wants_oracle(self, factors: Mapping[str, float]) -> bool:
        if self.oracle == NONE:
            return False
        return all(any(math.isclose(factors[k], f, rel_tol=1e-9) for f in allowed)
                   for k, allowed in self.oracle_subgrid.items())


@dataclass(frozen=True)
class GridPoint:
    index: int
    factors: Mapping[str, float]
    context: Context


def grid_points(original: Context, spec: SweepSpec) -> list[GridPoint]:
    """Row-major Cartesian product of the axes, in the order they are listed."""
    for ax in spec.axes:
        if ax.name not in original:
            raise UnknownAxis(f"sweep axis {ax.name!r} is not a context entry")
        if ax.similar and ax.name not in original.basis_names:
            raise ValueError(f"similar axis {ax.name!r} must be a basis member "
                             f"{original.basis_names}")
    points = []
    for i, combo in enumerate(itertools.product(*(ax.factors for ax in spec.axes))):
        factors = {ax.name: f for ax, f in zip(spec.axes, combo)}
        basis = {ax.name: original[ax.name] * f
                 for ax, f in zip(spec.axes, combo) if ax.similar and f != 1.0}
        ctx = generate_similar_context(original, basis, name=f"ctx_{i:03d}")
        raw = {ax.name: original[ax.name] * f
               for ax, f in zip(spec.axes, combo) if not ax.similar}
        if raw:
            ctx = ctx.replace(**raw)
        points.append(GridPoint(i, factors, ctx))
    return points


def build_grid(original: Context, spec: SweepSpec) -> list[Context]:
    return [p.context for p in grid_points(original, spec)]


@dataclass(frozen=True)
class TransferReport:
    index: int
    context: Context
    distance: float
    naive_reward: float
    scaled_reward: float
    oracle_reward: float | None = None
    naive_relative: float | None = None
    scaled_relative: float | None = None
    naive_clamp_frac: float = 0.0
    scaled_clamp_frac: float = 0.0
    factors: Mapping[str, float] = field(default_factory=dict)
    fingerprint_warning: str | None = None
    error: str | None = None

    @property
    def similar(self) -> bool:
        """Total rewards are comparable with the original only for similar contexts."""
        return self.distance < SIMILAR_ATOL

    @property
    def ok(self) -> bool:
        return self.error is None


def relative_reward(tested: float, optimal: float) -> float:
    """Performance of ``tested`` relative to ``optimal``; 1 means optimal, lower is worse.

    Pendulum rewards are negated costs, so the ratio is taken on costs
    (optimal / tested) to keep the scale at or below one.
    """
    if tested == optimal:
        return 1.0
    if optimal > 0:
        return tested / optimal
    if tested >= 0:
        return math.inf
    return optimal / tested


def _oracle_reward(args) -> float:
    params, grid_spec = args
    _, policy = value_iteration(params, grid_spec)
    return rollout(params, policy, INITIAL_STATE).total_reward


def _rate_bounds(policy) -> tuple[float, float]:
    if isinstance(policy, PolicyGrid):
        return (math.inf, policy.grid.theta_dot_max)
    return (math.inf, math.inf)


def evaluate_transfers(original: Context, source_policy: Callable,
                       contexts: Sequence[Context], oracle_mode: str = NONE,
                       grid_spec: GridSpec = GridSpec(),
                       oracle_mask: Sequence[bool] | None = None,
                       factors: Sequence[Mapping[str, float]] | None = None,
                       workers: int = 1) -> list[TransferReport]:
    """Roll out naive and scaled adapters of ``source_policy`` in every context.

    With ``oracle_mode == "per_context_dp"`` a policy is synthesized in each
    (masked) context and its reward becomes the relative-reward denominator.
    """
    if oracle_mode not in ORACLE_MODES:
        raise ValueError(f"oracle_mode must be one of {ORACLE_MODES}")
    mask = list(oracle_mask) if oracle_mask is not None else [True] * len(contexts)
    factors = list(factors) if factors is not None else [{} for _ in contexts]
    bounds = _rate_bounds(source_policy)
    source_fp = getattr(source_policy, "fingerprint", None)

    reports = []
    oracle_jobs = []
    for i, ctx in enumerate(contexts):
        try:
            params = PendulumParams.from_context(ctx)
            dist = context_distance(original, ctx)
            rewards, clamps = {}, {}
            for mode in (NAIVE, SCALED):
                adapter = transfer(source_policy, original, ctx, mode)
                traj = rollout(params, adapter, INITIAL_STATE)
                rewards[mode] = traj.total_reward
                clamps[mode] = clamp_fraction(adapter, traj, bounds)
        except (PiTransferError, ValueError, ArithmeticError) as exc:
            log.warning("context %d failed: %s", i, exc)
            reports.append(TransferReport(i, ctx, math.nan, math.nan, math.nan,
                                          factors=factors[i], error=str(exc)))
            continue
        warning = None
        if source_fp and source_fp != context_fingerprint(ctx):
            warning = ("naive transfer evaluates a policy synthesized for a different "
                       "context (fingerprint mismatch)")
        reports.append(TransferReport(i, ctx, dist, rewards[NAIVE], rewards[SCALED],
                                      naive_clamp_frac=clamps[NAIVE],
                                      scaled_clamp_frac=clamps[SCALED],
                                      factors=factors[i], fingerprint_warning=warning))
        if oracle_mode == PER_CONTEXT_DP and mask[i]:
            oracle_jobs.append((len(reports) - 1, (params, grid_spec)))

    if oracle_jobs:
        log.info("synthesizing %d oracle policies with %d worker(s)", len(oracle_jobs), workers)
        args = [job for _, job in oracle_jobs]
        if workers > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(_oracle_reward, args))
        else:
            values = [_oracle_reward(a) for a in args]
        for (k, _), optimal in zip(oracle_jobs, values):
            r = reports[k]
            reports[k] = TransferReport(
                r.index, r.context, r.distance, r.naive_reward, r.scaled_reward,
                oracle_reward=optimal,
                naive_relative=relative_reward(r.naive_reward, optimal),
                scaled_relative=relative_reward(r.scaled_reward, optimal),
                naive_clamp_frac=r.naive_clamp_frac, scaled_clamp_frac=r.scaled_clamp_frac,
                factors=r.factors, fingerprint_warning=r.fingerprint_warning)
    return reports


def run_sweep(original: Context, source_policy: Callable, spec: SweepSpec,
              workers: int = 1) -> list[TransferReport]:
    points = grid_points(original, spec)
    return evaluate_transfers(
        original, source_policy, [p.context for p in points], spec.oracle, spec.grid,
        oracle_mask=[spec.wants_oracle(p.factors) for p in points],
        factors=[p.factors for p in points], workers=workers)


def summarize(reports: Sequence[TransferReport]) -> dict:
    if not reports:
        raise EmptyReport("cannot summarize an empty report")
    ok = [r for r in reports if r.ok]
    scaled_wins = sum(r.scaled_reward > r.naive_reward + TIE_ATOL for r in ok)
    naive_wins = sum(r.naive_reward > r.scaled_reward + TIE_ATOL for r in ok)
    similar = [r for r in ok if r.similar]
    similar_oracle = [r for r in similar if r.scaled_relative is not None]
    return {
        "n_contexts": len(reports),
        "n_evaluated": len(ok),
        "n_failed": len(reports) - len(ok),
        "scaled_wins": scaled_wins,
        "naive_wins": naive_wins,
        "ties": len(ok) - scaled_wins - naive_wins,
        "mean_naive_reward": float(np.mean([r.naive_reward for r in ok])) if ok else None,
        "mean_scaled_reward": float(np.mean([r.scaled_reward for r in ok])) if ok else None,
        "n_similar": len(similar),
        "n_similar_with_oracle": len(similar_oracle),
        "similar_fraction_relative_ge_0.98": (
            sum(r.scaled_relative >= DIAGONAL_RELATIVE_MIN for r in similar_oracle)
            / len(similar_oracle) if similar_oracle else None),
        "n_with_oracle": sum(r.oracle_reward is not None for r in ok),
        "comparability": ("total rewards compare naive vs scaled within one context, "
                          "and across contexts only when they are similar"),
    }


def write_summary_json(summary: Mapping, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- tabular export ----------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else f"{x:.17g}"


def report_rows(reports: Sequence[TransferReport]) -> list[dict]:
    """One record per (context, mode), in report order, naive before scaled."""
    rows = []
    for r in reports:
        values = r.context.values()
        for mode, total, rel, clamp in (
                (NAIVE, r.naive_reward, r.naive_relative, r.naive_clamp_frac),
                (SCALED, r.scaled_reward, r.scaled_relative, r.scaled_clamp_frac)):
            row = {k: values[k] for k in CONTEXT_COLUMNS}
            row.update(distance=r.distance, mode=mode, total_reward=total,
                       relative_reward=rel, clamp_frac=clamp)
            rows.append(row)
    return rows


def export_csv(reports: Sequence[TransferReport], path) -> None:
    if not reports:
        raise EmptyReport("no reports to export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in report_rows(reports):
            writer.writerow([row["mode"] if k == "mode" else _fmt(row[k]) for k in CSV_HEADER])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = {k: (v if k == "mode" else (float(v) if v != "" else None))
                   for k, v in raw.items()}
            rows.append(row)
    if not rows:
        raise EmptyReport(f"{path}: no data rows")
    return rows


# --- SVG rendering -------------------------------------------------------------

_VIRIDIS = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
            (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))


def _color(t: float) -> str:
    if not math.isfinite(t):
        return "#bbbbbb"
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_VIRIDIS, _VIRIDIS[1:]):
        if t <= t1:
            u = (t - t0) / (t1 - t0) if t1 > t0 else 0.0
            rgb = tuple(round(a + u * (b - a)) for a, b in zip(c0, c1))
            return "#%02x%02x%02x" % rgb
    return "#%02x%02x%02x" % _VIRIDIS[-1][1]


def _star(cx: float, cy: float, r: float) -> str:
    pts = []
    for k in range(10):
        ang = -math.pi / 2 + k * math.pi / 5
        rad = r if k % 2 == 0 else 0.45 * r
        pts.append(f"{cx + rad * math.cos(ang):.2f},{cy + rad * math.sin(ang):.2f}")
    return f'<polygon points="{" ".join(pts)}" fill="#e31a1c" stroke="white" stroke-width="1"/>'


def render_svg_heatmap(rows: Sequence[Mapping], x_axis: str, y_axis: str, metric: str,
                       original: Mapping[str, float] | None = None) -> str:
    """Two panels (naive, scaled) of ``metric`` over two context axes.

    Contexts sharing an (x, y) cell are drawn as side-by-side stripes in row order.
    """
    if not rows:
        raise EmptyReport("no rows to render")
    for name in (x_axis, y_axis):
        if name not in CONTEXT_COLUMNS:
            raise UnknownAxis(f"unknown axis {name!r}; choose from {CONTEXT_COLUMNS}")
    if metric not in METRICS:
        raise UnknownAxis(f"unknown metric {metric!r}; choose from {METRICS}")

    xs = sorted({r[x_axis] for r in rows})
    ys = sorted({r[y_axis] for r in rows})
    vals = [r[metric] for r in rows if r[metric] is not None and math.isfinite(r[metric])]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0

    cell, margin, gap = 48, 70, 60
    panel_w, panel_h = cell * len(xs), cell * len(ys)
    width = 2 * panel_w + gap + 2 * margin + 60
    height = panel_h + 2 * margin
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
           f'<rect width="{width}" height="{height}" fill="white"/>']

    for p, mode in enumerate((NAIVE, SCALED)):
        x0 = margin + p * (panel_w + gap)
        y0 = margin
        out.append(f'<text x="{x0 + panel_w / 2}" y="{y0 - 28}" text-anchor="middle" '
                   f'font-size="13">{mode}: {metric}</text>')
        cells: dict = {}
        for r in rows:
            if r["mode"] == mode:
                cells.setdefault((r[x_axis], r[y_axis]), []).append(r)
        for (xv, yv), members in cells.items():
            cx = x0 + xs.index(xv) * cell
            cy = y0 + (len(ys) - 1 - ys.index(yv)) * cell
            w = cell / len(members)
            for k, r in enumerate(members):
                v = r[metric]
                color = _color((v - lo) / span) if v is not None else "#bbbbbb"
                out.append(f'<rect x="{cx + k * w:.2f}" y="{cy}" width="{w:.2f}" '
                           f'height="{cell}" fill="{color}"><title>{x_axis}={xv:.4g} '
                           f'{y_axis}={yv:.4g} {metric}={_fmt(v)}</title></rect>')
            out.append(f'<rect x="{cx}" y="{cy}" width="{cell}" height="{cell}" fill="none" '
                       f'stroke="white" stroke-width="1"/>')
        if original is not None:
            ox, oy = original.get(x_axis), original.get(y_axis)
            ix = [i for i, v in enumerate(xs) if math.isclose(v, ox, rel_tol=1e-9)]
            iy = [i for i, v in enumerate(ys) if math.isclose(v, oy, rel_tol=1e-9)]
            if ix and iy:
                out.append(_star(x0 + (ix[0] + 0.5) * cell,
                                 y0 + (len(ys) - 1 - iy[0] + 0.5) * cell, cell * 0.3))
        for i, xv in enumerate(xs):
            out.append(f'<text x="{x0 + (i + 0.5) * cell}" y="{y0 + panel_h + 14}" '
                       f'text-anchor="middle">{xv:.3g}</text>')
        for j, yv in enumerate(ys):
            out.append(f'<text x="{x0 - 4}" y="{y0 + (len(ys) - 1 - j + 0.5) * cell + 3}" '
                       f'text-anchor="end">{yv:.3g}</text>')
        out.append(f'<text x="{x0 + panel_w / 2}" y="{y0 + panel_h + 32}" '
                   f'text-anchor="middle">{x_axis}</text>')
        out.append(f'<text x="{x0 - 40}" y="{y0 + panel_h / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 {x0 - 40} {y0 + panel_h / 2})">{y_axis}</text>')

    # colour bar
    bx = margin + 2 * panel_w + gap + 16
    for k in range(50):
        t = 1 - k / 49
        out.append(f'<rect x="{bx}" y="{margin + k * panel_h / 50:.2f}" width="12" '
                   f'height="{panel_h / 50 + 0.5:.2f}" fill="{_color(t)}"/>')
    out.append(f'<text x="{bx + 16}" y="{margin + 8}">{hi:.3g}</text>')
    out.append(f'<text x="{bx + 16}" y="{margin + panel_h}">{lo:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_svg_heatmap(reports: Sequence[TransferReport], axes: tuple[str, str], metric: str,
                       path, original: Mapping[str, float] | None = None) -> None:
    if not reports:
        raise EmptyReport("no reports to export")
    svg = render_svg_heatmap(report_rows(reports), axes[0], axes[1], metric, original)
    with open(path, "w") as fh:
        fh.write(svg)
