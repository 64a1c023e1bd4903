"""Command-line driver: device search, parameter sweeps, and trajectories.

Four subcommands share one flat key=value configuration:

  optimize   exhaustive search at a single (I_s, q, T) point; writes a
             human-readable report with one-line and matrix device forms.
  sweep      grid over (I_s, q, T); one CSV row per point with the growth
             rates of best / worst / identity / sorting-approximation
             devices and coincidence flags.
  ratios     grid over (T, I_s) at fixed q; CSV of r1, r2, r3.
  simulate   lap-by-lap trajectory of a given device from C=0; CSV of
             states, per-lap growth rate, and distance to the fixed point.

Settings come from per-mode defaults, then an optional --params-file
(key=value lines), then flags; later layers win. Grid values accept a
single number, a comma list, lin:lo:hi:n, or log:lo:hi:n.

Exit codes: 0 success, 1 configuration error, 2 budget or search-cap
refusal, 3 numerical invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .kinetics import (DEFAULT_PARAMS, HanParams, InvariantViolation,
                       build_light_field, lap_coefficients)
from .lap_dynamics import LapState, Permutation, fixed_point, simulate_laps
from .objective import evaluate_strategy, mu_bar_from_state, ratios
from .solvers import SearchCapError, partitioned_search, sorting_solver, spot_check

# Permutation evaluations a single invocation may spend before refusing;
# about 3.5 minutes of single-core scan at the measured kernel rate.
DEFAULT_BUDGET = 2_000_000_000
_KERNEL_RATE = 9.6e6  # measured permutations/s per core, for refusal estimates

_MODES = ("optimize", "sweep", "ratios", "simulate")

_PARAM_KEYS = ("k_r", "k_d", "tau", "sigma", "k", "R")


class BudgetError(RuntimeError):
    """The requested run would exceed the evaluation budget or search cap."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete settings for one CLI invocation.

    Grids are tuples of floats (a single point is a 1-tuple). `seed` feeds
    only the sampled optimality spot-check, never the science. `budget`
    caps total permutation evaluations across the whole grid.
    """

    params: HanParams
    h: float
    N: int
    Is_grid: tuple[float, ...]
    q_grid: tuple[float, ...]
    T_grid: tuple[float, ...]
    mode: str
    out: str | None
    workers: int
    seed: int
    budget: int
    checkpoint: str | None
    laps: int
    perm: str | None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (isinstance(self.N, int) and self.N >= 1):
            raise ValueError(f"N must be an integer >= 1, got {self.N!r}")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"h must be finite and > 0, got {self.h!r}")
        for name, grid in (("Is", self.Is_grid), ("q", self.q_grid), ("T", self.T_grid)):
            if not grid:
                raise ValueError(f"{name} grid is empty")
        for value in self.Is_grid:
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"Is values must be finite and >= 0, got {value!r}")
        for value in self.q_grid:
            if not (0.0 < value <= 1.0):
                raise ValueError(f"q values must be in (0, 1], got {value!r}")
        for value in self.T_grid:
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"T values must be finite and > 0, got {value!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers!r}")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget!r}")
        if self.laps < 0:
            raise ValueError(f"laps must be >= 0, got {self.laps!r}")


def default_config(mode: str) -> ExperimentConfig:
    """Per-mode defaults: the standard parameter set, h=0.4 m, I_s=2000.

    optimize uses N=11 (device reproduction scale); the grid modes use N=7
    so a full grid of exhaustive searches stays cheap. ratios defaults to
    its usual surface grid, 20 log-spaced T in [1,1000] by 26 linear I_s in
    [0,2500] at q=0.1%.
    """
    common = dict(params=DEFAULT_PARAMS, h=0.4, out=None, workers=1, seed=0,
                  budget=DEFAULT_BUDGET, checkpoint=None, laps=200, perm=None)
    if mode == "optimize":
        return ExperimentConfig(N=11, Is_grid=(2000.0,), q_grid=(0.10,),
                                T_grid=(1000.0,), mode=mode, **common)
    if mode == "sweep":
        return ExperimentConfig(N=7, Is_grid=(2000.0,), q_grid=(0.001,),
                                T_grid=(1000.0,), mode=mode, **common)
    if mode == "ratios":
        return ExperimentConfig(N=7, Is_grid=_grid("lin:0:2500:26"),
                                q_grid=(0.001,), T_grid=_grid("log:1:1000:20"),
                                mode=mode, **common)
    if mode == "simulate":
        return ExperimentConfig(N=11, Is_grid=(2000.0,), q_grid=(0.001,),
                                T_grid=(1000.0,), mode=mode, **common)
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def _grid(text: str) -> tuple[float, ...]:
    """Parse a grid spec: single value, comma list, lin:lo:hi:n, log:lo:hi:n."""
    text = text.strip()
    try:
        if text.startswith(("lin:", "log:")):
            kind, lo, hi, count = text.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
            if count < 1:
                raise ValueError
            if kind == "lin":
                return tuple(float(x) for x in np.linspace(lo, hi, count))
            if lo <= 0.0 or hi <= 0.0:
                raise ValueError
            return tuple(float(x) for x in np.geomspace(lo, hi, count))
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except (ValueError, TypeError) as exc:
        raise ValueError(f"cannot parse grid spec {text!r}; expected a number, "
                         f"a comma list, lin:lo:hi:n, or log:lo:hi:n") from exc


def serialize_config(cfg: ExperimentConfig) -> str:
    """Flat key=value form; parse_config(serialize_config(c)) == c."""
    lines = [f"mode={cfg.mode}"]
    for key in _PARAM_KEYS:
        lines.append(f"{key}={getattr(cfg.params, key)!r}")
    lines += [
        f"h={cfg.h!r}",
        f"N={cfg.N}",
        f"Is={','.join(repr(v) for v in cfg.Is_grid)}",
        f"q={','.join(repr(v) for v in cfg.q_grid)}",
        f"T={','.join(repr(v) for v in cfg.T_grid)}",
        f"workers={cfg.workers}",
        f"seed={cfg.seed}",
        f"budget={cfg.budget}",
        f"laps={cfg.laps}",
    ]
    if cfg.out is not None:
        lines.append(f"out={cfg.out}")
    if cfg.checkpoint is not None:
        lines.append(f"checkpoint={cfg.checkpoint}")
    if cfg.perm is not None:
        lines.append(f"perm={cfg.perm}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, defaults: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse key=value lines ('#' comments allowed) over `defaults`.

    Unknown keys are rejected so typos fail loudly instead of silently
    running the default.
    """
    cfg = defaults if defaults is not None else default_config("optimize")
    params = dict(
        (key, getattr(cfg.params, key)) for key in _PARAM_KEYS)
    fields: dict = dict(
        mode=cfg.mode, h=cfg.h, N=cfg.N, Is_grid=cfg.Is_grid, q_grid=cfg.q_grid,
        T_grid=cfg.T_grid, out=cfg.out, workers=cfg.workers, seed=cfg.seed,
        budget=cfg.budget, checkpoint=cfg.checkpoint, laps=cfg.laps, perm=cfg.perm)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _PARAM_KEYS:
            params[key] = float(value)
        elif key in ("h",):
            fields["h"] = float(value)
        elif key in ("N", "workers", "seed", "budget", "laps"):
            fields[key] = int(value)
        elif key in ("Is", "q", "T"):
            fields[key + "_grid"] = _grid(value)
        elif key in ("out", "checkpoint", "perm"):
            fields[key] = value or None
        elif key == "mode":
            fields["mode"] = value
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ExperimentConfig(params=HanParams(**params), **fields)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _single(grid: tuple[float, ...], name: str) -> float:
    if len(grid) != 1:
        raise ValueError(f"this mode needs a single {name} value, got a grid "
                         f"of {len(grid)}")
    return grid[0]


def _coeffs_at(cfg: ExperimentConfig, Is: float, q: float, T: float):
    lf = build_light_field(Is, q, cfg.h, cfg.N)
    return lap_coefficients(lf, cfg.params, T)


def _charge_budget(cfg: ExperimentConfig, searches: int) -> None:
    evals = searches * math.factorial(cfg.N)
    if evals > cfg.budget:
        raise BudgetError(
            f"refusing: {searches} exhaustive searches at N={cfg.N} cost "
            f"{evals:.3g} permutation evaluations (budget {cfg.budget:.3g}), "
            f"roughly {evals / _KERNEL_RATE:,.0f}s of scan time; raise "
            f"budget= or shrink the grid/N")


def _write_output(cfg: ExperimentConfig, text: str) -> None:
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def cmd_optimize(cfg: ExperimentConfig) -> str:
    """Search one point exhaustively and report every device of interest."""
    Is = _single(cfg.Is_grid, "Is")
    q = _single(cfg.q_grid, "q")
    T = _single(cfg.T_grid, "T")
    _charge_budget(cfg, 1)
    coeffs = _coeffs_at(cfg, Is, q, T)
    report = partitioned_search(coeffs, cfg.N, workers=cfg.workers,
                                checkpoint=cfg.checkpoint, progress=sys.stderr)
    mu_approx = evaluate_strategy(report.P_approx, coeffs).mu_bar
    r1, r2, r3 = ratios(coeffs, report.P_best, report.P_worst)
    certified = spot_check(report, coeffs, samples=1000, seed=cfg.seed)
    lines = [
        "# optimal mixing device report",
        f"Is={_fmt(Is)}",
        f"q={_fmt(q)}",
        f"T={_fmt(T)}",
        f"h={_fmt(cfg.h)}",
        report.to_text().rstrip("\n"),
        f"mu_approx={_fmt(mu_approx)}",
        f"r1={_fmt(r1)}",
        f"r2={_fmt(r2)}",
        f"r3={_fmt(r3)}",
        f"spot_check={'pass' if certified else 'FAIL'} (1000 samples, seed {cfg.seed})",
        "P_best matrix:",
        report.P_best.matrix_text(),
        "P_worst matrix:",
        report.P_worst.matrix_text(),
        "P_approx matrix:",
        report.P_approx.matrix_text(),
    ]
    text = "\n".join(lines) + "\n"
    _write_output(cfg, text)
    return text


def cmd_sweep(cfg: ExperimentConfig) -> str:
    """Grid sweep; one CSV row per (I_s, q, T) in deterministic grid order."""
    points = [(Is, q, T) for Is in cfg.Is_grid for q in cfg.q_grid for T in cfg.T_grid]
    _charge_budget(cfg, len(points))
    rows = ["I_s,q,T,mu_max,mu_min,mu_identity,mu_approx,best_is_identity,"
            "best_matches_approx"]
    for Is, q, T in points:
        coeffs = _coeffs_at(cfg, Is, q, T)
        report = partitioned_search(coeffs, cfg.N, workers=cfg.workers)
        mu_approx = evaluate_strategy(report.P_approx, coeffs).mu_bar
        rows.append(",".join([
            _fmt(Is), _fmt(q), _fmt(T),
            _fmt(report.mu_best), _fmt(report.mu_worst),
            _fmt(report.mu_identity), _fmt(mu_approx),
            "1" if report.best_is_identity else "0",
            "1" if report.best_matches_approx else "0",
        ]))
    text = "\n".join(rows) + "\n"
    _write_output(cfg, text)
    return text


def cmd_ratios(cfg: ExperimentConfig) -> str:
    """Ratio surface over (T, I_s) at fixed q; CSV of T,I_s,r1,r2,r3."""
    q = _single(cfg.q_grid, "q")
    points = [(T, Is) for T in cfg.T_grid for Is in cfg.Is_grid]
    _charge_budget(cfg, len(points))
    rows = ["T,I_s,r1,r2,r3"]
    for T, Is in points:
        coeffs = _coeffs_at(cfg, Is, q, T)
        report = partitioned_search(coeffs, cfg.N, workers=cfg.workers)
        r1, r2, r3 = ratios(coeffs, report.P_best, report.P_worst)
        rows.append(",".join([_fmt(T), _fmt(Is), _fmt(r1), _fmt(r2), _fmt(r3)]))
    text = "\n".join(rows) + "\n"
    _write_output(cfg, text)
    return text


def cmd_simulate(cfg: ExperimentConfig, P: Permutation | None = None,
                 C0: LapState | None = None, K: int | None = None) -> str:
    """Lap-by-lap trajectory CSV for one device at one (I_s, q, T) point.

    P defaults to the config's `perm` one-line text; C0 to the all-zero
    state; K to the config's lap count.
    """
    Is = _single(cfg.Is_grid, "Is")
    q = _single(cfg.q_grid, "q")
    T = _single(cfg.T_grid, "T")
    if P is None:
        if cfg.perm is None:
            raise ValueError("simulate needs a device: pass --perm in one-line "
                             "notation, e.g. --perm '2 4 6 8 10 11 9 7 5 3 1'")
        P = Permutation.from_one_line(cfg.perm)
    if len(P) != cfg.N:
        raise ValueError(f"device has {len(P)} layers but N={cfg.N}")
    if C0 is None:
        C0 = LapState(np.zeros(cfg.N))
    if K is None:
        K = cfg.laps
    if K < 1:
        raise ValueError(f"simulate needs at least one lap, got K={K!r}")
    coeffs = _coeffs_at(cfg, Is, q, T)
    star = fixed_point(P, coeffs)
    states = simulate_laps(P, coeffs, C0, K)
    header = ["k"] + [f"C_{n}" for n in range(1, cfg.N + 1)] + ["mu_lap",
                                                                "dist_to_fixed_point"]
    rows = [",".join(header)]
    for k, state in enumerate(states):
        mu_k = mu_bar_from_state(state, coeffs)
        dist = float(np.max(np.abs(state.C - star.C)))
        rows.append(",".join([str(k)] + [_fmt(c) for c in state.C]
                             + [_fmt(mu_k), _fmt(dist)]))
    text = "\n".join(rows) + "\n"
    _write_output(cfg, text)
    return text


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for budget refusal
    # here, so turn usage problems into config errors instead.
    def error(self, message: str):
        raise ValueError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="racemix",
                     description="Mixing-device optimization for layered "
                                 "raceway ponds under photoinhibition.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, blurb in (("optimize", "exhaustive device search at one point"),
                        ("sweep", "growth-rate grid sweep to CSV"),
                        ("ratios", "ratio surface over (T, I_s) to CSV"),
                        ("simulate", "lap trajectory of one device to CSV")):
        p = sub.add_parser(mode, help=blurb, description=blurb)
        p.add_argument("--params-file", metavar="PATH",
                       help="key=value settings file; flags override it")
        p.add_argument("--Is", metavar="GRID",
                       help="surface intensity value or grid spec")
        p.add_argument("--q", metavar="GRID",
                       help="transmitted-light fraction value or grid spec")
        p.add_argument("--T", metavar="GRID",
                       help="lap duration value or grid spec (s)")
        p.add_argument("--N", type=int, metavar="INT", help="layer count")
        p.add_argument("--h", type=float, metavar="M", help="pond depth (m)")
        p.add_argument("--laps", type=int, metavar="INT",
                       help="lap count for simulate")
        p.add_argument("--perm", metavar="ONE_LINE",
                       help="device in one-line notation (simulate)")
        p.add_argument("--workers", type=int, metavar="INT",
                       help="search threads; results are identical for any count")
        p.add_argument("--seed", type=int, metavar="INT",
                       help="seed for the sampled optimality spot-check")
        p.add_argument("--budget", type=int, metavar="INT",
                       help="max permutation evaluations before refusing")
        p.add_argument("--out", metavar="PATH",
                       help="output file (default: stdout)")
        p.add_argument("--checkpoint", metavar="PATH",
                       help="resumable search checkpoint (optimize)")
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = default_config(args.mode)
    if args.params_file is not None:
        with open(args.params_file, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), defaults=cfg)
        cfg = replace(cfg, mode=args.mode)  # the subcommand always wins
    updates: dict = {}
    if args.Is is not None:
        updates["Is_grid"] = _grid(args.Is)
    if args.q is not None:
        updates["q_grid"] = _grid(args.q)
    if args.T is not None:
        updates["T_grid"] = _grid(args.T)
    for key in ("N", "h", "laps", "perm", "workers", "seed", "budget", "out",
                "checkpoint"):
        value = getattr(args, key)
        if value is not None:
            updates[key] = value
    return replace(cfg, **updates) if updates else cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config_from_args(args)
        if cfg.mode == "optimize":
            cmd_optimize(cfg)
        elif cfg.mode == "sweep":
            cmd_sweep(cfg)
        elif cfg.mode == "ratios":
            cmd_ratios(cfg)
        else:
            cmd_simulate(cfg)
        return 0
    except (BudgetError, SearchCapError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
