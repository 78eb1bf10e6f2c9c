"""
drawdown-put command line.

    drawdown-put price --x 90 --xbar 100
    drawdown-put price --x-grid 85,95 --xbar-grid 100,100
    drawdown-put barrier --search --paths 50000
    drawdown-put sweep --figure 3 --out preset3.csv
    drawdown-put verify --skip-mc --format json
    drawdown-put mc --x 95 --xbar 100 --paths 200000 --dt 1e-4

Exit codes: 0 success, 1 a verification check failed, 2 invalid input.
"""

from pathlib import Path
import argparse
import io
import json
import logging
import math
import sys

import numpy as np
import pandas as pd

from .config import (
    COMMANDS,
    DEFAULT_DRAWDOWN,
    DEFAULT_DT,
    DEFAULT_PATHS,
    DEFAULT_R,
    DEFAULT_SEED,
    DEFAULT_SIGMA,
    DEFAULT_STRIKE,
    DEFAULT_TRUNCATION_TOL,
    OUTPUT_FORMATS,
    OutputSpec,
    RunConfig,
    load_config_file,
    parse_grid,
)
from .mc_oracle import barrier_search, horizon_for_tolerance, mc_price, simulate_stop
from .models import ConfigError, DrawdownPutError, MarketState, McConfig, ModelParams
from .policy import FixedBarrierPolicy
from .path_generator import sample_path
from .pricing import barrier_root_residual, optimal_barrier, price, price_grid
from .scale_fn import delta_c, lambda_c
from .sweep import figure_grid, header_lines, monotonicity_summary, sweep_grid, write_sweep_csv
from .verification import reports_to_json, run_all

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2

# Barrier offsets around a* tried by `barrier --search`.
SEARCH_OFFSETS = (-0.1, -0.05, -0.02, 0.0, 0.02, 0.05, 0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drawdown-put",
        description="Price and verify the perpetual American put capped at the first drawdown.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", help="key = value file; flags given on the command line win")

    model = parser.add_argument_group("model")
    model.add_argument("--r", type=float, default=DEFAULT_R, help="Interest rate (default: %(default)s)")
    model.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Volatility (default: %(default)s)")
    model.add_argument("--strike", type=float, default=DEFAULT_STRIKE, help="Strike K (default: %(default)s)")
    model.add_argument(
        "--drawdown",
        type=float,
        default=DEFAULT_DRAWDOWN,
        help="Relative drawdown e^c ending the contract (default: %(default)s)",
    )

    state = parser.add_argument_group("state (prices, converted to logs)")
    state.add_argument("--x", type=float, help="Spot price S_0")
    state.add_argument("--xbar", type=float, help="Historical maximum; defaults to the spot")

    mc = parser.add_argument_group("Monte Carlo")
    mc.add_argument("--paths", type=int, default=DEFAULT_PATHS, help="Number of paths (default: %(default)s)")
    mc.add_argument("--dt", type=float, default=DEFAULT_DT, help="Time step (default: %(default)s)")
    mc.add_argument("--tmax", type=float, help="Horizon; defaults to e^{-r tmax} K = 1e-4 K")
    mc.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Base seed (default: %(default)s)")
    mc.add_argument("--stride", type=int, default=1, help="Monitor every n-th step (default: 1)")
    mc.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    mc.add_argument(
        "--extrapolate", action="store_true", help="mc: cancel the sqrt(dt) monitoring bias from every other date"
    )

    grids = parser.add_argument_group("sweeps (lo:hi:n or comma lists)")
    grids.add_argument("--figure", type=int, choices=(1, 2, 3, 4), help="Preset sweep: 1 spot, 2 (spot, max), 3 and 4 (r, sigma)")
    grids.add_argument("--points", type=int, default=81, help="Points per preset axis (default: %(default)s)")
    grids.add_argument("--x-grid", help="Spot prices")
    grids.add_argument("--xbar-grid", help="Historical maxima")
    grids.add_argument("--r-grid", help="Interest rates")
    grids.add_argument("--sigma-grid", help="Volatilities")

    parser.add_argument("--search", action="store_true", help="barrier: also locate the barrier by MC")
    parser.add_argument("--perturb-astar", type=float, default=0.0, help="verify: shift a* by this much")
    parser.add_argument("--skip-mc", action="store_true", help="verify: leave out the MC comparison")
    parser.add_argument("--out", help="Output file (default: stdout)")
    parser.add_argument("--path-out", help="mc: also write path 0 up to its stop as CSV")
    parser.add_argument("--format", choices=OUTPUT_FORMATS, default="csv", help="Output format (default: csv)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Flags over config file over built-in defaults."""
    parser = build_parser()
    pre, _ = build_parser().parse_known_args(argv)
    if pre.config:
        known = set(vars(parser.parse_args([])))
        parser.set_defaults(**load_config_file(pre.config, known_keys=known - {"config"}))
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required: " + ", ".join(COMMANDS))
    return args


def _log_axis(text: str | None, name: str) -> np.ndarray | None:
    if text is None:
        return None
    prices = parse_grid(text, name)
    if np.any(prices <= 0):
        raise ConfigError(f"{name} holds prices, which must be positive")
    return np.log(prices)


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    model = ModelParams.from_drawdown_ratio(args.r, args.sigma, args.strike, args.drawdown)
    state = None
    if args.x is not None or args.xbar is not None:
        spot = args.x if args.x is not None else args.xbar
        running_max = args.xbar if args.xbar is not None else spot
        state = MarketState.from_prices(spot, running_max)
    axes = {
        "xs": _log_axis(args.x_grid, "x-grid"),
        "xbars": _log_axis(args.xbar_grid, "xbar-grid"),
        "rs": parse_grid(args.r_grid, "r-grid") if args.r_grid else None,
        "sigmas": parse_grid(args.sigma_grid, "sigma-grid") if args.sigma_grid else None,
    }
    wants_mc = args.command == "mc" or (args.command == "verify" and not args.skip_mc) or args.search
    mc = None
    if wants_mc:
        t_max = args.tmax if args.tmax is not None else horizon_for_tolerance(model, DEFAULT_TRUNCATION_TOL)
        mc = McConfig(
            n_paths=args.paths,
            dt=args.dt,
            t_max=t_max,
            base_seed=args.seed,
            monitor_stride=args.stride,
            n_workers=args.workers,
        )
    return RunConfig(
        command=args.command,
        model=model,
        state=state,
        sweep_axes={k: v for k, v in axes.items() if v is not None},
        mc=mc,
        output=OutputSpec(path=Path(args.out) if args.out else None, format=args.format),
        figure=args.figure,
        figure_points=args.points,
        perturb_astar=args.perturb_astar,
        skip_mc=args.skip_mc,
        extrapolate=args.extrapolate,
        path_out=Path(args.path_out) if args.path_out else None,
    )


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output.path is None:
        sys.stdout.write(text)
    else:
        cfg.output.path.write_text(text, encoding="utf-8")
        logger.info("wrote %s", cfg.output.path)


def _render(cfg: RunConfig, records: list[dict]) -> str:
    if cfg.output.format == "json":
        return json.dumps({"meta": cfg.header(), "records": records}, indent=2, default=str) + "\n"
    buffer = io.StringIO()
    for line in header_lines(cfg.header()):
        buffer.write(line + "\n")
    pd.DataFrame(records).to_csv(buffer, float_format="%.17g", index=False, lineterminator="\n")
    return buffer.getvalue()


def cmd_price(cfg: RunConfig) -> int:
    if cfg.state is None:
        frame = price_grid(cfg.model, cfg.sweep_axes["xs"], cfg.sweep_axes["xbars"])
        records = [{**row, **cfg.model.to_record()} for row in frame.to_dict("records")]
        logger.info("priced %d (x, xbar) pairs", len(records))
        _emit(cfg, _render(cfg, records))
        return EXIT_OK
    breakdown = price(cfg.model, cfg.state)
    record = {"x": cfg.state.x, "xbar": cfg.state.x_bar, **cfg.model.to_record(), **breakdown.to_record()}
    logger.info("V = %.10g (%s)", breakdown.value, breakdown.regime.value)
    _emit(cfg, _render(cfg, [record]))
    return EXIT_OK


def cmd_barrier(cfg: RunConfig) -> int:
    params = cfg.model
    a = optimal_barrier(params)
    record = {
        **params.to_record(),
        "a_star": a,
        "exp_a_star": math.exp(a),
        "lambda": lambda_c(params, params.c),
        "delta": delta_c(params, params.c),
        "root_residual": barrier_root_residual(params, a),
    }
    records = [record]
    if cfg.mc is not None:
        log_k = params.log_strike
        state = cfg.state or MarketState(log_k, log_k)
        grid = [a + offset for offset in SEARCH_OFFSETS]
        best, curve = barrier_search(params, state, cfg.mc, grid)
        logger.info("MC barrier search: best %.6f vs a* %.6f", best, a)
        record.update({"mc_best_barrier": best, "mc_best_exp_barrier": math.exp(best)})
        if cfg.output.format == "json":
            record["curve"] = curve.to_dict("records")
        else:
            records = curve.assign(a_star=a, mc_best_barrier=best).to_dict("records")
    _emit(cfg, _render(cfg, records))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.figure is not None:
        frame = figure_grid(cfg.figure, cfg.model, n_points=cfg.figure_points)
    else:
        frame = sweep_grid(cfg.model, cfg.state, **cfg.sweep_axes)
    if cfg.figure in (3, 4):
        for key, direction in monotonicity_summary(frame).items():
            logger.info("%s: %s", key, direction)
    if cfg.output.format == "json":
        _emit(cfg, _render(cfg, frame.to_dict("records")))
    else:
        out = cfg.output.path if cfg.output.path is not None else sys.stdout
        write_sweep_csv(frame, out, cfg.header())
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    mc = None if cfg.skip_mc else cfg.mc
    reports = run_all(cfg.model, mc, a_star_shift=cfg.perturb_astar)
    if cfg.output.format == "json":
        _emit(cfg, reports_to_json(reports, cfg.model) + "\n")
    else:
        records = [{k: v for k, v in r.to_record().items() if k != "detail"} for r in reports]
        _emit(cfg, _render(cfg, records))
    failed = [r.check_name for r in reports if not r.passed]
    if failed:
        logger.error("failed checks: %s", ", ".join(failed))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_mc(cfg: RunConfig) -> int:
    params, state = cfg.model, cfg.state
    a = optimal_barrier(params) + cfg.perturb_astar
    closed = price(params, state, a)
    est = mc_price(params, state, FixedBarrierPolicy(a), cfg.mc, extrapolate=cfg.extrapolate)
    z_score = None
    if est.stderr:
        z_score = (closed.value - est.mean) / est.stderr
    elif est.stderr is None:
        logger.warning("stderr undefined with %d path(s); z-score left out", est.n_effective)
    record = {
        "closed_form": closed.value,
        "regime": closed.regime.value,
        **est.to_record(),
        "z_score": z_score,
    }
    logger.info("closed form %.8g, MC %.8g, z %s", closed.value, est.mean, z_score)
    _emit(cfg, _render(cfg, [record]))
    if cfg.path_out is not None:
        _write_first_path(cfg, FixedBarrierPolicy(a))
    return EXIT_OK


def _write_first_path(cfg: RunConfig, policy: FixedBarrierPolicy) -> None:
    """Path 0 of the run on the simulation grid, up to its stop."""
    params, state, mc = cfg.model, cfg.state, cfg.mc
    stop = simulate_stop(params, state, policy, mc, 0)
    n_steps = round(stop.stop_time / mc.dt)
    path = sample_path(params, state, mc.dt, n_steps, mc.base_seed, path_index=0)
    path.to_csv(cfg.path_out, float_format="%.17g", index=False, lineterminator="\n")
    logger.info(
        "path 0 stops at t=%g (%s); wrote %s", stop.stop_time, stop.reason.value, cfg.path_out
    )


HANDLERS = {
    "price": cmd_price,
    "barrier": cmd_barrier,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "mc": cmd_mc,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        args = parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        cfg = run_config_from_args(args)
        logger.info("%s with %s", cfg.command, cfg.header())
        return HANDLERS[cfg.command](cfg)
    except DrawdownPutError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
