import math

import numpy as np

from drawdown_put.mc_oracle import horizon_for_tolerance, mc_price
from drawdown_put.models import MarketState, McConfig, ModelParams
from drawdown_put.path_generator import sample_path
from drawdown_put.policy import optimal_policy
from drawdown_put.pricing import optimal_barrier, price, price_grid
from drawdown_put.sweep import figure_grid
from drawdown_put.verification import run_all


def main():
    """Price the reference contract, check it against Monte Carlo and run the checks."""
    print("=" * 60)
    print("Drawdown-capped American put, r=0.1, sigma=0.2, K=100, e^c=1.2")
    print("=" * 60)

    params = ModelParams.from_drawdown_ratio(r=0.1, sigma=0.2, strike_k=100.0, drawdown=1.2)
    a_star = optimal_barrier(params)
    print(f"\nOptimal barrier a* = {a_star:.6f} (e^a* = {math.exp(a_star):.4f})")

    # Price a few states
    print("\nPrices at x_bar = log 100:")
    frame = figure_grid(1, params, n_points=11)
    print(frame[["x", "regime", "price"]].to_string(index=False))

    print("\nPrices on the diagonal S = max:")
    maxima = np.log([85.0, 95.0, 105.0, 115.0, 125.0])
    print(price_grid(params, maxima, maxima).to_string(index=False))

    state = MarketState.from_prices(spot=95.0, running_max=100.0)
    breakdown = price(params, state)
    print(f"\nV(S=95, max=100) = {breakdown.value:.6f} [{breakdown.regime.value}]")

    # One path from that state
    path = sample_path(params, state, dt=1e-3, n_steps=1000, base_seed=20240101)
    deepest = path["drawdown"].max()
    print(
        f"Sample path over one year: S_1 = {math.exp(path['x'].iloc[-1]):.2f}, "
        f"deepest drawdown {deepest:.4f} (c = {params.c:.4f})"
    )

    # Monte Carlo under the optimal policy
    print("\nRunning Monte Carlo...")
    cfg = McConfig(
        n_paths=20_000, dt=1e-3, t_max=horizon_for_tolerance(params), base_seed=20240101
    )
    estimate = mc_price(params, state, optimal_policy(params), cfg, extrapolate=True)
    print(f"MC estimate: {estimate.mean:.6f} +/- {estimate.stderr:.6f}")
    print(f"Paths cut at the horizon: {estimate.n_truncated}")

    # Verification suite
    print("\n" + "=" * 60)
    print("Verification")
    print("=" * 60)
    for report in run_all(params):
        status = "pass" if report.passed else "FAIL"
        print(
            f"{report.check_name:<20} residual {report.max_abs_residual:.3e} "
            f"tolerance {report.tolerance:.1e}  {status}"
        )


if __name__ == "__main__":
    main()
