"""Price a game (Israeli) put on the binomial lattice.

Shows how the cancellation surcharge interpolates between the European-style
"cancel immediately" regime and the plain American put, and how the price
converges as the lattice is refined.

Run:  python3 demos/demo_pricing.py
"""

from gamehedge import (
    MarketParams,
    game_put,
    make_step_model,
    build_stock_lattice,
    payoff_lattices,
    game_value,
    american_value,
    rational_stopping,
    brute_force_value,
)

params = MarketParams(r=0.06, kappa=0.2, T=1.0, z=100.0)
strike = 110.0


def price(spec, n):
    step = make_step_model(params, n)
    lat = build_stock_lattice(step, params)
    yhat, xhat = payoff_lattices(spec, lat, step)
    return game_value(yhat, xhat, step), step, lat, yhat, xhat


print(f"Game put, K={strike}, r={params.r}, kappa={params.kappa}, T={params.T}, z={params.z}")
print()
print("Effect of the cancellation surcharge (n = 256):")
print(f"  {'delta':>8}  {'price':>12}  {'canceller stops from step':>26}")
for delta in (0.0, 0.5, 1.0, 2.0, 5.0, 1e9):
    v, step, lat, yhat, xhat = price(game_put(strike, delta), 256)
    zeta, _ = rational_stopping(v, yhat, xhat)
    import numpy as np

    first = min((k for k in range(257) if np.any(zeta.stop[k])), default=256)
    label = f"{delta:g}"
    print(f"  {label:>8}  {v.root:12.6f}  {first:>26}")

amer = None
v, step, lat, yhat, xhat = price(game_put(strike, 1e9), 256)
amer = american_value(yhat, step).root
print(f"\nAmerican put reference (same lattice): {amer:.6f}")

print("\nLattice convergence (delta = 2):")
spec = game_put(strike, 2.0)
prev = None
for n in (8, 16, 32, 64, 128, 256, 512, 1024):
    v, *_ = price(spec, n)
    diff = "" if prev is None else f"{v.root - prev:+.6f}"
    print(f"  n = {n:>5}  price = {v.root:.8f}  {diff}")
    prev = v.root

print("\nSaddle certificate by full enumeration (n = 4):")
v, step, lat, yhat, xhat = price(spec, 4)
bf = brute_force_value(yhat, xhat, step)
print(f"  backward induction {v.root:.12f}")
print(f"  min-max            {bf.upper:.12f}")
print(f"  max-min            {bf.lower:.12f}")
print(f"  saddle gap         {bf.saddle_gap:.3g}")
