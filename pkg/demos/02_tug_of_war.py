"""Monte Carlo tug-of-war on (-1, 1) against the finite-difference value.

Players follow the solved field; the average payoff at 0 should match the
discrete value 0.5 within a few standard errors.
"""

from inflap import Interval, SchemeParams, solve
from inflap.game import GameConfig, chain_value_1d, play

line = Interval(-1.0, 1.0)
eps = 1 / 8

u = solve(line, 1.0, SchemeParams(eps=eps, sweep="newton"))
x, chain = chain_value_1d(1.0, eps)
print(f"scheme u(0) = {u.at([0.0]):.6f}, chain oracle = {chain[len(chain) // 2]:.6f}")

for trials in (1_000, 10_000, 100_000):
    res = play(line, [0.0], 1.0, GameConfig(eps=eps, trials=trials, seed=1), u)
    print(f"trials={trials:>6}: mean {res.mean_payoff:.4f} +- {res.std_error:.4f}, "
          f"mean steps {res.mean_steps:.1f}")
