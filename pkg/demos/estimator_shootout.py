"""Why model choice matters when estimating home advantage.

Three estimators walk into a simulated season whose true home advantage
we control:

  * a bivariate Poisson model of the two goal counts,
  * a Bayesian paired-comparison model of the goal difference,
  * OLS on goal difference with home/away team dummies.

The OLS intercept looks innocent, but with drop-first dummy coding it
prices the impossible "team 0 at home against team 0" game, and its
season-to-season spread is enormous. The count models share information
across the 380 games of a season and stay close to the truth.

Run: python3 demos/estimator_shootout.py  (about a minute)
"""
from bphaven.simgrid import (
    SimCell,
    run_season,
    true_goal_difference_ha,
)

N_SEASONS = 12
cell = SimCell(dgp="bvp", rho_star=-0.4, T_star=0.25, n_seasons=N_SEASONS, seed=3)
target = true_goal_difference_ha("bvp", cell.T_star)

print(
    f"DGP: bivariate Poisson seasons, 20 teams, rho* = {cell.rho_star}, "
    f"log-scale HA T* = {cell.T_star}"
)
print(f"true HA in goal-difference units: exp(T*) - 1 = {target:.4f}\n")

names = ("bivariate_poisson", "paired_comparison", "linear_regression")
errors = {n: [] for n in names}
print(f"{'season':>6} {'bvp':>10} {'paired':>10} {'ols':>10}")
for season in range(N_SEASONS):
    est = run_season(cell, season)
    assert not est.errors, est.errors
    print(
        f"{season:>6}"
        + "".join(f" {est.estimates[n]:>10.4f}" for n in names)
    )
    for n in names:
        errors[n].append(est.estimates[n] - target)

print(f"{'truth':>6} {target:>10.4f} {target:>10.4f} {target:>10.4f}\n")
for n in names:
    errs = errors[n]
    mab = sum(abs(e) for e in errs) / len(errs)
    mb = sum(errs) / len(errs)
    print(f"{n:>20}: mean absolute bias {mab:.4f}, mean bias {mb:+.4f}")

print(
    "\nThe OLS column swings by half a goal from season to season; the\n"
    "count models rarely miss by more than a tenth. Scale this to the\n"
    "full grid (two DGPs x three correlations x three HA levels) with:\n"
    "  bphaven simulate --out sim_out --profile desk"
)
