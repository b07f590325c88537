"""Smoke test for the epmix_py extension module."""

import math
import random
import tempfile
from pathlib import Path

import epmix_py as ep


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok:", msg)


def main():
    lam = ep.lambda_for_variance(1.0, 2.0)
    check(abs(ep.ep_variance(1.0, lam) - 2.0) < 1e-12, "lambda_for_variance round-trips")
    check(abs(ep.ep_logpdf(2.0, 0.5, [0.0]) + 0.5 * math.log(2 * math.pi)) < 1e-12, "q=2 log density is standard normal")
    check(abs(math.exp(ep.zolotarev_logpdf(1.0, 1.0)) - 0.5 * math.cos(0.5)) < 1e-12, "Zolotarev q=1 is cos(d/2)/2")

    draws = ep.compose_ep_sample(0.6, 1.0, 20000, seed=3)
    var = sum(d * d for d in draws) / len(draws)
    check(abs(var / ep.ep_variance(0.6, 1.0) - 1.0) < 0.1, "mixture draws have the exponential power variance")

    rng = random.Random(5)
    x = [[rng.gauss(0, 1) for _ in range(3)] for _ in range(40)]
    beta = [1.0, 0.0, -0.5]
    y = [sum(b * v for b, v in zip(beta, row)) + rng.gauss(0, 1) for row in x]

    fit = ep.fit_sigma2_tau2(y, x)
    check(fit["sigma2"] > 0 and fit["tau2"] > 0, f"evidence fit sigma2={fit['sigma2']:.3f} tau2={fit['tau2']:.3f}")
    grid = ep.build_theta_grid(fit["sigma2"], fit["tau2"])
    check(len(grid) == 9, "theta grid has 9 points")

    sigma2, lam, q = grid[2]
    target = ep.Target(y, x, sigma2, q, lam, "noncentered")
    check(target.dim == 9, repr(target))
    state = target.to_unconstrained([0.5, 0.1, -0.2], xi=[1.0, 1.0, 1.0], delta=[1.0, 1.5, 2.0])
    check(all(abs(a - b) < 1e-12 for a, b in zip(target.recover_z2(state), [0.5, 0.1, -0.2])), "state round-trips")
    value, grad = target.log_density_and_grad(state)
    check(math.isfinite(value) and len(grad) == 9, "log density and gradient")

    chains = ep.sample(target, chains=2, warmup=300, retain=300, seed=7)
    check(len(chains) == 2 and len(chains[0]["z2"]) == 300, "two chains of 300 draws")
    col = [row[0] for row in chains[0]["z2"]]
    check(ep.ess(col) > 0, f"ESS of first coefficient {ep.ess(col):.0f}")
    rhat = ep.split_rhat([[row[0] for row in c["z2"]] for c in chains])
    check(rhat < 1.2, f"split R-hat {rhat:.3f}")

    try:
        ep.Target(y, x, sigma2, 2.0, lam, "centered")
    except ValueError as e:
        check(True, f"invalid target rejected ({e})")
    else:
        raise AssertionError("q=2 centered target should be rejected")

    data = Path(__file__).resolve().parent.parent / "data" / "desk_synthetic.csv"
    with tempfile.TemporaryDirectory() as out:
        files = ep.run_experiment(
            str(data), out, {"chains": 2, "warmup": 50, "retain": 50, "q_list": [0.6, 1.4], "params": "naive,noncentered"}
        )
        summary = Path(out) / "summary.csv"
        check(summary.exists() and len(summary.read_text().splitlines()) == 1 + 2 * 2 * 2, f"{len(files)} experiment files")

    print("smoke test passed")


if __name__ == "__main__":
    main()
