#!/usr/bin/env python3
"""Generate the K=3 guided-DDPM golden fixture with scalar arithmetic.

This script intentionally does NOT import the trajdiff library: every update
is re-derived here with plain Python floats and math.sqrt, element by
element, so the committed fixture is an independent reference for the
sampler. numpy is used only to reproduce the documented noise-draw order
(one standard-normal array for the initial trajectory, then one per step
with positive noise scale).

Scenario: 3-step linear schedule, analytic Gaussian noise model, hinge cost
guidance in clean_estimate/frozen_eps mode, identity normalization, two
1-D waypoints.

Usage: python3 scripts/make_golden_ddpm_k3.py > tests/golden/ddpm_k3_frozen_eps.json
"""

import json
import math
import sys

import numpy as np

SEED = 2024
K = 3
BETA = [0.1, 0.2, 0.3]          # linear from 0.1 to 0.3 over 3 steps
MEAN = [0.3, -0.2]              # per-waypoint Gaussian mean (1-D actions)
STD = 0.4
RHO = 0.05
C_OB = [0.1]
Q_STAR = 0.6
N_WAYPOINTS = 2


def schedule():
    alpha = [1.0 - b for b in BETA]
    abar, prod = [], 1.0
    for a in alpha:
        prod *= a
        abar.append(prod)
    sigma = [0.0]
    for k in range(2, K + 1):
        sigma.append(math.sqrt(BETA[k - 1] * (1.0 - abar[k - 2]) / (1.0 - abar[k - 1])))
    return alpha, abar, sigma


def oracle_eps(ak, k, abar):
    """Bayes-optimal noise prediction for a0 ~ N(MEAN, STD^2), scalar form."""
    ab = abar[k - 1]
    var = STD * STD
    out = []
    for i in range(N_WAYPOINTS):
        gain = math.sqrt(ab) * var / (ab * var + 1.0 - ab)
        e0 = MEAN[i] + gain * (ak[i] - math.sqrt(ab) * MEAN[i])
        out.append((ak[i] - math.sqrt(ab) * e0) / math.sqrt(1.0 - ab))
    return out


def unnormalize_identity(x):
    # identity stats still apply the (x+1)/2*span+lo arithmetic; mirror it
    return (x + 1.0) / 2.0 * 2.0 + (-1.0)


def main():
    alpha, abar, sigma = schedule()
    rng = np.random.default_rng(SEED)
    draw0 = rng.standard_normal((N_WAYPOINTS, 1))
    ak = [float(draw0[i, 0]) for i in range(N_WAYPOINTS)]
    draws = {"init": [v.hex() for v in ak]}
    steps = []

    for k in range(K, 0, -1):
        eps = oracle_eps(ak, k, abar)
        ab, al, sg = abar[k - 1], alpha[k - 1], sigma[k - 1]
        mu = [(ak[i] - (1.0 - al) / math.sqrt(1.0 - ab) * eps[i]) / math.sqrt(al)
              for i in range(N_WAYPOINTS)]
        if sg > 0.0:
            z = rng.standard_normal((N_WAYPOINTS, 1))
            a_next = [mu[i] + sg * float(z[i, 0]) for i in range(N_WAYPOINTS)]
            draws[f"z_k{k}"] = [float(z[i, 0]).hex() for i in range(N_WAYPOINTS)]
        else:
            a_next = list(mu)

        # guidance at the pre-step trajectory: clean estimate, clamped
        a0 = [(ak[i] - math.sqrt(1.0 - ab) * eps[i]) / math.sqrt(ab)
              for i in range(N_WAYPOINTS)]
        a0 = [min(1.0, max(-1.0, v)) for v in a0]
        a0_world = [unnormalize_identity(v) for v in a0]
        grad = []
        for i in range(N_WAYPOINTS):
            dist = abs(a0_world[i] - C_OB[0])
            if dist <= Q_STAR and dist >= 1e-9:
                grad.append(-(a0_world[i] - C_OB[0]) / dist)
            elif dist < 1e-9:
                grad.append(-1.0)
            else:
                grad.append(0.0)
        guid = [1.0 * g / math.sqrt(ab) for g in grad]  # identity action scale
        a_next = [a_next[i] - RHO * guid[i] for i in range(N_WAYPOINTS)]
        steps.append({"k": k, "after": [v.hex() for v in a_next]})
        ak = a_next

    json.dump({
        "seed": SEED, "K": K, "beta": BETA, "mean": MEAN, "std": STD,
        "rho": RHO, "c_ob": C_OB, "q_star": Q_STAR,
        "numpy_version": np.__version__,
        "draws": draws, "steps": steps,
        "final": [v.hex() for v in ak],
    }, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
