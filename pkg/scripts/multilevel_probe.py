"""Three-level probe thermometry: temperature relaxation from both sides.

Integrates the temperature form of the second-order velocity for a
detailed-balance probe started above and below the bath temperature and
prints the monotone approach to beta0.
"""

import numpy as np

from thermostrobe.ansatz import GibbsAnsatz
from thermostrobe.models import (
    MultilevelParams,
    multilevel_A_analytic,
    multilevel_energy_observable,
    multilevel_generator,
)
from thermostrobe.strob import StrobConfig, run_ode_temperature


def main():
    p = MultilevelParams(
        omegas=(0.0, 1.0, 2.0),
        base_rates=np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
        beta0=1.0,
    )
    gen = multilevel_generator(p)
    fam = GibbsAnsatz.canonical(multilevel_energy_observable(p))
    cfg = StrobConfig(lam=1.0, dt=0.1, horizon=50.0)

    print(f"energy velocity at beta0: {multilevel_A_analytic(p.beta0, p):.3e} (exact zero)")
    for beta_start in (p.beta0 - 0.5, p.beta0 + 0.5):
        traj = run_ode_temperature(gen, fam, beta_start, cfg)
        beta = traj.temps[:, 0]
        steps = np.diff(beta)
        monotone = np.all(steps >= 0.0) if beta_start < p.beta0 else np.all(steps <= 0.0)
        print(f"\nstart beta = {beta_start}:")
        for t in (0.0, 1.0, 2.0, 5.0, 10.0, 50.0):
            k = int(round(t / cfg.dt))
            print(f"  t = {t:5.1f}  beta = {beta[k]:.12f}")
        print(f"  monotone: {monotone}   terminal |beta - beta0| = {abs(beta[-1] - p.beta0):.3e}")


if __name__ == "__main__":
    main()
