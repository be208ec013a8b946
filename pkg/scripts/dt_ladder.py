"""Reset-spacing refinement ladder for the driven qubit.

For each dt the discrete measure-evolve protocol is compared against the
first- and second-order continuum velocities on the shared sampling grid.
The second-order deviation should shrink like dt^2 (ratio ~4 per halving)
while the first-order one shrinks like dt.
"""

import numpy as np

from thermostrobe.ansatz import GibbsAnsatz
from thermostrobe.models import QubitParams, qubit_energy_observable, qubit_generator
from thermostrobe.strob import StrobConfig, run_discrete, run_ode

DTS = (0.1, 0.05, 0.025)
T = 5.0
E0 = 0.5


def main():
    print(f"{'dt':>8} {'max|disc-ode1|':>16} {'max|disc-ode2|':>16} {'ratio2':>8}")
    prev = None
    for dt in DTS:
        p = QubitParams(omega0=1.0, gamma=0.5, beta0=1.0, dt=dt, Omega=0.2)
        gen = qubit_generator(p)
        fam = GibbsAnsatz.canonical(qubit_energy_observable(p))
        cfg = StrobConfig(lam=1.0, dt=dt, horizon=T)
        disc = run_discrete(gen, fam, [E0], cfg)
        dev1 = np.max(np.abs(disc.params - run_ode(gen, fam, [E0], cfg, order=1).params))
        dev2 = np.max(np.abs(disc.params - run_ode(gen, fam, [E0], cfg, order=2).params))
        ratio = "" if prev is None else f"{prev / dev2:8.3f}"
        print(f"{dt:>8} {dev1:>16.6e} {dev2:>16.6e} {ratio:>8}")
        prev = dev2


if __name__ == "__main__":
    main()
