"""Exact vs first-order extraction of tr(Pi_f A rho) as the coupling grows.

Uses the qubit projector setup (A = |0><0|, post-selection on |+>, qubit
pointer) and prints the CD observable of the real channel at a few strengths.
"""

import numpy as np

from cdweak.cdsolver import cd_observable, extract_numerator
from cdweak.coupling import joint_expectation, qubit_projector_setup, weak_limit_estimate
from cdweak.coupling import weak_value_numerator


def main():
    print(f"{'g':>6} {'|CD - exact|':>14} {'|weak - exact|':>16}")
    for g in (0.05, 0.1, 0.3, 0.6, 1.0, np.pi / 2):
        setup = qubit_projector_setup(g)
        exact = weak_value_numerator(setup.A, setup.rho_in, setup.psi_f)
        q, p = setup.pointer.position, setup.pointer.momentum
        weak = weak_limit_estimate(setup, joint_expectation(setup, q), joint_expectation(setup, p),
                                   q=q, p=p)
        print(f"{g:6.3f} {abs(extract_numerator(setup) - exact):14.2e} {abs(weak - exact):16.2e}")

    np.set_printoptions(precision=4, suppress=True)
    for g in (0.5, np.pi / 2):
        cd = cd_observable(g, "re", qubit_projector_setup(g))
        print(f"\ng = {g:.4f}: eta = {cd.eta:.4f}, prefactor = {cd.prefactor:.4f}")
        print(cd.matrix)


if __name__ == "__main__":
    main()
