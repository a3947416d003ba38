#!/usr/bin/env python3
"""Leapfrog accuracy on a quadratic potential.

The exact Hamiltonian flow of ``f = lam/2 ||theta - m||^2`` is a rotation in
phase space, so we can measure the integrator's global error directly.
Halving the stepsize at a fixed horizon should cut the error by about 4x
(second-order accuracy), and running forward, flipping the momentum, and
running back should return the start to machine precision.
"""

import numpy as np

from fahmc import QuadraticNode, leapfrog, quadratic_exact_flow


def main() -> None:
    rng = np.random.default_rng(0)
    model = QuadraticNode(mean=np.zeros(3), precision=1.0)
    theta0 = rng.standard_normal(3)
    p0 = rng.standard_normal(3)

    print("global error at horizon K*eta = 1 vs exact flow:")
    errors = []
    for eta in (0.1, 0.05, 0.025, 0.0125):
        K = int(round(1.0 / eta))
        out = leapfrog(model, theta0, p0, eta, K)
        ref, _ = quadratic_exact_flow(theta0, p0, 1.0, np.zeros(3), K * eta)
        err = np.linalg.norm(out.position - ref)
        ratio = "" if not errors else f"  ({errors[-1] / err:4.1f}x smaller)"
        errors.append(err)
        print(f"  eta = {eta:<7} K = {K:<4} error = {err:.3e}{ratio}")
    slope = np.polyfit(np.log([0.1, 0.05, 0.025, 0.0125]), np.log(errors), 1)[0]
    print(f"log-log slope: {slope:.3f} (second order = 2)")

    fwd = leapfrog(model, theta0, p0, eta=0.01, K=100)
    back = leapfrog(model, fwd.position, -fwd.momentum, eta=0.01, K=100)
    round_trip = np.linalg.norm(back.position - theta0)
    print(f"reversibility: forward/flip/backward returns within {round_trip:.2e}")


if __name__ == "__main__":
    main()
