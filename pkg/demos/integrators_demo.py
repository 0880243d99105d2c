"""Convergence orders and long-term energy behaviour of the integrators.

Runs each RK and symplectic stepper on the unit harmonic oscillator,
measures its empirical convergence order against the closed-form
solution, and then contrasts the long-horizon energy drift of forward
Euler with the bounded oscillation of symplectic Euler.
"""

import numpy as np

from springsim import integrators


def main():
    f, f_split, exact, state0 = integrators.harmonic_oscillator()

    print("empirical convergence orders (harmonic oscillator, 1 s horizon)")
    for order in (1, 2, 3, 4):
        slope = integrators.measure_convergence_order(
            integrators.make_rk_stepper(order), f, exact, state0)
        print(f"  rk{order}: nominal {order}, measured {slope:.3f}")
    for order in (1, 2, 3):
        slope = integrators.measure_convergence_order(
            integrators.make_symplectic_stepper(order), f_split, exact, state0)
        print(f"  s{order}:  nominal {order}, measured {slope:.3f}")

    print("\nenergy after long rollouts at dt = 0.1 (true energy 0.5)")
    n_steps = 10_000
    rk1 = integrators.make_rk_stepper(1)
    q, p = state0
    for step in range(1, 1001):
        q, p = rk1(0.1, (q, p), f)
        if step in (100, 1000):
            print(f"  rk1 after {step:>5} steps: {0.5 * (q * q + p * p):.4f}")

    q, p = state0
    s1 = integrators.make_symplectic_stepper(1)
    energies = []
    for _ in range(n_steps):
        q, p = s1(0.1, (q, p), f_split)
        energies.append(0.5 * (q * q + p * p))
    energies = np.array(energies)
    print(f"  s1 over {n_steps} steps: energy stays in "
          f"[{energies.min():.4f}, {energies.max():.4f}]")


if __name__ == "__main__":
    main()
