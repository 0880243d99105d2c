"""Differentiable one-step integrators, generic over the derivative function.

All steppers work on a ``(q, p)`` pair whose elements only need ``+`` and
scalar ``*``, so the same code integrates plain numpy arrays and recorded
autodiff Values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ButcherTableau:
    a: tuple          # stage coefficients, explicit lower-triangular
    b: tuple          # weights, sum to 1
    c: tuple          # nodes
    order: int

    def __post_init__(self):
        assert abs(sum(self.b) - 1.0) < 1e-12


@dataclass(frozen=True)
class SymplecticCoefficients:
    c: tuple          # position stage factors, sum to 1
    d: tuple          # momentum stage factors, sum to 1
    order: int

    def __post_init__(self):
        assert abs(sum(self.c) - 1.0) < 1e-12
        assert abs(sum(self.d) - 1.0) < 1e-12


RK_TABLEAUS = {
    1: ButcherTableau(a=((),), b=(1.0,), c=(0.0,), order=1),
    # explicit midpoint
    2: ButcherTableau(a=((), (0.5,)), b=(0.0, 1.0), c=(0.0, 0.5), order=2),
    # Kutta's third-order rule
    3: ButcherTableau(a=((), (0.5,), (-1.0, 2.0)),
                      b=(1 / 6, 2 / 3, 1 / 6), c=(0.0, 0.5, 1.0), order=3),
    # classical RK4
    4: ButcherTableau(a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
                      b=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
                      c=(0.0, 0.5, 0.5, 1.0), order=4),
}

SYMPLECTIC_COEFFS = {
    1: SymplecticCoefficients(c=(1.0,), d=(1.0,), order=1),
    # velocity Verlet (kick-drift-kick)
    2: SymplecticCoefficients(c=(1.0, 0.0), d=(0.5, 0.5), order=2),
    # Ruth's third-order coefficients
    3: SymplecticCoefficients(c=(2 / 3, -2 / 3, 1.0),
                              d=(7 / 24, 3 / 4, -1 / 24), order=3),
}


def rk_step(tableau: ButcherTableau, dt, state, f):
    """One explicit Runge-Kutta step; exactly len(b) evaluations of f."""
    q, p = state
    kq, kp = [], []
    for i in range(len(tableau.b)):
        qi, pi = q, p
        for j, a_ij in enumerate(tableau.a[i]):
            if a_ij != 0.0:
                qi = qi + kq[j] * (a_ij * dt)
                pi = pi + kp[j] * (a_ij * dt)
        dq, dp = f(qi, pi)
        kq.append(dq)
        kp.append(dp)
    for b_i, dq, dp in zip(tableau.b, kq, kp):
        if b_i != 0.0:
            q = q + dq * (b_i * dt)
            p = p + dp * (b_i * dt)
    return q, p


def symplectic_step(coeffs: SymplecticCoefficients, dt, state, f_split):
    """Alternating momentum/position update; 2n evaluations for n stages.

    Per stage i: p += d_i*dt*f_p(q, p), then q += c_i*dt*f_q(q, p_new).
    """
    f_q, f_p = f_split
    q, p = state
    for c_i, d_i in zip(coeffs.c, coeffs.d):
        p = p + f_p(q, p) * (d_i * dt)
        q = q + f_q(q, p) * (c_i * dt)
    return q, p


def make_rk_stepper(order: int):
    tableau = RK_TABLEAUS[order]

    def step(dt, state, f):
        return rk_step(tableau, dt, state, f)

    return step


def make_symplectic_stepper(order: int):
    coeffs = SYMPLECTIC_COEFFS[order]

    def step(dt, state, f_split):
        return symplectic_step(coeffs, dt, state, f_split)

    return step


def rollout(stepper, dt, state0, f, n_steps: int):
    """n_steps repeated one-step applications; returns n_steps + 1 states."""
    states = [state0]
    state = state0
    for _ in range(n_steps):
        state = stepper(dt, state, f)
        states.append(state)
    return states


def measure_convergence_order(stepper, f, exact, state0, horizon: float = 1.0,
                              dts=(0.2, 0.1, 0.05, 0.025)) -> float:
    """Slope of log final-state error vs log dt against a closed-form solution.

    `stepper(dt, state, f)` advances one step; `exact(t)` returns the true
    (q, p) at time t.  Each dt must divide the horizon.
    """
    errors = []
    for dt in dts:
        n = int(round(horizon / dt))
        state = state0
        for _ in range(n):
            state = stepper(dt, state, f)
        q_true, p_true = exact(n * dt)
        err = np.sqrt(np.mean((np.asarray(state[0]) - q_true) ** 2)
                      + np.mean((np.asarray(state[1]) - p_true) ** 2))
        if err < 1e-14:
            raise ValueError("error below float noise; increase the horizon")
        errors.append(err)
    slope, _ = np.polyfit(np.log(np.asarray(dts)), np.log(np.asarray(errors)), 1)
    return float(slope)


def harmonic_oscillator(q0: float = 1.0, p0: float = 0.0):
    """Unit-mass, unit-stiffness oscillator with its closed-form solution.

    Returns (f, f_split, exact, state0) for convergence-order measurements.
    """

    def f(q, p):
        return p, -q

    def f_q(q, p):
        return p

    def f_p(q, p):
        return -q

    def exact(t):
        q = q0 * np.cos(t) + p0 * np.sin(t)
        p = p0 * np.cos(t) - q0 * np.sin(t)
        return q, p

    return f, (f_q, f_p), exact, (np.float64(q0), np.float64(p0))
