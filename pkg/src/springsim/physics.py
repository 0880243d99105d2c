"""Ground-truth particle-spring system.

All particles interact pairwise through zero-rest-length springs with
F_ij = -k_ij (q_i - q_j) and k_ij = k_i * k_j.  The total energy is
kinetic plus the pairwise quadratic potential, with each unordered pair
counted once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENERATION_STEP = 0.005  # reference simulator step, seconds


@dataclass(frozen=True)
class SystemConfig:
    masses: np.ndarray        # (n,)
    spring_consts: np.ndarray  # (n,)

    def __post_init__(self):
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=np.float64))
        object.__setattr__(self, "spring_consts",
                           np.asarray(self.spring_consts, dtype=np.float64))
        if self.n < 2:
            raise ValueError("need at least 2 particles")
        if not (np.all(self.masses > 0) and np.all(self.spring_consts > 0)):
            raise ValueError("masses and spring constants must be positive")

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    def pair_matrix(self) -> np.ndarray:
        """k_ij = k_i * k_j with zero diagonal."""
        k = self.spring_consts
        mat = k[:, None] * k[None, :]
        np.fill_diagonal(mat, 0.0)
        return mat


@dataclass
class State:
    q: np.ndarray  # (n, 2) positions
    p: np.ndarray  # (n, 2) momenta

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape or self.q.ndim != 2 or self.q.shape[1] != 2:
            raise ValueError(f"bad state shapes {self.q.shape}, {self.p.shape}")

    def copy(self) -> "State":
        return State(self.q.copy(), self.p.copy())


@dataclass
class Trajectory:
    dt: float
    states: list[State]
    config: SystemConfig

    def __post_init__(self):
        if self.dt < 0 or not self.states:
            raise ValueError("trajectory needs dt >= 0 and at least one state")

    def positions(self) -> np.ndarray:
        return np.stack([s.q for s in self.states])

    def momenta(self) -> np.ndarray:
        return np.stack([s.p for s in self.states])

    def __len__(self) -> int:
        return len(self.states)


def pair_spring_constant(k_i: float, k_j: float) -> float:
    if k_i <= 0 or k_j <= 0:
        raise ValueError("spring constants must be positive")
    return k_i * k_j


def hooke_force(config: SystemConfig, q: np.ndarray) -> np.ndarray:
    """Net spring force on each particle; total over particles is zero."""
    kmat = config.pair_matrix()
    row_sums = kmat.sum(axis=1)
    return kmat @ q - row_sums[:, None] * q


def true_hamiltonian(config: SystemConfig, state: State) -> float:
    kinetic = 0.5 * np.sum(state.p ** 2 / config.masses[:, None])
    diff = state.q[:, None, :] - state.q[None, :, :]
    sq = np.sum(diff ** 2, axis=-1)
    potential = 0.25 * np.sum(config.pair_matrix() * sq)  # pairs double counted
    return float(kinetic + potential)


def true_derivatives(config: SystemConfig, state: State):
    """Hamilton's equations for the spring system: (dq/dt, dp/dt)."""
    q_dot = state.p / config.masses[:, None]
    p_dot = hooke_force(config, state.q)
    return q_dot, p_dot


def sample_system(rng: np.random.Generator, n: int):
    """Random system and initial state, all fields uniform in their ranges."""
    if n < 2:
        raise ValueError("need at least 2 particles")
    masses = rng.uniform(0.1, 1.0, size=n)
    spring_consts = rng.uniform(0.5, 1.0, size=n)
    q0 = rng.uniform(-1.0, 1.0, size=(n, 2))
    v0 = rng.uniform(-3.0, 3.0, size=(n, 2))
    p0 = masses[:, None] * v0
    return SystemConfig(masses, spring_consts), State(q0, p0)


def _rk4_step(config: SystemConfig, q, p, dt):
    def f(q_, p_):
        return p_ / config.masses[:, None], hooke_force(config, q_)

    k1q, k1p = f(q, p)
    k2q, k2p = f(q + 0.5 * dt * k1q, p + 0.5 * dt * k1p)
    k3q, k3p = f(q + 0.5 * dt * k2q, p + 0.5 * dt * k2p)
    k4q, k4p = f(q + dt * k3q, p + dt * k3p)
    q_next = q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
    p_next = p + (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    return q_next, p_next


def simulate_reference(config: SystemConfig, state0: State, duration: float,
                       generation_step: float = GENERATION_STEP) -> Trajectory:
    """Fixed-step RK4 at the generation step; the source of all data."""
    n_steps = int(round(duration / generation_step))
    if abs(n_steps * generation_step - duration) > 1e-9:
        raise ValueError("duration must be a multiple of the generation step")
    q, p = state0.q, state0.p
    states = [State(q.copy(), p.copy())]
    for _ in range(n_steps):
        q, p = _rk4_step(config, q, p, generation_step)
        states.append(State(q, p))
    return Trajectory(generation_step, states, config)


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    return Trajectory(traj.dt * stride, traj.states[::stride], traj.config)
