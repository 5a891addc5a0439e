"""Unitary evolution of joint-space state vectors.

The Hamiltonian is split as ``H = H1 (x) I + I (x) H2 + V``: free parts on the
two tensor factors plus an interaction ``V`` on the joint space. States are
plain complex numpy vectors; :class:`~hkcollapse.state.Superposition`
objects are accepted where a component has to be identified by id.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .state import Superposition

HERMITIAN_TOL = 1e-12
EXACT_MAX_DIM = 256


def check_hermitian(h, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    if h.size == 0:
        return True
    return float(np.max(np.abs(h - h.conj().T))) <= tol


def _hermitian_eig(h: np.ndarray):
    w, v = np.linalg.eigh(h)
    return w, v


def unitary_exp(h: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i h tau). Falls back to a general eigendecomposition for non-Hermitian h."""
    h = np.asarray(h, dtype=complex)
    if not h.any():
        return np.eye(h.shape[0], dtype=complex)
    if check_hermitian(h):
        w, v = _hermitian_eig(h)
        return (v * np.exp(-1j * w * tau)) @ v.conj().T
    w, v = np.linalg.eig(h)
    return (v * np.exp(-1j * w * tau)) @ np.linalg.inv(v)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Free parts ``h1``, ``h2`` on the two tensor factors and a joint interaction.

    ``periodic`` records whether the interaction is a reversible, Rabi-type
    exchange (its outcome components are realized) or a non-periodic jump.
    Pass ``validate=False`` only to build deliberately broken fixtures.
    """

    h1: np.ndarray
    h2: np.ndarray
    h_int: np.ndarray | None = None
    periodic: bool = False
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        h1 = np.atleast_2d(np.asarray(self.h1, dtype=complex))
        h2 = np.atleast_2d(np.asarray(self.h2, dtype=complex))
        dim = h1.shape[0] * h2.shape[0]
        h_int = np.zeros((dim, dim), dtype=complex) if self.h_int is None else np.asarray(self.h_int, dtype=complex)
        if h_int.shape != (dim, dim):
            raise ValueError(f"interaction has shape {h_int.shape}, joint space is {dim}")
        if self.validate:
            for name, m in (("h1", h1), ("h2", h2), ("h_int", h_int)):
                if not check_hermitian(m):
                    raise ValueError(f"{name} is not Hermitian")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "h_int", h_int)

    @classmethod
    def zero(cls, d1: int, d2: int) -> "HamiltonianSpec":
        return cls(np.zeros((d1, d1)), np.zeros((d2, d2)))

    @property
    def dims(self) -> tuple[int, int]:
        return self.h1.shape[0], self.h2.shape[0]

    @property
    def dim(self) -> int:
        return self.h1.shape[0] * self.h2.shape[0]

    def free(self) -> np.ndarray:
        d1, d2 = self.dims
        return np.kron(self.h1, np.eye(d2)) + np.kron(np.eye(d1), self.h2)

    def total(self) -> np.ndarray:
        return self.free() + self.h_int

    def with_interaction(self, h_int: np.ndarray | None, periodic: bool | None = None) -> "HamiltonianSpec":
        return HamiltonianSpec(
            self.h1, self.h2, h_int, self.periodic if periodic is None else periodic, self.validate
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.total(), 2))


def _as_matrix(h) -> np.ndarray:
    return h.total() if isinstance(h, HamiltonianSpec) else np.asarray(h, dtype=complex)


class Method(enum.Enum):
    EXACT = "exact"
    RK4 = "rk4"


def rk4_step(state: np.ndarray, h: np.ndarray, dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step of i dpsi/dt = h psi."""
    k1 = -1j * (h @ state)
    k2 = -1j * (h @ (state + 0.5 * dt * k1))
    k3 = -1j * (h @ (state + 0.5 * dt * k2))
    k4 = -1j * (h @ (state + dt * k3))
    return state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step_td(state: np.ndarray, hfun: Callable[[float], np.ndarray], t: float, dt: float) -> np.ndarray:
    """RK4 step for a time-dependent generator ``hfun(t)``."""
    h0, hm, h1 = hfun(t), hfun(t + 0.5 * dt), hfun(t + dt)
    k1 = -1j * (h0 @ state)
    k2 = -1j * (hm @ (state + 0.5 * dt * k1))
    k3 = -1j * (hm @ (state + 0.5 * dt * k2))
    k4 = -1j * (h1 @ (state + dt * k3))
    return state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class Propagator:
    """Fixed-step propagator. The exact method caches exp(-i H dt) per matrix."""

    method: Method = Method.EXACT
    dt: float = 1e-3
    t1: float = 0.0
    t2: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.method = Method(self.method)
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def matrix(self, h) -> np.ndarray:
        h = _as_matrix(h)
        if h.shape[0] > EXACT_MAX_DIM:
            raise ValueError(f"exact exponential limited to dimension <= {EXACT_MAX_DIM}")
        key = h.tobytes()
        u = self._cache.get(key)
        if u is None:
            u = self._cache[key] = unitary_exp(h, self.dt)
        return u

    def step(self, state: np.ndarray, h) -> np.ndarray:
        state = np.asarray(state, dtype=complex)
        hm = _as_matrix(h)
        if hm.shape[0] != state.shape[0]:
            raise ValueError(f"state has dimension {state.shape[0]}, Hamiltonian {hm.shape[0]}")
        if self.method is Method.EXACT:
            return self.matrix(hm) @ state
        return rk4_step(state, hm, self.dt)


def step(state: np.ndarray, h, dt: float, method: Method | str = Method.EXACT) -> np.ndarray:
    """One step of i dpsi/dt = H psi."""
    return Propagator(Method(method), dt).step(state, h)


# Interaction picture ------------------------------------------------------

def free_phase(h: HamiltonianSpec, t1: float, t2: float) -> np.ndarray:
    """exp(+i (H1 t1 + H2 t2)) on the joint space."""
    return np.kron(unitary_exp(h.h1, -t1), unitary_exp(h.h2, -t2))


def to_interaction_picture(state: np.ndarray, h: HamiltonianSpec, t1: float, t2: float) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.shape[0] != h.dim:
        raise ValueError(f"state has dimension {state.shape[0]}, Hamiltonian {h.dim}")
    return free_phase(h, t1, t2) @ state


def from_interaction_picture(state: np.ndarray, h: HamiltonianSpec, t1: float, t2: float) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.shape[0] != h.dim:
        raise ValueError(f"state has dimension {state.shape[0]}, Hamiltonian {h.dim}")
    return free_phase(h, t1, t2).conj().T @ state


def interaction_hamiltonian(h: HamiltonianSpec, t1: float, t2: float) -> np.ndarray:
    """The interaction transformed by the free evolution: F V F^dagger."""
    f = free_phase(h, t1, t2)
    return f @ h.h_int @ f.conj().T


def evolve_interaction_picture(
    psi0: np.ndarray, h: HamiltonianSpec, dt: float, n_steps: int, t0: float = 0.0
) -> np.ndarray:
    """Integrate i dPsi/dt = H_int(t) Psi with RK4, both part-times equal to t.

    Returns the Schroedinger-picture states mapped back, shape (n_steps+1, dim).
    """
    psi = to_interaction_picture(psi0, h, t0, t0)
    out = np.empty((n_steps + 1, h.dim), dtype=complex)
    out[0] = psi0
    hfun = lambda t: interaction_hamiltonian(h, t, t)  # noqa: E731
    for k in range(n_steps):
        t = t0 + k * dt
        psi = rk4_step_td(psi, hfun, t, dt)
        tk = t0 + (k + 1) * dt
        out[k + 1] = from_interaction_picture(psi, h, tk, tk)
    return out


# Trajectories and currents --------------------------------------------------

@dataclass
class Trajectory:
    """States sampled on a uniform grid; ``columns`` maps component ids to flat indices."""

    times: np.ndarray
    states: np.ndarray
    columns: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states must be (n_times, dim) matching times")

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    def populations(self, component_id: str) -> np.ndarray:
        return np.abs(self.states[:, self.columns[component_id]]) ** 2

    def currents(self, component_id: str) -> np.ndarray:
        """Finite-difference current per step, sampled at step midpoints."""
        return np.diff(self.populations(component_id)) / np.diff(self.times)

    def write_csv(self, path: str | Path) -> None:
        """Columns: step, t, component_id, re_amp, im_amp, sq_modulus, current_j.

        ``current_j`` is the forward difference into the next sample (empty on
        the final row).
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "component_id", "re_amp", "im_amp", "sq_modulus", "current_j"])
            n = len(self)
            for cid, col in self.columns.items():
                amps = self.states[:, col]
                pops = np.abs(amps) ** 2
                j = np.diff(pops) / np.diff(self.times) if n > 1 else np.array([])
                for k in range(n):
                    w.writerow([
                        k, f"{self.times[k]:.12g}", cid,
                        f"{amps[k].real:.17g}", f"{amps[k].imag:.17g}", f"{pops[k]:.17g}",
                        f"{j[k]:.17g}" if k < n - 1 else "",
                    ])


def evolve(
    psi0: np.ndarray,
    h,
    dt: float,
    n_steps: int,
    method: Method | str = Method.EXACT,
    t0: float = 0.0,
    columns: dict[str, int] | None = None,
) -> Trajectory:
    prop = Propagator(Method(method), dt)
    hm = _as_matrix(h)
    psi = np.asarray(psi0, dtype=complex)
    states = np.empty((n_steps + 1, psi.shape[0]), dtype=complex)
    states[0] = psi
    for k in range(n_steps):
        psi = prop.step(psi, hm)
        states[k + 1] = psi
    return Trajectory(t0 + dt * np.arange(n_steps + 1), states, dict(columns or {}))


@dataclass(frozen=True)
class CurrentSample:
    component_id: str | int
    j: float
    t: float


def _amp(state, component_id) -> complex:
    if isinstance(state, Superposition):
        return state.amplitude(component_id)
    vec = np.asarray(state)
    if not isinstance(component_id, (int, np.integer)) or not 0 <= component_id < vec.shape[0]:
        raise KeyError(f"unknown component {component_id!r}")
    return complex(vec[component_id])


def probability_current(state_before, state_after, component_id, dt: float, t: float = 0.0) -> CurrentSample:
    """(|c_after|^2 - |c_before|^2) / dt, attributed to the step midpoint t + dt/2."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    before = abs(_amp(state_before, component_id)) ** 2
    after = abs(_amp(state_after, component_id)) ** 2
    j = (after - before) / dt
    if not np.isfinite(j):
        raise ValueError("current is not finite")
    return CurrentSample(component_id, float(j), t + 0.5 * dt)


def conservation_residual(trajectory) -> float:
    """max over steps of |d/dt (total square modulus)| by finite difference."""
    if isinstance(trajectory, Trajectory):
        times, states = trajectory.times, trajectory.states
    else:
        times, states = trajectory
        times, states = np.asarray(times, dtype=float), np.asarray(states, dtype=complex)
    if len(times) < 2:
        raise ValueError("need at least two recorded states")
    norms = np.sum(np.abs(states) ** 2, axis=1)
    return float(np.max(np.abs(np.diff(norms) / np.diff(times))))


def conservation_terms(trajectory: Trajectory, realized: Sequence[int], ready: Sequence[int]) -> dict[str, np.ndarray]:
    """Per-step rates of the realized block, the cross term and the ready block.

    The cross term is 2 Re <P_R psi, P_Y psi> with P_R, P_Y the projectors on
    the two blocks.
    """
    s = trajectory.states
    pr = np.zeros_like(s)
    py = np.zeros_like(s)
    pr[:, list(realized)] = s[:, list(realized)]
    py[:, list(ready)] = s[:, list(ready)]
    r_mod = np.sum(np.abs(pr) ** 2, axis=1)
    y_mod = np.sum(np.abs(py) ** 2, axis=1)
    cross = 2.0 * np.real(np.sum(pr.conj() * py, axis=1))
    dt = np.diff(trajectory.times)
    terms = {
        "realized_rate": np.diff(r_mod) / dt,
        "cross_rate": np.diff(cross) / dt,
        "ready_rate": np.diff(y_mod) / dt,
        "cross_term": cross,
    }
    terms["sum_rate"] = terms["realized_rate"] + terms["cross_rate"] + terms["ready_rate"]
    return terms


def expectation(state: np.ndarray, p: np.ndarray) -> float:
    state = np.asarray(state, dtype=complex)
    return float(np.real(state.conj() @ (np.asarray(p) @ state)))


def expectation_rate(state: np.ndarray, p: np.ndarray, h, dp_dt: np.ndarray | None = None) -> float:
    """i <[H, P]> + <dP/dt> for the state at one instant."""
    p = np.asarray(p, dtype=complex)
    if not check_hermitian(p):
        raise ValueError("observable is not Hermitian")
    hm = _as_matrix(h)
    state = np.asarray(state, dtype=complex)
    if hm.shape != p.shape or state.shape[0] != p.shape[0]:
        raise ValueError("dimension mismatch between state, observable and Hamiltonian")
    comm = hm @ p - p @ hm
    rate = 1j * (state.conj() @ (comm @ state))
    if dp_dt is not None:
        rate += state.conj() @ (np.asarray(dp_dt) @ state)
    return float(np.real(rate))


def instantaneous_current(state: np.ndarray, h, index: int) -> float:
    """Exact d|c_index|^2/dt = 2 Im(conj(c) (H psi)_index)."""
    hm = _as_matrix(h)
    state = np.asarray(state, dtype=complex)
    return float(2.0 * np.imag(state[index].conjugate() * (hm[index] @ state)))
