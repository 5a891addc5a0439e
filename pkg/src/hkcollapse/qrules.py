"""Collapse mechanics: component classification, stochastic trigger, H-K collapse.

* Non-periodic interactions create *ready* components; periodic ones create
  realized components that simply oscillate.
* A ready component is struck with probability ``max(J, 0) * d_omega * dt``
  per step, where ``J`` is the current flowing into it, but only if it is fed
  directly by a realized component.
* A strike realizes the chosen component instantaneously in the region
  forward of the backward cone of its vertex; every other component there is
  dropped. The ordered history of strikes is the :class:`CausalLedger`.

:class:`CollapseEngine` runs single trials of this process on a fixed time
grid using the exact propagator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .dynamics import HamiltonianSpec, Method, check_hermitian, rk4_step
from .minkowski import Event, FrameMismatchError, Worldline, forward_of_backward_cone
from .state import (
    READY,
    REALIZED,
    Component,
    ComponentStatus,
    Factor,
    StateError,
    SubsystemRegistry,
    Superposition,
)

STEP_WARN = 0.1
SEGMENT_CHUNK = 256


class TriggerError(ValueError):
    pass


# Interactions ---------------------------------------------------------------

@dataclass(frozen=True)
class InteractionSpec:
    """A switchable coupling on the joint space.

    ``subsystems`` are the factors the coupling changes; ``vertex_subsystem``
    names the one whose worldline locates a collapse (the detector).
    """

    name: str
    coupling: np.ndarray
    window: tuple[float, float]
    periodic: bool = False
    subsystems: tuple[str, ...] = ()
    vertex_subsystem: str | None = None

    def __post_init__(self):
        c = np.asarray(self.coupling, dtype=complex)
        object.__setattr__(self, "coupling", c)
        object.__setattr__(self, "window", (float(self.window[0]), float(self.window[1])))
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        if not self.window[0] < self.window[1]:
            raise ValueError(f"interaction {self.name!r}: window start must precede its end")
        if not check_hermitian(c):
            raise ValueError(f"interaction {self.name!r}: coupling is not Hermitian")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.window[0] + self.window[1])

    def active_at(self, t: float) -> bool:
        return self.window[0] <= t < self.window[1]

    def with_window(self, window: tuple[float, float]) -> "InteractionSpec":
        return replace(self, window=window)


def transition_coupling(
    registry: SubsystemRegistry,
    transitions: Sequence[tuple[Mapping[str, str], Mapping[str, str], complex]],
) -> np.ndarray:
    """Joint-space Hermitian matrix for local transitions.

    Each ``(from_labels, to_labels, g)`` couples every joint configuration that
    matches ``from_labels`` to the one with ``to_labels`` substituted, acting as
    the identity on the other subsystems.
    """
    dim = registry.dim
    h = np.zeros((dim, dim), dtype=complex)
    for src, dst, g in transitions:
        if set(src) != set(dst):
            raise StateError("a transition must name the same subsystems on both sides")
        pos = {sid: registry.position(sid) for sid in src}
        src_b = {sid: registry.basis_index(sid, lab) for sid, lab in src.items()}
        dst_b = {sid: registry.basis_index(sid, lab) for sid, lab in dst.items()}
        for flat in range(dim):
            basis = list(registry.basis_of(flat))
            if all(basis[pos[s]] == b for s, b in src_b.items()):
                for s, b in dst_b.items():
                    basis[pos[s]] = b
                j = registry.flat_index(basis)
                h[j, flat] += g
                h[flat, j] += np.conj(g)
    return h


def capture_interaction(
    registry: SubsystemRegistry,
    particle: str,
    detector: str,
    g: float,
    window: tuple[float, float],
    periodic: bool = False,
    name: str | None = None,
) -> InteractionSpec:
    """Spin measurement: |s, armed> <-> |s, cap_s> for each spin label s."""
    spins = registry.subsystem(particle).labels
    trans = [({particle: s, detector: "armed"}, {particle: s, detector: f"cap_{s}"}, g) for s in spins]
    return InteractionSpec(
        name or detector,
        transition_coupling(registry, trans),
        window,
        periodic,
        (particle, detector),
        detector,
    )


def classify_interaction(i: InteractionSpec) -> ComponentStatus:
    """Status of components an interaction creates: realized if periodic, else ready."""
    return REALIZED if i.periodic else READY


def _as_list(interactions) -> list[InteractionSpec]:
    if isinstance(interactions, InteractionSpec):
        return [interactions]
    return list(interactions)


def expand_ready_components(
    s: Superposition,
    interactions,
    worldlines: Mapping[str, Worldline] | None = None,
) -> Superposition:
    """Append every basis configuration the interactions can reach, with amplitude 0.

    The search starts from the existing components (realized first), so a new
    component's ``origin`` is a realized component whenever one couples to it
    directly. Anchors come from the worldlines at the creating interaction's
    window midpoint, or are copied from the origin component.
    """
    inters = _as_list(interactions)
    if not inters:
        return s
    reg = s.registry
    dim = reg.dim
    for i in inters:
        if i.coupling.shape != (dim, dim):
            raise StateError(f"interaction {i.name!r} does not act on this registry")
        for sid in i.subsystems:
            reg.position(sid)
    comps = list(s.realized) + list(s.ready)
    tracked = {reg.flat_index(c.basis): c for c in s.components}
    ordered = list(s.components)
    queue = comps[:]
    while queue:
        c = queue.pop(0)
        src = reg.flat_index(c.basis)
        for i in inters:
            col = i.coupling[:, src]
            for dst in np.flatnonzero(col):
                dst = int(dst)
                if dst in tracked:
                    continue
                basis = reg.basis_of(dst)
                if worldlines is not None:
                    anchors = [worldlines[sid].at(i.midpoint, worldlines[sid].label + "'") for sid in reg.ids]
                else:
                    anchors = list(c.anchors)
                factors = tuple(Factor(sid, b, a) for sid, b, a in zip(reg.ids, basis, anchors))
                new = Component(factors, 0.0, classify_interaction(i), c.id, None, reg.label_of(basis))
                tracked[dst] = new
                ordered.append(new)
                queue.append(new)
    if len(ordered) == len(s.components):
        return s
    return Superposition(reg, tuple(ordered))


# Trigger --------------------------------------------------------------------

@dataclass(frozen=True)
class TriggerConfig:
    d_omega: float = 1.0
    dt: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.d_omega > 0:
            raise ValueError("d_omega must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent stream for one trial: PCG64 seeded by SeedSequence(seed, spawn_key=(trial_index,))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(trial_index),))))


def fed_by_realized(s: Superposition, c: Component) -> bool:
    if not c.is_ready or c.origin is None:
        return False
    try:
        return s.get(c.origin).is_realized
    except StateError:
        return False


def hazard_rates(s: Superposition, current_samples, d_omega: float = 1.0) -> list[tuple[str, float]]:
    """Trigger rate per component: max(J, 0) * d_omega for eligible ready components."""
    by_id = {cs.component_id: cs for cs in current_samples}
    known = set(s.ids)
    extra = set(by_id) - known
    if extra:
        raise TriggerError(f"current samples for unknown components: {sorted(map(str, extra))}")
    out = []
    for c in s.components:
        if c.is_ready and c.id not in by_id:
            raise TriggerError(f"no current sample for ready component {c.id}")
        if fed_by_realized(s, c):
            out.append((c.id, max(by_id[c.id].j, 0.0) * d_omega))
        else:
            out.append((c.id, 0.0))
    return out


def sample_trigger(rates: Sequence[tuple[str, float]], dt: float, rng: np.random.Generator) -> str | None:
    """One step of independent Bernoulli hazards; ties are broken uniformly."""
    ids = [cid for cid, _ in rates]
    p = np.array([r for _, r in rates], dtype=float) * dt
    if np.any(p < 0):
        raise TriggerError("hazard rates must be non-negative")
    if np.any(p >= 1):
        raise TriggerError("rate * dt >= 1: step too large for the linear-hazard approximation")
    if p.sum() >= STEP_WARN:
        warnings.warn(f"total strike probability per step {p.sum():.3g} >= {STEP_WARN}", stacklevel=2)
    u = rng.random(len(ids))
    struck = [cid for cid, ui, pi in zip(ids, u, p) if ui < pi]
    if not struck:
        return None
    if len(struck) == 1:
        return struck[0]
    return struck[int(rng.integers(len(struck)))]


# Collapse and ledger -----------------------------------------------------------

@dataclass(frozen=True)
class CollapseRecord:
    vertex: Event
    chosen_component_id: str
    priority_index: int
    trial_time: float
    vertices: tuple[Event, ...] = ()
    captured: tuple[str, ...] = ()

    def __post_init__(self):
        if self.priority_index < 0:
            raise ValueError("priority index must be non-negative")
        if not self.vertices:
            object.__setattr__(self, "vertices", (self.vertex,))

    @property
    def is_dual(self) -> bool:
        return len(self.vertices) > 1

    def affects(self, e: Event) -> bool:
        """True iff ``e`` lies outside the backward cone of every vertex of this record."""
        return all(forward_of_backward_cone(e, v) for v in self.vertices)

    def to_dict(self) -> dict:
        return {
            "vertex": self.vertex.label,
            "coords": list(self.vertex.coords),
            "frame": self.vertex.frame,
            "chosen_component": self.chosen_component_id,
            "priority_index": self.priority_index,
            "trial_time": self.trial_time,
            "vertices": [v.to_dict() for v in self.vertices],
            "captured": list(self.captured),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollapseRecord":
        vertices = tuple(Event.from_dict(v) for v in d.get("vertices", []))
        vertex = Event(d["vertex"], tuple(d["coords"]), d.get("frame", "lab"))
        return cls(vertex, d["chosen_component"], int(d["priority_index"]), float(d["trial_time"]),
                   vertices, tuple(d.get("captured", ())))


@dataclass(frozen=True)
class CausalLedger:
    """Append-only history of collapses in the order they were chosen."""

    records: tuple[CollapseRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for k, r in enumerate(self.records):
            if r.priority_index != k:
                raise ValueError(f"record {k} carries priority index {r.priority_index}")
        frames = {v.frame for r in self.records for v in r.vertices}
        if len(frames) > 1:
            raise FrameMismatchError(f"ledger vertices span frames {sorted(frames)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, k: int) -> CollapseRecord:
        return self.records[k]

    @property
    def next_index(self) -> int:
        return len(self.records)

    @property
    def frame(self) -> str | None:
        return self.records[0].vertex.frame if self.records else None

    def append(self, record: CollapseRecord) -> "CausalLedger":
        return CausalLedger(self.records + (record,))

    def order(self) -> tuple[str, ...]:
        return tuple(r.chosen_component_id for r in self.records)

    def map_vertices(self, fn) -> "CausalLedger":
        """Same ledger with every vertex passed through ``fn`` (e.g. a boost)."""
        recs = []
        for r in self.records:
            vs = tuple(fn(v) for v in r.vertices)
            recs.append(replace(r, vertex=vs[0], vertices=vs))
        return CausalLedger(tuple(recs))

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.records]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "CausalLedger":
        return cls(tuple(CollapseRecord.from_dict(d) for d in items))


def apply_collapse(
    s: Superposition,
    chosen: str,
    vertex: Event,
    ledger: CausalLedger,
    trial_time: float = 0.0,
    vertices: Sequence[Event] = (),
    anchors: Mapping[str, Event] | None = None,
    captured: Sequence[str] = (),
) -> tuple[Superposition, CausalLedger]:
    """Realize ``chosen`` and drop everything else.

    The surviving component gets amplitude exactly 1 (its global phase is
    discarded). ``anchors`` optionally re-pins the factors, which must stay
    mutually spacelike.
    """
    target = s.get(chosen)
    if not target.is_ready:
        raise StateError(f"component {chosen!r} is not ready")
    if target.amplitude == 0:
        raise StateError(f"component {chosen!r} has zero amplitude")
    factors = target.factors
    if anchors is not None:
        factors = tuple(Factor(f.subsystem_id, f.basis_state, anchors.get(f.subsystem_id, f.anchor)) for f in factors)
    survivor = Component(factors, 1.0, REALIZED, None, None, target.name)
    record = CollapseRecord(vertex, chosen, ledger.next_index, float(trial_time), tuple(vertices) or (vertex,),
                            tuple(captured))
    return Superposition(s.registry, (survivor,)), ledger.append(record)


FRONT_LIMITED = "front_limited"
LATEST = "latest"


def version_index(e: Event, ledger: CausalLedger, rule: str = FRONT_LIMITED) -> int | None:
    """Index of the collapse whose state governs ``e``; None for the pre-collapse region.

    ``front_limited``: a later collapse never reaches into the backward cone
    of an earlier one, so the version is the longest prefix of the ledger
    whose records all affect ``e``. ``latest``: the highest-priority record
    that affects ``e``, ignoring earlier cones (diagnostic alternative).
    """
    if ledger.records and e.frame != ledger.frame:
        raise FrameMismatchError(f"event frame {e.frame!r} differs from ledger frame {ledger.frame!r}")
    if rule == FRONT_LIMITED:
        k = None
        for r in ledger.records:
            if not r.affects(e):
                break
            k = r.priority_index
        return k
    if rule == LATEST:
        k = None
        for r in ledger.records:
            if r.affects(e):
                k = r.priority_index
        return k
    raise ValueError(f"unknown rule {rule!r}")


def affecting_set(e: Event, ledger: CausalLedger) -> tuple[int, ...]:
    """Every record whose affected region contains ``e``."""
    return tuple(r.priority_index for r in ledger.records if r.affects(e))


def query_state_at(
    e: Event,
    initial: Superposition,
    ledger: CausalLedger,
    records_states: Sequence[Superposition],
    rule: str = FRONT_LIMITED,
) -> Superposition:
    if len(records_states) != len(ledger):
        raise ValueError("need one post-collapse state per ledger record")
    k = version_index(e, ledger, rule)
    return initial if k is None else records_states[k]


# Trial engine -------------------------------------------------------------------

@dataclass
class TrialResult:
    ledger: CausalLedger
    pre_collapse: Superposition | None
    states: list[Superposition]
    final_state: Superposition
    trace: list[tuple] | None = None


@dataclass
class _Segment:
    ids: tuple[str, ...]
    amps: np.ndarray
    probs: np.ndarray
    eligible: tuple[int, ...]
    eig: tuple
    coeff: np.ndarray


def _vertex_label(priority: int, part: int | None = None) -> str:
    base = chr(ord("A") + priority) if priority < 26 else f"V{priority}"
    return base if part is None else f"{base}{part}"


class CollapseEngine:
    """Runs trials of evolution + stochastic collapse on the grid t_start + k*dt.

    Interactions are active on steps whose midpoint lies in their window. An
    interaction is retired once a collapse realizes a change in one of its
    subsystems: the capture it describes has happened and is not undone.
    """

    def __init__(
        self,
        initial: Superposition,
        free: HamiltonianSpec,
        interactions: Sequence[InteractionSpec],
        worldlines: Mapping[str, Worldline],
        trigger: TriggerConfig,
        t_start: float = 0.0,
        t_end: float | None = None,
        method: Method | str = Method.EXACT,
        leak_tol: float = 1e-9,
    ):
        self.initial = initial
        self.registry = initial.registry
        self.free = free
        self.interactions = list(interactions)
        self.worldlines = dict(worldlines)
        self.trigger = trigger
        self.method = Method(method)
        self.leak_tol = leak_tol
        if free.dim != self.registry.dim:
            raise ValueError("free Hamiltonian does not match the registry dimension")
        missing = set(self.registry.ids) - set(self.worldlines)
        if missing:
            raise ValueError(f"no worldline for subsystems {sorted(missing)}")
        self.t_start = float(t_start)
        if t_end is None:
            t_end = max((i.window[1] for i in self.interactions), default=self.t_start + trigger.dt)
        self.n_steps = max(1, int(math.ceil((t_end - self.t_start) / trigger.dt - 1e-9)))
        self.t_end = self.t_start + self.n_steps * trigger.dt
        mids = self.t_start + (np.arange(self.n_steps) + 0.5) * trigger.dt
        self.active = np.array([[i.active_at(t) for i in self.interactions] for t in mids], dtype=bool).reshape(
            self.n_steps, len(self.interactions)
        )
        self._raw = [frozenset(int(i) for i in np.flatnonzero(row)) for row in self.active]
        nxt = [self.n_steps] * self.n_steps
        for k in range(self.n_steps - 2, -1, -1):
            nxt[k] = k + 1 if self._raw[k + 1] != self._raw[k] else nxt[k + 1]
        self._next_change = nxt
        self._h0 = free.free()
        self._eig_cache: dict[frozenset, tuple] = {}
        self._seg_cache: dict[tuple, _Segment] = {}
        self._exp_cache: dict[tuple, tuple[Component, ...]] = {}
        self._warned = False

    # -- helpers
    def time(self, k: int) -> float:
        return self.t_start + k * self.trigger.dt

    def _hamiltonian(self, active: frozenset) -> np.ndarray:
        h = self._h0.copy()
        for k in sorted(active):
            h = h + self.interactions[k].coupling
        return h

    def _eig(self, active: frozenset):
        e = self._eig_cache.get(active)
        if e is None:
            h = self._hamiltonian(active)
            if not h.any():
                e = None, None, h
            else:
                w, v = np.linalg.eigh(h)
                e = w, v, h
            self._eig_cache[active] = e
        return e

    def _expand(self, s: Superposition, active: frozenset) -> Superposition:
        if not active:
            return s
        key = (s.ids, active)
        new = self._exp_cache.get(key)
        if new is None:
            grown = expand_ready_components(s, [self.interactions[i] for i in sorted(active)], self.worldlines)
            new = grown.components[len(s.components):]
            self._exp_cache[key] = new
        return s if not new else Superposition._trusted(self.registry, s.components + new)

    def _run_end(self, k: int, spent: frozenset) -> tuple[int, frozenset]:
        cur = self._raw[k] - spent
        end = self._next_change[k]
        while end < self.n_steps and self._raw[end] - spent == cur:
            end = self._next_change[end]
        return end, cur

    def _evolve_rows(self, psi0: np.ndarray, active: frozenset, n: int, cols: np.ndarray):
        w, v, h = self._eig(active)
        if w is None:
            amps = np.repeat(psi0[cols][None, :], n + 1, axis=0)
            return amps, (None, None, h), psi0.copy()
        if self.method is Method.EXACT:
            coeff = v.conj().T @ psi0
            phases = np.exp(-1j * np.outer(np.arange(n + 1) * self.trigger.dt, w))
            amps = (phases * coeff) @ v[cols, :].T
            return amps, (w, v, h), coeff
        states = np.empty((n + 1, psi0.shape[0]), dtype=complex)
        states[0] = psi0
        for j in range(n):
            states[j + 1] = rk4_step(states[j], h, self.trigger.dt)
        return states[:, cols], (None, states, h), None

    def _state_at(self, seg: _Segment, psi0: np.ndarray, j: int) -> np.ndarray:
        w, v, h = seg.eig
        if w is None and v is None:
            return psi0.copy()
        if w is None:
            return v[j].copy()
        return v @ (np.exp(-1j * w * j * self.trigger.dt) * seg.coeff)

    def _segment(self, s: Superposition, psi0: np.ndarray, active: frozenset, n: int) -> _Segment:
        key = (psi0.tobytes(), s.ids, active, self.method)
        seg = self._seg_cache.get(key)
        if seg is not None and seg.amps.shape[0] >= n + 1:
            return seg
        cols = s.flat_indices()
        amps, eig, coeff = self._evolve_rows(psi0, active, n, cols)
        norm0 = float(np.vdot(psi0, psi0).real)
        leak = abs(norm0 - float(np.sum(np.abs(amps[-1]) ** 2)))
        if leak > self.leak_tol:
            raise StateError(f"weight {leak:.3g} left the tracked components; expansion is incomplete")
        eligible = tuple(i for i, c in enumerate(s.components) if fed_by_realized(s, c))
        if eligible:
            pops = np.abs(amps[:, list(eligible)]) ** 2
            probs = np.maximum(np.diff(pops, axis=0), 0.0) * self.trigger.d_omega
            if probs.size and probs.max() >= 1.0:
                raise TriggerError("rate * dt >= 1: step too large for the linear-hazard approximation")
            if probs.size and not self._warned and probs.sum(axis=1).max() >= STEP_WARN:
                self._warned = True
                warnings.warn("total strike probability per step exceeds 0.1; reduce dt or d_omega", stacklevel=3)
        else:
            probs = np.zeros((n, 0))
        seg = _Segment(s.ids, amps, probs, eligible, eig, coeff)
        if len(self._seg_cache) > 4096:
            self._seg_cache.clear()
        self._seg_cache[key] = seg
        return seg

    def _resolve(self, s: Superposition, struck: list[int], rng: np.random.Generator) -> tuple[Component, Component]:
        """Pick the realized component for a step with strikes. Returns (chosen, root)."""
        comps = s.components
        hits = [comps[i] for i in struck]
        if len(hits) == 1:
            return hits[0], s.get(hits[0].origin)
        candidates = []
        by_origin: dict[str, list[Component]] = {}
        for c in hits:
            by_origin.setdefault(c.origin, []).append(c)
        for origin_id, group in by_origin.items():
            root = s.get(origin_id)
            for size in range(len(group), 1, -1):
                for combo in combinations(group, size):
                    merged = list(root.basis)
                    touched: set[int] = set()
                    ok = True
                    for c in combo:
                        diff = {p for p, (a, b) in enumerate(zip(c.basis, root.basis)) if a != b}
                        if diff & touched:
                            ok = False
                            break
                        touched |= diff
                        for p in diff:
                            merged[p] = c.basis[p]
                    if not ok:
                        continue
                    target = s.find_basis(merged)
                    if target is not None and target.is_ready and target.amplitude != 0:
                        candidates.append((target, root))
                if candidates:
                    break
        if candidates:
            pick = 0 if len(candidates) == 1 else int(rng.integers(len(candidates)))
            return candidates[pick]
        pick = int(rng.integers(len(hits)))
        return hits[pick], s.get(hits[pick].origin)

    def _collapse(self, s, chosen: Component, root: Component, k: int, ledger: CausalLedger):
        reg = self.registry
        t = self.time(k)
        changed = [reg.ids[p] for p, (a, b) in enumerate(zip(chosen.basis, root.basis)) if a != b]
        inters = [i for i, it in enumerate(self.interactions) if set(it.subsystems) & set(changed)]
        vsubs = []
        for i in inters:
            vs = self.interactions[i].vertex_subsystem
            if vs is not None and vs not in vsubs:
                vsubs.append(vs)
        vsubs.sort(key=reg.position)
        if not vsubs:
            vsubs = [changed[0]]
        prio = ledger.next_index
        single = len(vsubs) == 1
        vertices = [self.worldlines[sid].at(t, _vertex_label(prio, None if single else n + 1))
                    for n, sid in enumerate(vsubs)]
        anchors = {sid: self.worldlines[sid].at(t, self.worldlines[sid].label + "*") for sid in reg.ids}
        anchors.update(dict(zip(vsubs, vertices)))
        new_s, ledger = apply_collapse(s, chosen.id, vertices[0], ledger, t, vertices, anchors, tuple(vsubs))
        return new_s, ledger, frozenset(inters)

    # -- public
    def run(self, rng: np.random.Generator | None, record: bool = False, trigger: bool = True,
            max_collapses: int | None = None) -> TrialResult:
        """One trial. With ``trigger=False`` the evolution is purely unitary.

        ``max_collapses`` ends the trial right after that many collapses.
        """
        s = self.initial
        psi = s.to_vector()
        ledger = CausalLedger()
        spent: frozenset = frozenset()
        states: list[Superposition] = []
        pre = None
        trace: list[tuple] | None = [] if record else None
        k = 0
        while k < self.n_steps:
            end, active = self._run_end(k, spent)
            s = self._expand(s, active)
            n = end - k
            seg = self._segment(s, psi, active, n)
            hit_row = None
            if trigger and seg.eligible and rng is not None and seg.probs[:n].any():
                p = seg.probs[:n]
                for start in range(0, n, SEGMENT_CHUNK):
                    block = p[start:start + SEGMENT_CHUNK]
                    if not block.any():
                        continue
                    u = rng.random(block.shape)
                    hits = u < block
                    rows = np.flatnonzero(hits.any(axis=1))
                    if rows.size:
                        hit_row = start + int(rows[0])
                        struck = [seg.eligible[c] for c in np.flatnonzero(hits[hit_row - start])]
                        break
            last = n if hit_row is None else hit_row + 1
            if trace is not None:
                pops = np.abs(seg.amps[: last + 1]) ** 2
                for j in range(last + (1 if k + last == self.n_steps else 0)):
                    for ci, cid in enumerate(s.ids):
                        a = seg.amps[j, ci]
                        cur = (pops[j + 1, ci] - pops[j, ci]) / self.trigger.dt if j < last else float("nan")
                        trace.append((k + j, self.time(k + j), cid, a.real, a.imag, pops[j, ci], cur))
            psi = self._state_at(seg, psi, last)
            s = s.with_vector(psi, leak_tol=max(self.leak_tol, 1e-12))
            k += last
            if hit_row is not None:
                chosen, root = self._resolve(s, struck, rng)
                if pre is None:
                    pre = s
                s, ledger, retired = self._collapse(s, chosen, root, k, ledger)
                spent = spent | retired
                states.append(s)
                psi = s.to_vector()
                if max_collapses is not None and len(ledger) >= max_collapses:
                    break
        return TrialResult(ledger, pre, states, s, trace)

    def deterministic_trajectory(self):
        """Trigger-free evolution over the full grid with every component tracked."""
        from .dynamics import Trajectory

        s = self.initial
        psi = s.to_vector()
        rows = [psi.copy()]
        k = 0
        while k < self.n_steps:
            end, active = self._run_end(k, frozenset())
            s = self._expand(s, active)
            n = end - k
            w, v, h = self._eig(active)
            coeff = None if w is None else v.conj().T @ psi
            for j in range(1, n + 1):
                if w is None:
                    rows.append(psi.copy())
                elif self.method is Method.EXACT:
                    rows.append(v @ (np.exp(-1j * w * j * self.trigger.dt) * coeff))
                else:
                    rows.append(rk4_step(rows[-1], h, self.trigger.dt))
            psi = rows[-1]
            k = end
        s = s.with_vector(psi, leak_tol=max(self.leak_tol, 1e-12))
        cols = {c.id: self.registry.flat_index(c.basis) for c in s.components}
        times = self.t_start + self.trigger.dt * np.arange(self.n_steps + 1)
        return Trajectory(times, np.array(rows), cols), s
