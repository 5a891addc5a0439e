"""Event-anchored superpositions.

A :class:`Component` is one product of subsystem basis states, each factor
pinned to its own spacetime event, with a complex amplitude and a status
(realized or ready). A :class:`Superposition` is the ordered collection of
components over a shared :class:`SubsystemRegistry`; its joint-space vector
is what the dynamics evolves.

Because every subsystem carries an orthonormal basis, two components with
different basis tuples are orthogonal and their cross term vanishes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .minkowski import Event, is_mutually_spacelike

INV_SQRT2 = 1.0 / math.sqrt(2.0)


class ComponentStatus(enum.Enum):
    REALIZED = "realized"
    READY = "ready"


REALIZED = ComponentStatus.REALIZED
READY = ComponentStatus.READY


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class Subsystem:
    id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise StateError(f"subsystem {self.id!r} needs dimension >= 2")
        if len(set(self.labels)) != len(self.labels):
            raise StateError(f"subsystem {self.id!r} has repeated basis labels")

    @property
    def dim(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SubsystemRegistry:
    """Ordered subsystems; the joint basis is their row-major tensor product."""

    subsystems: tuple[Subsystem, ...]

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        ids = [s.id for s in subs]
        if not subs:
            raise StateError("registry is empty")
        if len(set(ids)) != len(ids):
            raise StateError(f"duplicate subsystem ids in {ids}")

    @classmethod
    def of(cls, **labels: Sequence[str]) -> "SubsystemRegistry":
        return cls(tuple(Subsystem(k, tuple(v)) for k, v in labels.items()))

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.subsystems)

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @cached_property
    def dim(self) -> int:
        return math.prod(self.dims)

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        out, acc = [], 1
        for d in reversed(self.dims):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    def position(self, subsystem_id: str) -> int:
        try:
            return self.ids.index(subsystem_id)
        except ValueError:
            raise StateError(f"unknown subsystem {subsystem_id!r}") from None

    def subsystem(self, subsystem_id: str) -> Subsystem:
        return self.subsystems[self.position(subsystem_id)]

    def basis_index(self, subsystem_id: str, label: str) -> int:
        sub = self.subsystem(subsystem_id)
        try:
            return sub.labels.index(label)
        except ValueError:
            raise StateError(f"{label!r} is not a basis label of {subsystem_id!r}") from None

    def flat_index(self, basis: Sequence[int]) -> int:
        basis = tuple(basis)
        if len(basis) != len(self.dims) or not all(0 <= b < d for b, d in zip(basis, self.dims)):
            raise StateError(f"basis tuple {basis} does not fit dimensions {self.dims}")
        return sum(b * k for b, k in zip(basis, self._strides))

    def basis_of(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.dims))

    def tuple_from_labels(self, **labels: str) -> tuple[int, ...]:
        return tuple(self.basis_index(sid, labels[sid]) for sid in self.ids)

    def label_of(self, basis: Sequence[int]) -> str:
        return ":".join(s.labels[b] for s, b in zip(self.subsystems, basis))


@dataclass(frozen=True)
class Factor:
    subsystem_id: str
    basis_state: int
    anchor: Event


@dataclass(frozen=True)
class Component:
    """One product term. ``block`` groups terms that form one entangled
    component (the singlet's two tuples); it defaults to the component id."""

    factors: tuple[Factor, ...]
    amplitude: complex
    status: ComponentStatus
    origin: str | None = None
    block: str | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        if not isinstance(self.status, ComponentStatus):
            raise StateError(f"status must be a ComponentStatus, got {self.status!r}")
        if not math.isfinite(abs(self.amplitude)):
            raise StateError("amplitude must be finite")
        anchors = [f.anchor for f in self.factors]
        if len(anchors) >= 2 and not is_mutually_spacelike(anchors):
            raise StateError(
                "factor anchors must be mutually spacelike: "
                + ", ".join(f"{a.label}{a.coords[:2]}" for a in anchors)
            )

    @cached_property
    def basis(self) -> tuple[int, ...]:
        return tuple(f.basis_state for f in self.factors)

    @cached_property
    def id(self) -> str:
        return self.name or "/".join(str(b) for b in self.basis)

    @property
    def group(self) -> str:
        return self.block if self.block is not None else self.id

    @property
    def anchors(self) -> tuple[Event, ...]:
        return tuple(f.anchor for f in self.factors)

    @property
    def is_realized(self) -> bool:
        return self.status is REALIZED

    @property
    def is_ready(self) -> bool:
        return self.status is READY

    def factor(self, subsystem_id: str) -> Factor:
        for f in self.factors:
            if f.subsystem_id == subsystem_id:
                return f
        raise StateError(f"component {self.id} has no factor for {subsystem_id!r}")

    def with_amplitude(self, amplitude: complex) -> "Component":
        # anchors are unchanged, so skip re-validation
        c = object.__new__(Component)
        c.__dict__.update(self.__dict__)
        c.__dict__["amplitude"] = complex(amplitude)
        return c


def make_component(
    registry: SubsystemRegistry,
    labels: dict[str, str],
    anchors: dict[str, Event],
    amplitude: complex,
    status: ComponentStatus,
    origin: str | None = None,
    block: str | None = None,
) -> Component:
    """Build a component from basis labels; its id is the label string."""
    basis = registry.tuple_from_labels(**labels)
    factors = tuple(Factor(sid, b, anchors[sid]) for sid, b in zip(registry.ids, basis))
    return Component(factors, amplitude, status, origin, block, registry.label_of(basis))


@dataclass(frozen=True)
class Superposition:
    registry: SubsystemRegistry
    components: tuple[Component, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        for c in comps:
            if tuple(f.subsystem_id for f in c.factors) != self.registry.ids:
                raise StateError(f"component {c.id} does not match the registry layout")
            for f, d in zip(c.factors, self.registry.dims):
                if not 0 <= f.basis_state < d:
                    raise StateError(f"basis state {f.basis_state} out of range for {f.subsystem_id}")
        if not any(c.is_realized for c in comps):
            raise StateError("a superposition needs at least one realized component")
        bases = [c.basis for c in comps]
        if len(set(bases)) != len(bases):
            raise StateError("components must have distinct basis tuples")
        ids = [c.id for c in comps]
        if len(set(ids)) != len(ids):
            raise StateError("components must have distinct ids")

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.components)

    def get(self, component_id: str) -> Component:
        for c in self.components:
            if c.id == component_id:
                return c
        raise StateError(f"unknown component {component_id!r}")

    def index_of(self, component_id: str) -> int:
        try:
            return self.ids.index(component_id)
        except ValueError:
            raise StateError(f"unknown component {component_id!r}") from None

    def find_basis(self, basis: Sequence[int]) -> Component | None:
        basis = tuple(basis)
        for c in self.components:
            if c.basis == basis:
                return c
        return None

    def amplitude(self, component_id: str) -> complex:
        return self.get(component_id).amplitude

    @property
    def realized(self) -> tuple[Component, ...]:
        return tuple(c for c in self.components if c.is_realized)

    @property
    def ready(self) -> tuple[Component, ...]:
        return tuple(c for c in self.components if c.is_ready)

    def blocks(self, status: ComponentStatus | None = None) -> dict[str, tuple[Component, ...]]:
        """Components grouped into entangled blocks, in first-appearance order."""
        out: dict[str, list[Component]] = {}
        for c in self.components:
            if status is None or c.status is status:
                out.setdefault(c.group, []).append(c)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def _flat(self) -> np.ndarray:
        return np.array([self.registry.flat_index(c.basis) for c in self.components], dtype=int)

    def flat_indices(self) -> np.ndarray:
        return self._flat.copy()

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(self.registry.dim, dtype=complex)
        for c in self.components:
            vec[self.registry.flat_index(c.basis)] = c.amplitude
        return vec

    def with_vector(self, vec: np.ndarray, leak_tol: float = 1e-12) -> "Superposition":
        """Copy amplitudes from a joint vector; weight outside tracked tuples is an error."""
        vec = np.asarray(vec)
        idx = self._flat
        tracked = vec[idx]
        leak = float(np.vdot(vec, vec).real - np.vdot(tracked, tracked).real)
        if leak > leak_tol:
            raise StateError(f"joint vector has weight {leak:.3g} outside the tracked components")
        comps = tuple(c.with_amplitude(a) for c, a in zip(self.components, tracked.tolist()))
        out = Superposition._trusted(self.registry, comps)
        out.__dict__["_flat"] = idx
        out.__dict__["ids"] = self.ids
        return out

    @classmethod
    def _trusted(cls, registry: SubsystemRegistry, components: tuple[Component, ...]) -> "Superposition":
        # for callers that only change amplitudes or append already-validated components
        s = object.__new__(cls)
        object.__setattr__(s, "registry", registry)
        object.__setattr__(s, "components", components)
        return s

    def with_components(self, components: Iterable[Component]) -> "Superposition":
        return Superposition(self.registry, tuple(components))

    def to_dict(self) -> dict:
        reg = [{"id": s.id, "labels": list(s.labels)} for s in self.registry.subsystems]
        comps = []
        for c in self.components:
            comps.append(
                {
                    "id": c.id,
                    "status": c.status.value,
                    "amplitude": [c.amplitude.real, c.amplitude.imag],
                    "origin": c.origin,
                    "block": c.group,
                    "factors": [
                        {
                            "subsystem": f.subsystem_id,
                            "basis": f.basis_state,
                            "label": self.registry.subsystem(f.subsystem_id).labels[f.basis_state],
                            "anchor": f.anchor.to_dict(),
                        }
                        for f in c.factors
                    ],
                }
            )
        return {"registry": reg, "components": comps}

    @classmethod
    def from_dict(cls, d: dict) -> "Superposition":
        registry = SubsystemRegistry(tuple(Subsystem(s["id"], tuple(s["labels"])) for s in d["registry"]))
        comps = []
        for c in d["components"]:
            factors = tuple(
                Factor(f["subsystem"], int(f["basis"]), Event.from_dict(f["anchor"])) for f in c["factors"]
            )
            re, im = c["amplitude"]
            block = c.get("block")
            comps.append(
                Component(
                    factors,
                    complex(re, im),
                    ComponentStatus(c["status"]),
                    c.get("origin"),
                    None if block == c["id"] else block,
                    c["id"],
                )
            )
        return cls(registry, tuple(comps))


def cross_term(c1: Component, c2: Component) -> float:
    """2 Re(a1 conj(a2) <basis1|basis2>) for an orthonormal product basis."""
    if len(c1.factors) != len(c2.factors):
        raise StateError("components come from different registries")
    overlap = 1.0 if c1.basis == c2.basis else 0.0
    return 2.0 * (c1.amplitude * c2.amplitude.conjugate()).real * overlap


def total_square_modulus(s: Superposition) -> float:
    """Sum of squared moduli plus pairwise cross terms of distinct components."""
    comps = s.components
    total = sum(abs(c.amplitude) ** 2 for c in comps)
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            total += cross_term(comps[i], comps[j])
    return float(total)


def mark_realized(s: Superposition, component_id: str) -> Superposition:
    target = s.get(component_id)
    if target.is_realized:
        raise StateError(f"component {component_id!r} is already realized")
    comps = tuple(replace(c, status=REALIZED) if c.id == component_id else c for c in s.components)
    return s.with_components(comps)


def epr_registry() -> SubsystemRegistry:
    """Two spin-1/2 particles and two three-state detectors.

    Order is (p1, d1, p2, d2) so that the left wing (p1, d1) and the right
    wing (p2, d2) are the two tensor factors of the joint space.
    """
    return SubsystemRegistry.of(
        p1=("up", "down"),
        d1=("armed", "cap_up", "cap_down"),
        p2=("up", "down"),
        d2=("armed", "cap_up", "cap_down"),
    )


def build_singlet(
    a: Event,
    b: Event,
    registry: SubsystemRegistry | None = None,
    m: Event | None = None,
    n: Event | None = None,
) -> Superposition:
    """Spin singlet of p1 (at ``a``) and p2 (at ``b``) with both detectors armed.

    The two tuples (up, down) and (down, up) form one realized block.
    """
    registry = registry or epr_registry()
    m = m or Event.at(0.0, -1.0, "m", a.frame)
    n = n or Event.at(0.0, 1.0, "n", a.frame)
    if not is_mutually_spacelike([a, b]):
        raise StateError("singlet anchors a and b must be spacelike separated")
    anchors = {"p1": a, "d1": m, "p2": b, "d2": n}
    comps = (
        make_component(registry, dict(p1="up", d1="armed", p2="down", d2="armed"), anchors,
                       INV_SQRT2, REALIZED, block="singlet"),
        make_component(registry, dict(p1="down", d1="armed", p2="up", d2="armed"), anchors,
                       -INV_SQRT2, REALIZED, block="singlet"),
    )
    return Superposition(registry, comps)
