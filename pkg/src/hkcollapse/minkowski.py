"""Flat spacetime geometry: events, intervals, backward cones and boosts.

Natural units (c = 1) and metric signature (+, -, -, -), so a positive
squared interval means timelike separation. Every predicate exposed here is
invariant under Lorentz boosts; coordinates are only a concrete carrier.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EPS_CONE = 1e-9
"""Half-width of the lightlike band, in coordinate-squared units."""

LAB_FRAME = "lab"


class FrameMismatchError(ValueError):
    """Raised when events expressed in different frames are compared."""


class IntervalClass(enum.Enum):
    TIMELIKE = "timelike"
    SPACELIKE = "spacelike"
    LIGHTLIKE = "lightlike"


@dataclass(frozen=True)
class Event:
    """A labelled spacetime point with (t, x, y, z) coordinates in ``frame``."""

    label: str
    coords: tuple[float, float, float, float]
    frame: str = LAB_FRAME

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) != 4:
            raise ValueError(f"event {self.label!r} needs 4 coordinates, got {len(coords)}")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"event {self.label!r} has non-finite coordinates {coords}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def at(cls, t: float, x: float = 0.0, label: str = "", frame: str = LAB_FRAME) -> "Event":
        """1+1D shorthand: an event at (t, x, 0, 0)."""
        return cls(label, (t, x, 0.0, 0.0), frame)

    @property
    def t(self) -> float:
        return self.coords[0]

    @property
    def x(self) -> float:
        return self.coords[1]

    def relabel(self, label: str) -> "Event":
        return Event(label, self.coords, self.frame)

    def to_dict(self) -> dict:
        return {"label": self.label, "coords": list(self.coords), "frame": self.frame}

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["label"], tuple(d["coords"]), d.get("frame", LAB_FRAME))


def _check_frames(*events: Event) -> None:
    frames = {e.frame for e in events}
    if len(frames) > 1:
        raise FrameMismatchError(f"events live in different frames: {sorted(frames)}")


def interval_squared(e1: Event, e2: Event) -> float:
    """Invariant squared interval dt^2 - dx^2 - dy^2 - dz^2."""
    _check_frames(e1, e2)
    dt, dx, dy, dz = (a - b for a, b in zip(e1.coords, e2.coords))
    return dt * dt - (dx * dx + dy * dy + dz * dz)


def classify(e1: Event, e2: Event, eps: float = EPS_CONE) -> IntervalClass:
    s2 = interval_squared(e1, e2)
    if s2 > eps:
        return IntervalClass.TIMELIKE
    if s2 < -eps:
        return IntervalClass.SPACELIKE
    return IntervalClass.LIGHTLIKE


def is_mutually_spacelike(events: Sequence[Event], eps: float = EPS_CONE) -> bool:
    """True iff every pair of ``events`` is spacelike separated."""
    events = list(events)
    if len(events) < 2:
        raise ValueError("need at least two events to test mutual separation")
    _check_frames(*events)
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            if classify(events[i], events[j], eps) is not IntervalClass.SPACELIKE:
                return False
    return True


def in_backward_cone(e: Event, vertex: Event, eps: float = EPS_CONE) -> bool:
    """Membership in the closed backward cone of ``vertex``.

    The cone surface counts as inside; the vertex itself does not (it belongs
    to the region its own collapse affects).
    """
    s2 = interval_squared(e, vertex)
    return e.t < vertex.t and s2 >= -eps


def forward_of_backward_cone(e: Event, vertex: Event, eps: float = EPS_CONE) -> bool:
    """The region a collapse at ``vertex`` acts on: the complement of its backward cone."""
    return not in_backward_cone(e, vertex, eps)


@dataclass(frozen=True)
class Boost:
    """Pure Lorentz boost to a frame moving with 3-velocity ``velocity``."""

    velocity: tuple[float, float, float]
    gamma: float = field(init=False, repr=False)

    def __post_init__(self):
        v = tuple(float(c) for c in self.velocity)
        if len(v) != 3:
            raise ValueError("boost velocity must be a 3-vector")
        speed2 = sum(c * c for c in v)
        if not speed2 < 1.0:
            raise ValueError(f"boost speed must be < 1, got |v| = {math.sqrt(speed2):.6g}")
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "gamma", 1.0 / math.sqrt(1.0 - speed2))

    @classmethod
    def parse(cls, text: str) -> "Boost":
        """Parse ``"vx,vy,vz"`` (a single number is taken as vx)."""
        parts = [float(p) for p in text.replace(" ", "").split(",") if p]
        if len(parts) == 1:
            parts += [0.0, 0.0]
        if len(parts) != 3:
            raise ValueError(f"cannot parse boost {text!r}; expected 'vx,vy,vz'")
        return cls(tuple(parts))

    @property
    def is_identity(self) -> bool:
        return not any(self.velocity)

    @property
    def tag(self) -> str:
        return "boost({:.12g},{:.12g},{:.12g})".format(*self.velocity)

    def matrix(self) -> np.ndarray:
        """4x4 matrix acting on column vectors (t, x, y, z)."""
        v = np.asarray(self.velocity)
        g = self.gamma
        lam = np.eye(4)
        lam[0, 0] = g
        lam[0, 1:] = -g * v
        lam[1:, 0] = -g * v
        # (gamma - 1) / v^2 written as gamma^2 / (gamma + 1), which survives v -> 0
        lam[1:, 1:] += g * g / (g + 1.0) * np.outer(v, v)
        return lam


def boost_frame(frame: str, b: Boost) -> str:
    return frame if b.is_identity else f"{frame}|{b.tag}"


def boost(e: Event, b: Boost) -> Event:
    """Coordinates of ``e`` seen from the boosted frame."""
    if b.is_identity:
        return e
    vx, vy, vz = b.velocity
    t, x, y, z = e.coords
    g = b.gamma
    vr = vx * x + vy * y + vz * z
    k = g * g / (g + 1.0) * vr - g * t
    coords = (g * (t - vr), x + k * vx, y + k * vy, z + k * vz)
    return Event(e.label, coords, boost_frame(e.frame, b))


def boost_all(events: Iterable[Event], b: Boost) -> list[Event]:
    return [boost(e, b) for e in events]


@dataclass(frozen=True)
class Worldline:
    """Straight worldline, parameterized by lab coordinate time.

    ``at(lam)`` returns the event at lab time ``lam`` expressed in the frame
    selected by ``frame_boost``; the parameter itself is frame independent.
    """

    label: str
    x0: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame_boost: Boost | None = None

    def at(self, lam: float, label: str | None = None) -> Event:
        pos = tuple(p + lam * v for p, v in zip(self.x0, self.velocity))
        e = Event(label if label is not None else self.label, (lam, *pos), LAB_FRAME)
        if self.frame_boost is not None:
            e = boost(e, self.frame_boost)
        return e

    def boosted(self, b: Boost) -> "Worldline":
        if self.frame_boost is not None and not self.frame_boost.is_identity:
            raise ValueError("worldline is already boosted")
        return Worldline(self.label, self.x0, self.velocity, None if b.is_identity else b)

    @property
    def frame(self) -> str:
        return LAB_FRAME if self.frame_boost is None else boost_frame(LAB_FRAME, self.frame_boost)
