"""Space-time Poisson stream of reproduction events on a finite window.

Events centred in H+ fall with intensity dx dt / V_{r+}, events centred in
H- with intensity dx dt / V_{r-}.  Restricting the stream to a box padded by
r_plus on every face is exact for everything happening in the box interior:
an event centred outside the padded window cannot intersect it.

Parent locations are drawn lazily from a per-event substream, so consumers
that skip the parent draw (or that only materialise some events) see exactly
the same event stream at the same seed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .geometry import ball_volume, sample_uniform_ball

__all__ = [
    "SimWindow",
    "ReproductionEvent",
    "EventStream",
    "event_rate",
    "next_event",
    "dump_events",
    "load_events",
]


@dataclass(frozen=True)
class SimWindow:
    """Axis-aligned box [a_1,b_1] x ... x [a_d,b_d] with a time horizon."""

    bounds: tuple
    horizon: float

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", b)
        for lo, hi in b:
            if not hi > lo:
                raise ValueError(f"degenerate window side [{lo}, {hi}]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def padded(cls, region, pad, horizon):
        """Window enclosing ``region`` (list of (lo, hi)) padded by ``pad``."""
        return cls(tuple((lo - pad, hi + pad) for lo, hi in region), horizon)

    @property
    def d(self):
        return len(self.bounds)

    def volume(self):
        v = 1.0
        for lo, hi in self.bounds:
            v *= hi - lo
        return v

    def halfspace_volume(self, sign):
        """Volume of the window intersected with H+ (sign>0) or H- (sign<0)."""
        lo, hi = self.bounds[0]
        if sign > 0:
            side = max(0.0, hi - max(lo, 0.0))
        else:
            side = max(0.0, min(hi, 0.0) - lo)
        v = side
        for lo, hi in self.bounds[1:]:
            v *= hi - lo
        return v

    def interior(self, margin):
        """The box shrunk by ``margin`` on every face."""
        return tuple((lo + margin, hi - margin) for lo, hi in self.bounds)

    def validate_for(self, params):
        for lo, hi in self.bounds:
            if hi - lo <= 2.0 * params.r_plus:
                raise ValueError(
                    "window sides must exceed the event diameter 2*r_plus"
                )


@dataclass
class ReproductionEvent:
    """One Poisson reproduction event.

    The radius is a deterministic function of the sign of the centre's first
    coordinate (centre exactly on the interface resolves to the + side, a
    probability-zero case).  The parent location is drawn lazily, uniform in
    B(center, radius), from a substream keyed to the event so that the draw
    is reproducible and independent of whether other consumers drew it.
    """

    time: float
    center: np.ndarray
    radius: float
    sign: int
    index: int = 0
    parent_key: int = 0
    _parent: np.ndarray = field(default=None, repr=False)

    def parent(self):
        if self._parent is None:
            gen = np.random.Generator(np.random.Philox(key=self.parent_key))
            self._parent = sample_uniform_ball(
                self.center, self.radius, len(self.center), gen
            )
        return self._parent

    def covers(self, point):
        return float(np.linalg.norm(np.asarray(point) - self.center)) < self.radius


def event_rate(window, params):
    """Total event intensity on the window:
    |window ∩ H+| / V_{r+} + |window ∩ H-| / V_{r-}."""
    vp = ball_volume(params.r_plus, params.d)
    vm = ball_volume(params.r_minus, params.d)
    return (
        window.halfspace_volume(+1) / vp + window.halfspace_volume(-1) / vm
    )


def _uniform_in_halfspace_box(window, sign, rng):
    (lo0, hi0) = window.bounds[0]
    if sign > 0:
        lo0 = max(lo0, 0.0)
    else:
        hi0 = min(hi0, 0.0)
    pt = np.empty(window.d)
    pt[0] = rng.uniform(lo0, hi0)
    for i, (lo, hi) in enumerate(window.bounds[1:], start=1):
        pt[i] = rng.uniform(lo, hi)
    return pt


def next_event(window, params, rng, t_now):
    """Draw the next event after ``t_now``, or None past the horizon.

    The waiting time is Exp(rate); the halfspace is chosen with probability
    proportional to its partial rate and the centre is uniform on the
    window ∩ halfspace.  The parent is left undrawn.
    """
    if t_now >= window.horizon:
        raise ValueError("t_now must precede the window horizon")
    vp = ball_volume(params.r_plus, params.d)
    vm = ball_volume(params.r_minus, params.d)
    rate_plus = window.halfspace_volume(+1) / vp
    rate_minus = window.halfspace_volume(-1) / vm
    rate = rate_plus + rate_minus
    t = t_now + rng.exponential(1.0 / rate)
    if t > window.horizon:
        return None
    sign = 1 if rng.random() * rate < rate_plus else -1
    center = _uniform_in_halfspace_box(window, sign, rng)
    return ReproductionEvent(
        time=t, center=center, radius=params.radius(sign), sign=sign
    )


class EventStream:
    """Sequential generator of the event stream for one replicate.

    Identical (seed, replicate, window, params) give bit-identical streams.
    Memory is O(1) in the horizon; events are produced one at a time from an
    exponential clock.
    """

    def __init__(self, window, params, seed, replicate=0):
        window.validate_for(params)
        self.window = window
        self.params = params
        self.seed = seed
        self.replicate = replicate
        self._rng = rngmod.stream(seed, "events", replicate)
        self._t = 0.0
        self._index = 0

    def __iter__(self):
        return self

    def __next__(self):
        if self._t >= self.window.horizon:
            raise StopIteration
        ev = next_event(self.window, self.params, self._rng, self._t)
        if ev is None:
            self._t = self.window.horizon
            raise StopIteration
        ev.index = self._index
        ev.parent_key = rngmod.stream_key(self.seed, "parent", self.replicate, self._index)
        self._t = ev.time
        self._index += 1
        return ev


_EVENT_DTYPE_CACHE = {}


def _event_dtype(d):
    if d not in _EVENT_DTYPE_CACHE:
        _EVENT_DTYPE_CACHE[d] = np.dtype(
            [("time", "<f8"), ("center", "<f8", (d,)), ("halfspace", "u1")]
        )
    return _EVENT_DTYPE_CACHE[d]


def dump_events(path, events, d):
    """Write a binary event log: per record f64 time, f64 x d centre, u8 side."""
    arr = np.empty(len(events), dtype=_event_dtype(d))
    for i, ev in enumerate(events):
        arr[i] = (ev.time, ev.center, 1 if ev.sign > 0 else 0)
    arr.tofile(path)


def load_events(path, d, params):
    """Read a binary event log written by :func:`dump_events`."""
    arr = np.fromfile(path, dtype=_event_dtype(d))
    out = []
    for i, rec in enumerate(arr):
        sign = 1 if rec["halfspace"] else -1
        out.append(
            ReproductionEvent(
                time=float(rec["time"]),
                center=np.array(rec["center"], dtype=float).reshape(d),
                radius=params.radius(sign),
                sign=sign,
                index=i,
            )
        )
    return out
