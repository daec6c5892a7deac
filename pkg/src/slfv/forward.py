"""Forward allele-frequency field on a 1D cell grid.

The field w(t, .) holds one frequency in [0, 1] per cell.  A reproduction
event replaces a fraction u of every covered cell by the type of one parent:
w <- (1-u) w + u 1{k=1}, with P(k=1) equal to the overlap-weighted mean of w
over the event ball.  Updates are convex combinations, so values stay in
[0, 1] pathwise.

Cells are "covered" when their centre lies in the ball; the cell width is
gated at r_minus / 20 so the overlap-weighted ball mean of the piecewise
representation stays within a cell-scale error of the continuum one.

Rescaled runs simulate the unrescaled process on a sqrt(n)-scaled window for
n-scaled time and report fields in rescaled coordinates.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .events import SimWindow, EventStream, ReproductionEvent
from .kernels import forward_kernel

__all__ = [
    "AlleleField",
    "InitialProfile",
    "Bump",
    "TestFunctional",
    "ball_mean",
    "apply_event",
    "ForwardConfig",
    "ForwardResult",
    "run_forward",
    "eval_I",
]

RESOLUTION_FACTOR = 20.0  # cell_width <= r_minus / 20


@dataclass
class AlleleField:
    """Piecewise-constant frequency field: values[i] on
    [origin + i h, origin + (i+1) h)."""

    h: float
    origin: float
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < -1e-12) or np.any(self.values > 1.0 + 1e-12):
            raise ValueError("field values must lie in [0, 1]")

    @classmethod
    def from_profile(cls, lo, hi, h, profile):
        n = int(round((hi - lo) / h))
        centers = lo + (np.arange(n) + 0.5) * h
        return cls(h=h, origin=lo, values=np.clip(profile(centers), 0.0, 1.0))

    @property
    def n_cells(self):
        return len(self.values)

    @property
    def end(self):
        return self.origin + self.n_cells * self.h

    def centers(self):
        return self.origin + (np.arange(self.n_cells) + 0.5) * self.h

    def copy(self):
        return AlleleField(h=self.h, origin=self.origin,
                           values=self.values.copy(), time=self.time)

    def rescaled(self, n):
        """The same cell values in coordinates x / sqrt(n)."""
        s = math.sqrt(n)
        return AlleleField(h=self.h / s, origin=self.origin / s,
                           values=self.values.copy(), time=self.time / n)


@dataclass(frozen=True)
class InitialProfile:
    """Initial frequency profile: constant, heaviside or piecewise linear.

    heaviside: ``left`` on {x < x0}, ``right`` on {x > x0}.
    piecewise: linear interpolation through (xs, ys), flat beyond the ends.
    """

    kind: str
    value: float = 0.5
    x0: float = 0.0
    left: float = 1.0
    right: float = 0.0
    xs: tuple = ()
    ys: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "heaviside":
            return np.where(x < self.x0, self.left, self.right)
        if self.kind == "piecewise":
            return np.interp(x, np.asarray(self.xs), np.asarray(self.ys))
        raise ValueError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def constant(cls, c):
        return cls(kind="constant", value=c)

    @classmethod
    def heaviside(cls, x0=0.0, left=1.0, right=0.0):
        return cls(kind="heaviside", x0=x0, left=left, right=right)

    @classmethod
    def piecewise(cls, xs, ys):
        return cls(kind="piecewise", xs=tuple(xs), ys=tuple(ys))


def ball_mean(field, center, radius):
    """Exact overlap-weighted average of the field over [center-r, center+r].

    The ball must lie inside the represented window.
    """
    lo, hi = center - radius, center + radius
    if lo < field.origin - 1e-9 * field.h or hi > field.end + 1e-9 * field.h:
        raise ValueError("ball reaches outside the represented window")
    h, origin = field.h, field.origin
    i0 = max(0, int(math.floor((lo - origin) / h)))
    i1 = min(field.n_cells, int(math.ceil((hi - origin) / h)))
    edges = origin + np.arange(i0, i1 + 1) * h
    over = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
    over = np.clip(over, 0.0, None)
    return float(np.dot(over, field.values[i0:i1]) / over.sum())


def apply_event(field, event, params, rng):
    """Apply one reproduction event to the field, in place.

    Draws the parent location (from the event's own substream), then the
    parent's type k with P(k=1) = ball mean at t-, and replaces a fraction u
    of every cell whose centre lies in the ball.
    """
    c, r = float(event.center[0]), event.radius
    mean = ball_mean(field, c, r)
    event.parent()
    k = 1.0 if rng.random() < mean else 0.0
    h, origin = field.h, field.origin
    j0 = max(0, int(math.ceil((c - r - origin) / h - 0.5)))
    j1 = min(field.n_cells - 1, int(math.floor((c + r - origin) / h - 0.5)))
    if j1 >= j0:
        u = params.u
        field.values[j0 : j1 + 1] = (1.0 - u) * field.values[j0 : j1 + 1] + u * k
    field.time = event.time
    return field


@dataclass(frozen=True)
class ForwardConfig:
    """One rescaled forward run.

    region          rescaled interval of interest (lo, hi)
    snapshot_times  rescaled times, strictly increasing
    h               unrescaled cell width, default r_minus / 20
    """

    params: object
    n: float
    region: tuple
    w0: InitialProfile
    snapshot_times: tuple
    h: float = None
    seed: int = 0
    replicate: int = 0
    engine: str = "numba"

    def cell_width(self):
        h = self.h if self.h is not None else self.params.r_minus / RESOLUTION_FACTOR
        if h > self.params.r_minus / RESOLUTION_FACTOR + 1e-12:
            raise ValueError(
                f"cell width {h} exceeds the resolution gate r_minus/20 = "
                f"{self.params.r_minus / RESOLUTION_FACTOR}"
            )
        return h


@dataclass
class ForwardResult:
    config: ForwardConfig
    snapshots: list   # (rescaled time, rescaled AlleleField)
    events_applied: int


def _build_field(config):
    s = math.sqrt(config.n)
    lo = config.region[0] * s - config.params.r_plus
    hi = config.region[1] * s + config.params.r_plus
    h = config.cell_width()
    ncell = int(math.ceil((hi - lo) / h))
    hi = lo + ncell * h
    profile = lambda x: config.w0(x / s)
    return AlleleField.from_profile(lo, hi, h, profile), lo, hi


def run_forward(config):
    """Simulate one replicate and return snapshots in rescaled coordinates.

    The unrescaled window is the sqrt(n)-scaled region padded by r_plus; the
    horizon is n times the last snapshot time.
    """
    snap_times = np.asarray(config.snapshot_times, dtype=float)
    if len(snap_times) == 0 or np.any(np.diff(snap_times) <= 0) or snap_times[0] <= 0:
        raise ValueError("snapshot times must be positive and strictly increasing")
    field, lo, hi = _build_field(config)
    p = config.params
    unresc_times = snap_times * config.n

    if config.engine == "numba":
        out = np.empty((len(snap_times), field.n_cells))
        gen = rngmod.stream(config.seed, "forward", config.replicate)
        n_events = forward_kernel(
            gen, field.values, field.origin, field.h, lo, hi,
            p.r_plus, p.r_minus, p.u, unresc_times, out,
        )
        snaps = []
        for i, t in enumerate(snap_times):
            f = AlleleField(h=field.h, origin=field.origin,
                            values=out[i], time=float(unresc_times[i]))
            snaps.append((float(t), f.rescaled(config.n)))
        return ForwardResult(config=config, snapshots=snaps, events_applied=n_events)

    if config.engine != "python":
        raise ValueError(f"unknown engine {config.engine!r}")
    window = SimWindow(((lo, hi),), horizon=float(unresc_times[-1]))
    krng = rngmod.stream(config.seed, "forward-types", config.replicate)
    snaps = []
    si = 0
    n_events = 0
    for ev in EventStream(window, p, config.seed, config.replicate):
        while si < len(unresc_times) and unresc_times[si] <= ev.time:
            f = field.copy()
            f.time = float(unresc_times[si])
            snaps.append((float(snap_times[si]), f.rescaled(config.n)))
            si += 1
        if si >= len(unresc_times):
            break
        # edge events may reach outside the window; clip like the kernel does
        c, r = float(ev.center[0]), ev.radius
        clipped_lo = max(c - r, field.origin)
        clipped_hi = min(c + r, field.end)
        if clipped_lo != c - r or clipped_hi != c + r:
            ev = ReproductionEvent(
                time=ev.time,
                center=np.array([0.5 * (clipped_lo + clipped_hi)]),
                radius=0.5 * (clipped_hi - clipped_lo),
                sign=ev.sign, index=ev.index, parent_key=ev.parent_key,
            )
        apply_event(field, ev, p, krng)
        n_events += 1
    while si < len(unresc_times):
        f = field.copy()
        f.time = float(unresc_times[si])
        snaps.append((float(snap_times[si]), f.rescaled(config.n)))
        si += 1
    return ForwardResult(config=config, snapshots=snaps, events_applied=n_events)


class Bump:
    """Nonnegative piecewise-linear weight with compact support."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(ys < 0) or ys[0] != 0 or ys[-1] != 0 or not np.any(ys > 0):
            raise ValueError("weights must be nonnegative, zero at the ends")
        self.xs = xs
        self.ys = ys
        seg = 0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)
        self._cum = np.concatenate(([0.0], np.cumsum(seg)))

    @classmethod
    def triangle(cls, center, halfwidth, height=1.0):
        return cls([center - halfwidth, center, center + halfwidth], [0.0, height, 0.0])

    @property
    def support(self):
        return float(self.xs[0]), float(self.xs[-1])

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys, left=0.0, right=0.0)

    def integral(self):
        return float(self._cum[-1])

    def antiderivative(self, x):
        """Exact integral of the bump over (-inf, x], vectorised."""
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.xs) - 2)
        x0, x1 = self.xs[i], self.xs[i + 1]
        y0, y1 = self.ys[i], self.ys[i + 1]
        s = np.clip(x, x0, x1) - x0
        slope = (y1 - y0) / (x1 - x0)
        inside = self._cum[i] + y0 * s + 0.5 * slope * s * s
        return np.where(x <= self.xs[0], 0.0, np.where(x >= self.xs[-1], self._cum[-1], inside))

    def cell_integrals(self, origin, h, n):
        """Integral of the bump over each of n cells of width h from origin."""
        edges = origin + np.arange(n + 1) * h
        anti = self.antiderivative(edges)
        return anti[1:] - anti[:-1]

    def sample(self, rng, size=None):
        """Draw from the normalised bump by inverse CDF (exact)."""
        n = 1 if size is None else int(size)
        u = rng.random(n) * self._cum[-1]
        i = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self.xs) - 2)
        rem = u - self._cum[i]
        x0, x1 = self.xs[i], self.xs[i + 1]
        y0, y1 = self.ys[i], self.ys[i + 1]
        slope = (y1 - y0) / (x1 - x0)
        with np.errstate(invalid="ignore"):
            s = np.where(
                np.abs(slope) < 1e-300 * np.maximum(y0, 1.0),
                rem / np.maximum(y0, 1e-300),
                (np.sqrt(np.maximum(y0 * y0 + 2.0 * slope * rem, 0.0)) - y0) / np.where(slope == 0.0, 1.0, slope),
            )
        out = x0 + s
        return float(out[0]) if size is None else out


@dataclass(frozen=True)
class TestFunctional:
    """Product weight psi(x_1..x_j) = prod_i bump_i(x_i) for sample size j."""

    bumps: tuple

    def __post_init__(self):
        if len(self.bumps) == 0:
            raise ValueError("at least one bump is required")

    @property
    def j(self):
        return len(self.bumps)

    def mass(self):
        out = 1.0
        for b in self.bumps:
            out *= b.integral()
        return out

    def validate_support(self, lo, hi):
        for b in self.bumps:
            s0, s1 = b.support
            if s0 < lo or s1 > hi:
                raise ValueError("functional support must stay inside the window interior")


def eval_I(field, functional):
    """Integral of prod_i w(x_i) psi(x_1..x_j) over (R^1)^j.

    For a product weight this factorises into a product of 1D pairings,
    each exact for the piecewise-constant field and piecewise-linear bump.
    """
    out = 1.0
    for b in functional.bumps:
        w = b.cell_integrals(field.origin, field.h, field.n_cells)
        out *= float(np.dot(w, field.values))
    return out
