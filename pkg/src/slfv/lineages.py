"""Coalescing ancestral lineages and their excursion bookkeeping.

A system of finitely many particles is driven by the same reproduction-event
law as the forward process: each event marks every covered particle
independently with probability u and moves all marked particles to one parent
location drawn uniformly in the event ball, merging them if two or more were
marked.  Only events whose ball covers at least one particle are materialised
(union thinning), which is exact and keeps the simulation domain unbounded.

For a single one-dimensional lineage the module also maintains the excursion
decomposition around the interface band [-r_plus, r_plus]: entry/exit times,
band occupation time, one-sided exit-displacement accumulators (discrete
analogues of one-sided local times) and centred-jump martingales, plus the
holding-time-weighted law of the position inside the band.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import halfspace_ball_volume, ball_volume
from .kernels import lineage_history, first_entry_positions

__all__ = [
    "LineageSystem",
    "MergeRecord",
    "apply_event_dual",
    "run_dual",
    "DualResult",
    "run_single_lineage",
    "SingleLineageResult",
    "ExcursionLedger",
    "LedgerReport",
    "ledger_report",
    "HEstimate",
    "estimate_h_integral",
]


@dataclass
class MergeRecord:
    time: float
    survivor: int
    absorbed: tuple
    point: np.ndarray


@dataclass
class LineageSystem:
    """Particle positions with alive flags and a coalescence log."""

    positions: np.ndarray  # (k, d), rows of dead particles keep their last value
    alive: np.ndarray      # (k,) bool
    merge_log: list = field(default_factory=list)
    time: float = 0.0

    @classmethod
    def from_points(cls, points):
        pos = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        return cls(positions=pos, alive=np.ones(len(pos), dtype=bool))

    @property
    def n_alive(self):
        return int(self.alive.sum())

    def alive_ids(self):
        return np.flatnonzero(self.alive)


def _covering_rate(x1, r, sign, d):
    """|B(x, r) ∩ H^sign| / V_r, the event rate from one side covering x."""
    return halfspace_ball_volume(x1, r, sign, d) / ball_volume(r, d)


def _draw_centre_py(rng, x, r, sign, d):
    """Uniform point of B(x, r) ∩ H^sign; draw-for-draw equal to the kernel."""
    if d == 1:
        lo, hi = x[0] - r, x[0] + r
        if sign > 0:
            lo = max(lo, 0.0)
        else:
            hi = min(hi, 0.0)
        return np.array([lo + rng.random() * (hi - lo)])
    out = np.empty(d)
    while True:
        s2 = 0.0
        for i in range(d):
            v = 2.0 * rng.random() - 1.0
            out[i] = v
            s2 += v * v
        if s2 > 1.0:
            continue
        if sign * (x[0] + r * out[0]) > 0.0:
            return x + r * out


def _draw_in_ball_py(rng, c, r, d):
    if d == 1:
        return np.array([c[0] + (2.0 * rng.random() - 1.0) * r])
    out = np.empty(d)
    while True:
        s2 = 0.0
        for i in range(d):
            v = 2.0 * rng.random() - 1.0
            out[i] = v
            s2 += v * v
        if s2 <= 1.0:
            return c + r * out


def apply_event_dual(system, event, params, rng):
    """Apply one reproduction event to the lineage system, in place.

    Every alive particle inside the event ball is marked independently with
    probability u (in id order); if any were marked they all move to the
    parent location and coalesce onto the lowest marked id.  The parent comes
    from the event's own substream when the event carries one, otherwise it
    is drawn from ``rng`` after the marking draws.
    """
    d = system.positions.shape[1]
    r = event.radius
    centre = np.asarray(event.center, dtype=float)
    covered = [
        int(j)
        for j in system.alive_ids()
        if float(np.linalg.norm(system.positions[j] - centre)) < r
    ]
    marked = [j for j in covered if rng.random() < params.u]
    if not marked:
        system.time = event.time
        return system
    if event.parent_key or event._parent is not None:
        y = np.asarray(event.parent(), dtype=float)
    else:
        y = _draw_in_ball_py(rng, centre, r, d)
    for j in marked:
        system.positions[j] = y
    if len(marked) > 1:
        survivor = marked[0]
        absorbed = tuple(marked[1:])
        for j in absorbed:
            system.alive[j] = False
        system.merge_log.append(
            MergeRecord(time=event.time, survivor=survivor, absorbed=absorbed, point=y.copy())
        )
    system.time = event.time
    return system


@dataclass
class DualResult:
    """Outcome of an event-driven dual run."""

    system: LineageSystem
    jumps: list            # (time, moved ids tuple, landing point)
    horizon: float

    @property
    def merge_log(self):
        return self.system.merge_log


def run_dual(initial_positions, horizon, params, rng):
    """Simulate the dual lineage system on [0, horizon].

    Candidate events are proposed at the summed covering rate of the alive
    particles and accepted with probability 1/multiplicity, which realises
    exactly the reproduction-event stream restricted to balls covering at
    least one particle.  Draw order per candidate matches the compiled
    single-lineage kernel, so one-particle runs coincide path-for-path with
    :func:`run_single_lineage` at the same seed.
    """
    system = LineageSystem.from_points(initial_positions)
    d = system.positions.shape[1]
    rp, rm, u = params.r_plus, params.r_minus, params.u
    jumps = []
    t = 0.0
    while True:
        ids = system.alive_ids()
        rates = np.empty((len(ids), 2))
        for row, j in enumerate(ids):
            x1 = system.positions[j, 0]
            rates[row, 0] = _covering_rate(x1, rp, +1, d)
            rates[row, 1] = _covering_rate(x1, rm, -1, d)
        total = float(rates.sum())
        t += -math.log1p(-rng.random()) / total
        if t >= horizon:
            break
        pick = rng.random() * total
        acc = 0.0
        host, sign, r = ids[0], 1, rp
        done = False
        for row, j in enumerate(ids):
            for col, (sg, rr) in enumerate(((1, rp), (-1, rm))):
                acc += rates[row, col]
                if pick < acc:
                    host, sign, r = int(j), sg, rr
                    done = True
                    break
            if done:
                break
        z = _draw_centre_py(rng, system.positions[host], r, sign, d)
        covered = [
            int(j)
            for j in ids
            if float(np.linalg.norm(system.positions[j] - z)) < r
        ]
        mult = len(covered)
        if mult > 1 and rng.random() >= 1.0 / mult:
            continue
        marked = [j for j in covered if rng.random() < u]
        if not marked:
            continue
        y = _draw_in_ball_py(rng, z, r, d)
        for j in marked:
            system.positions[j] = y
        if len(marked) > 1:
            survivor = marked[0]
            absorbed = tuple(marked[1:])
            for j in absorbed:
                system.alive[j] = False
            system.merge_log.append(
                MergeRecord(time=t, survivor=survivor, absorbed=absorbed, point=y.copy())
            )
        system.time = t
        jumps.append((t, tuple(marked), y.copy()))
    system.time = horizon
    return DualResult(system=system, jumps=jumps, horizon=horizon)


@dataclass
class SingleLineageResult:
    times: np.ndarray      # jump times
    positions: np.ndarray  # (m, d) post-jump positions
    x0: np.ndarray
    horizon: float
    ledger: "ExcursionLedger"

    def position_at(self, t):
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.x0 if i == 0 else self.positions[i - 1]


def run_single_lineage(x0, horizon, params, rng, with_ledger=True):
    """Simulate one lineage by thinning and return its jump history.

    Candidates arrive at the exact covering rate
    |B(x, r+) ∩ H+|/V_{r+} + |B(x, r-) ∩ H-|/V_{r-}  (= u^{-1} * jump rate
    deep in either halfspace) and are accepted with probability u.  In d = 1
    an :class:`ExcursionLedger` is attached unless ``with_ledger`` is False.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = len(x0)
    if d > 3:
        raise NotImplementedError("lineage simulation implemented for d <= 3")
    cap = int(1.6 * params.u * horizon + 12.0 * math.sqrt(params.u * horizon + 1.0) + 64)
    while True:
        times, xs, m, ok = lineage_history(
            rng, x0, horizon, params.r_plus, params.r_minus, params.u, cap
        )
        if ok:
            break
        cap *= 2  # rare: retry with a fresh stretch of the stream
    times = times[:m].copy()
    xs = xs[:m].copy()
    ledger = None
    if with_ledger and d == 1:
        ledger = ExcursionLedger(
            x0=float(x0[0]), r_plus=params.r_plus, horizon=horizon,
            times=times, positions=xs[:, 0].copy(),
        )
    return SingleLineageResult(times=times, positions=xs, x0=x0, horizon=horizon, ledger=ledger)


@dataclass
class ExcursionLedger:
    """Excursion bookkeeping of a 1D lineage around [-r_plus, r_plus].

    Everything is derived from the exact jump history.  The exit
    accumulators L± use an entry register seeded with the starting point, so
    the pathwise identity

        ±x_t 1{±x_t > r} = ±x_0 + M±(t) + L±(t) ∓ v±(t) 1{register active}

    holds exactly (to rounding) at every jump time from any start; for a
    start at the interface the register term reduces to the textbook sum of
    pending entry values.
    """

    x0: float
    r_plus: float
    horizon: float
    times: np.ndarray
    positions: np.ndarray

    # -- raw state sequences ------------------------------------------------

    @cached_property
    def _prev(self):
        return np.concatenate(([self.x0], self.positions[:-1]))

    @cached_property
    def _state(self):
        return self._code(self.positions)

    @cached_property
    def _state_prev(self):
        return self._code(self._prev)

    def _code(self, x):
        return np.where(x > self.r_plus, 1, np.where(x < -self.r_plus, -1, 0))

    # -- martingale parts ---------------------------------------------------

    @cached_property
    def _m_plus_cum(self):
        return np.cumsum((self.positions - self._prev) * (self._prev > self.r_plus))

    @cached_property
    def _m_minus_cum(self):
        return np.cumsum(-(self.positions - self._prev) * (self._prev < -self.r_plus))

    def M_plus(self, t):
        return self._step_value(self._m_plus_cum, t)

    def M_minus(self, t):
        return self._step_value(self._m_minus_cum, t)

    def _step_value(self, cum, t):
        i = int(np.searchsorted(self.times, t, side="right"))
        return 0.0 if i == 0 else float(cum[i - 1])

    # -- excursion times and exit accumulators ------------------------------

    def _side_events(self, side):
        """Indices of entries into (sigma) and exits from (tau) one excursion set."""
        s, sp = self._state, self._state_prev
        if np.any((sp == 1) & (s == -1)) or np.any((sp == -1) & (s == 1)):
            raise AssertionError("impossible direct crossing of the band")
        sigma = np.flatnonzero((sp != side) & (s == side))
        tau = np.flatnonzero((sp == side) & (s != side))
        return sigma, tau

    @cached_property
    def _plus_events(self):
        return self._side_events(1)

    @cached_property
    def _minus_events(self):
        return self._side_events(-1)

    def _exit_accumulator(self, side):
        """(times, cumulative values) of L^side, plus register trace arrays."""
        sigma, tau = self._plus_events if side == 1 else self._minus_events
        x = self.positions
        started_inside = (1 if self.x0 > self.r_plus else (-1 if self.x0 < -self.r_plus else 0)) == side
        if started_inside:
            # first transition is an exit; the k-th re-entry pairs with tau_k
            entry_vals = x[tau][: len(sigma)]
        else:
            entry_vals = np.concatenate(([self.x0], x[tau]))[: len(sigma)]
        increments = float(side) * (x[sigma] - entry_vals)
        return sigma, tau, np.cumsum(increments)

    @cached_property
    def _l_plus(self):
        return self._exit_accumulator(1)

    @cached_property
    def _l_minus(self):
        return self._exit_accumulator(-1)

    def L_plus(self, t):
        sigma, _, cum = self._l_plus
        i = int(np.searchsorted(self.times[sigma], t, side="right"))
        return 0.0 if i == 0 else float(cum[i - 1])

    def L_minus(self, t):
        sigma, _, cum = self._l_minus
        i = int(np.searchsorted(self.times[sigma], t, side="right"))
        return 0.0 if i == 0 else float(cum[i - 1])

    def entry_exit_times(self, side):
        """(tau, sigma) time arrays: band entries terminating side-excursions
        and the subsequent exits, in the convention of the decomposition."""
        sigma, tau = self._plus_events if side > 0 else self._minus_events
        return self.times[tau], self.times[sigma]

    # -- occupation of the band ---------------------------------------------

    @cached_property
    def _interval_data(self):
        """Piecewise-constant trajectory intervals: starts, durations, values."""
        starts = np.concatenate(([0.0], self.times))
        ends = np.concatenate((self.times, [self.horizon]))
        vals = np.concatenate(([self.x0], self.positions))
        return starts, ends - starts, vals

    def nu(self, t):
        """Occupation time of [-r_plus, r_plus] up to t."""
        starts, durs, vals = self._interval_data
        frac = np.clip(t - starts, 0.0, durs)
        return float(np.sum(frac * (np.abs(vals) <= self.r_plus)))

    def band_samples(self, t=None):
        """Holding-time weighted band samples (values, weights) up to t."""
        t = self.horizon if t is None else t
        starts, durs, vals = self._interval_data
        w = np.clip(t - starts, 0.0, durs)
        keep = (np.abs(vals) <= self.r_plus) & (w > 0)
        return vals[keep], w[keep]

    # -- pathwise identity ---------------------------------------------------

    def _register_trace(self, side):
        sigma, tau = self._plus_events if side == 1 else self._minus_events
        n = len(self.times)
        # register value: starting point until the first tau, then last tau value
        if len(tau) == 0:
            vals = np.full(n, self.x0)
        else:
            last_tau = np.searchsorted(tau, np.arange(n), side="right") - 1
            vals = np.where(last_tau >= 0, self.positions[tau[np.maximum(last_tau, 0)]], self.x0)
        active = self._state != side
        return vals, active

    def decomposition_residual(self):
        """Max absolute defect of the excursion decomposition over all jumps."""
        worst = 0.0
        for side in (1, -1):
            sigma, tau, lcum = self._l_plus if side == 1 else self._l_minus
            mcum = self._m_plus_cum if side == 1 else self._m_minus_cum
            lhs = side * self.positions * (self._state == side)
            l_at = np.zeros(len(self.times))
            if len(sigma):
                idx = np.searchsorted(sigma, np.arange(len(self.times)), side="right") - 1
                l_at = np.where(idx >= 0, lcum[np.maximum(idx, 0)], 0.0)
            v, active = self._register_trace(side)
            rhs = side * self.x0 + mcum + l_at - side * v * active
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) if len(lhs) else 0.0)
        return worst


@dataclass
class LedgerReport:
    t: float
    nu: float
    L_plus: float
    L_minus: float
    ratio: float
    band_values: np.ndarray
    band_weights: np.ndarray


def ledger_report(ledger, t):
    """Read the ledger at time t <= horizon."""
    if t > ledger.horizon + 1e-12:
        raise ValueError("report time exceeds the simulated horizon")
    lp, lm = ledger.L_plus(t), ledger.L_minus(t)
    vals, w = ledger.band_samples(t)
    return LedgerReport(
        t=t, nu=ledger.nu(t), L_plus=lp, L_minus=lm,
        ratio=lp / lm if lm > 0 else math.inf,
        band_values=vals, band_weights=w,
    )


def _phi_1d(x, y, r_plus, r_minus):
    """Vectorised d = 1 jump kernel Phi(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = np.maximum(x, y)
    hi = np.minimum(x, y)
    pos = np.maximum(0.0, hi + r_plus - np.maximum(lo - r_plus, 0.0))
    neg = np.maximum(0.0, np.minimum(hi + r_minus, 0.0) - (lo - r_minus))
    return pos / (2.0 * r_plus) ** 2 + neg / (2.0 * r_minus) ** 2


@dataclass
class HEstimate:
    value: float
    stderr: float
    se_outer: float
    se_inner: float


def estimate_h_integral(params, sign, rng, n_outer=20000, n_y=1201,
                        entry_nodes=33, inner_reps=1000, chunk=2000):
    """Nested Monte Carlo estimate of the band-average of h^sign (d = 1).

    Outer stage: x ~ Uniform[-r_plus, r_plus].  For each x, h^sign(x) is a
    quadrature over y of Phi(x, y) against (E(y) - x) inside {sign*y <= r+}
    and (y - x) outside, where E(y) - the expected position at first entry
    into the band from y - equals y inside the band and is estimated by
    inner lineage runs on a fixed node grid (reused across all x and y by
    linear interpolation).  Inner noise is propagated into the reported
    standard error.
    """
    if params.d != 1:
        raise NotImplementedError("h-integrals are defined for d = 1")
    rp, rm, u = params.r_plus, params.r_minus, params.u
    s = 1 if sign > 0 else -1

    # far region needing the entry map: beyond the band boundary opposite to s
    if s > 0:
        far_lo, far_hi = -rp - 2.0 * rm, -rp
    else:
        far_lo, far_hi = rp, 3.0 * rp
    nodes = np.linspace(far_lo, far_hi, entry_nodes)
    # nodes at the band edge enter the band immediately; nudge inside the region
    inner_nodes = nodes.copy()
    inner_nodes[np.isclose(inner_nodes, -rp)] = -rp - 1e-9
    inner_nodes[np.isclose(inner_nodes, rp)] = rp + 1e-9
    e_mean, e_sem2, cap_frac = first_entry_positions(
        rng, inner_nodes, rp, rm, u, rp, inner_reps, 200_000
    )
    # truncation of never-entering excursions biases E by at most the band
    # width times the capped fraction; fold that into the node error
    e_sem2 = e_sem2 + (cap_frac * 2.0 * rp) ** 2

    ygrid = np.linspace(-3.0 * rp, 3.0 * rp, n_y)
    dy = ygrid[1] - ygrid[0]
    wq = np.full(n_y, dy)
    wq[0] = wq[-1] = dy / 2.0

    in_band = np.abs(ygrid) <= rp
    far = (ygrid >= far_lo) & (ygrid < far_hi) if s > 0 else (ygrid > far_lo) & (ygrid <= far_hi)
    direct = (s * ygrid) > rp

    e_of_y = np.where(in_band, ygrid, 0.0)
    e_of_y = np.where(far, np.interp(ygrid, nodes, e_mean), e_of_y)

    xs = rng.uniform(-rp, rp, n_outer)
    vals = np.empty(n_outer)
    phi_mean = np.zeros(n_y)
    for a in range(0, n_outer, chunk):
        xc = xs[a : a + chunk, None]
        phi = _phi_1d(xc, ygrid[None, :], rp, rm)
        integrand = np.where(
            direct[None, :],
            phi * (ygrid[None, :] - xc),
            phi * (e_of_y[None, :] - xc) * (in_band | far)[None, :],
        )
        vals[a : a + chunk] = s * u * (integrand * wq[None, :]).sum(axis=1)
        phi_mean += phi.sum(axis=0)
    phi_mean /= n_outer

    est = float(np.mean(vals))
    se_outer = float(np.std(vals, ddof=1) / math.sqrt(n_outer))

    # propagate entry-map noise: est is linear in E(nodes) through interp
    coeff_y = u * wq * phi_mean * far  # |d est / d e_of_y_k|
    jac = np.zeros((n_y, entry_nodes))
    for k in range(entry_nodes):
        basis = np.zeros(entry_nodes)
        basis[k] = 1.0
        jac[:, k] = np.interp(ygrid, nodes, basis) * far
    c_nodes = coeff_y @ jac
    se_inner = float(np.sqrt(np.sum(c_nodes**2 * e_sem2)))
    return HEstimate(
        value=est, stderr=math.hypot(se_outer, se_inner),
        se_outer=se_outer, se_inner=se_inner,
    )
