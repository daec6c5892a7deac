"""Numba hot loops for lineage and forward-field simulation.

All randomness flows through ``rng.random()`` on a numpy Generator passed in
from Python, which numba consumes bit-compatibly with numpy.  The pure-Python
dual implementation in :mod:`slfv.lineages` makes the same sequence of draws,
so one-particle runs couple exactly at the same seed.

Draw order per candidate event (shared with the Python dual):
  1. exponential waiting time    (1 uniform)
  2. halfspace choice            (1 uniform)
  3. event centre in B(x,r) ∩ H  (1 uniform in d=1, cube rejection otherwise)
  4. multiplicity acceptance     (1 uniform, only when >1 particle is covered)
  5. marking, one per covered particle in id order
  6. parent in B(z,r) if any particle was marked
"""

import numpy as np
from numba import njit

__all__ = [
    "lineage_history",
    "lineage_endpoints",
    "first_entry_positions",
    "dual_pair_batch",
    "forward_kernel",
]


@njit(cache=True, inline="always")
def _cap_fraction(x1, r, sign, d):
    """Fraction of B(x, r) lying in the halfspace {sign * z_1 > 0}."""
    a = -sign * x1
    if a <= -r:
        return 1.0
    if a >= r:
        return 0.0
    if d == 1:
        return (r - a) / (2.0 * r)
    c = a / r
    if d == 2:
        return (np.arccos(c) - c * np.sqrt(1.0 - c * c)) / np.pi
    return 0.25 * (1.0 - c) * (1.0 - c) * (2.0 + c)


@njit(cache=True, inline="always")
def _draw_centre(rng, x, r, sign, d, out):
    """Uniform point of B(x, r) ∩ {sign * z_1 > 0} written into out."""
    if d == 1:
        lo = x[0] - r
        hi = x[0] + r
        if sign > 0:
            if lo < 0.0:
                lo = 0.0
        else:
            if hi > 0.0:
                hi = 0.0
        out[0] = lo + rng.random() * (hi - lo)
        return
    while True:
        s2 = 0.0
        for i in range(d):
            v = 2.0 * rng.random() - 1.0
            out[i] = v
            s2 += v * v
        if s2 > 1.0:
            continue
        if sign * (x[0] + r * out[0]) > 0.0:
            for i in range(d):
                out[i] = x[i] + r * out[i]
            return


@njit(cache=True, inline="always")
def _draw_in_ball(rng, c, r, d, out):
    """Uniform point of B(c, r) written into out."""
    if d == 1:
        out[0] = c[0] + (2.0 * rng.random() - 1.0) * r
        return
    while True:
        s2 = 0.0
        for i in range(d):
            v = 2.0 * rng.random() - 1.0
            out[i] = v
            s2 += v * v
        if s2 <= 1.0:
            for i in range(d):
                out[i] = c[i] + r * out[i]
            return


@njit(cache=True)
def lineage_history(rng, x0, horizon, r_plus, r_minus, u, cap):
    """Jump history of one lineage up to the horizon.

    Candidate events arrive at the exact covering rate of the current
    position; each candidate marks the particle with probability u and, if
    marked, moves it to a parent position drawn in the event ball.  Returns
    (times, positions, count, ok); ok is False when cap was too small.
    """
    d = x0.shape[0]
    x = x0.copy()
    z = np.empty(d)
    y = np.empty(d)
    times = np.empty(cap)
    xs = np.empty((cap, d))
    m = 0
    t = 0.0
    while True:
        rate_p = _cap_fraction(x[0], r_plus, 1.0, d)
        rate_m = _cap_fraction(x[0], r_minus, -1.0, d)
        lam = rate_p + rate_m
        t += -np.log1p(-rng.random()) / lam
        if t >= horizon:
            return times, xs, m, True
        if rng.random() * lam < rate_p:
            sign, r = 1.0, r_plus
        else:
            sign, r = -1.0, r_minus
        _draw_centre(rng, x, r, sign, d, z)
        if rng.random() >= u:
            continue
        _draw_in_ball(rng, z, r, d, y)
        for i in range(d):
            x[i] = y[i]
        if m >= cap:
            return times, xs, m, False
        times[m] = t
        for i in range(d):
            xs[m, i] = x[i]
        m += 1


@njit(cache=True, nogil=True)
def lineage_endpoints(rng, x0, horizon, r_plus, r_minus, u, nrep):
    """Endpoint positions of nrep independent lineages from x0."""
    d = x0.shape[0]
    out = np.empty((nrep, d))
    x = np.empty(d)
    z = np.empty(d)
    y = np.empty(d)
    for k in range(nrep):
        for i in range(d):
            x[i] = x0[i]
        t = 0.0
        while True:
            rate_p = _cap_fraction(x[0], r_plus, 1.0, d)
            rate_m = _cap_fraction(x[0], r_minus, -1.0, d)
            lam = rate_p + rate_m
            t += -np.log1p(-rng.random()) / lam
            if t >= horizon:
                break
            if rng.random() * lam < rate_p:
                sign, r = 1.0, r_plus
            else:
                sign, r = -1.0, r_minus
            _draw_centre(rng, x, r, sign, d, z)
            if rng.random() >= u:
                continue
            _draw_in_ball(rng, z, r, d, y)
            for i in range(d):
                x[i] = y[i]
        for i in range(d):
            out[k, i] = x[i]
    return out


@njit(cache=True, nogil=True)
def first_entry_positions(rng, ys, r_plus, r_minus, u, band, reps, max_jumps):
    """Mean and squared-error of the entry position into [-band, band].

    For each start y (outside the band) runs ``reps`` lineages until the
    first jump landing inside the band and averages the landing position.
    First-entry times of the unbiased walk have infinite mean, so a run
    exceeding ``max_jumps`` jumps is discarded and restarted (conditioning
    on entry within the cap); the fraction of restarts is returned so the
    caller can bound the truncation bias.  Returns (mean, sem2, cap_frac).
    """
    n = ys.shape[0]
    mean = np.empty(n)
    sem2 = np.empty(n)
    cap_frac = np.empty(n)
    x = np.empty(1)
    z = np.empty(1)
    w = np.empty(1)
    for j in range(n):
        acc = 0.0
        acc2 = 0.0
        capped = 0
        for k in range(reps):
            x[0] = ys[j]
            jumps = 0
            while np.abs(x[0]) > band:
                if jumps >= max_jumps:
                    x[0] = ys[j]
                    jumps = 0
                    capped += 1
                    continue
                rate_p = _cap_fraction(x[0], r_plus, 1.0, 1)
                rate_m = _cap_fraction(x[0], r_minus, -1.0, 1)
                lam = rate_p + rate_m
                if rng.random() * lam < rate_p:
                    sign, r = 1.0, r_plus
                else:
                    sign, r = -1.0, r_minus
                _draw_centre(rng, x, r, sign, 1, z)
                if rng.random() >= u:
                    continue
                _draw_in_ball(rng, z, r, 1, w)
                x[0] = w[0]
                jumps += 1
            acc += x[0]
            acc2 += x[0] * x[0]
        mu = acc / reps
        var = max(0.0, acc2 / reps - mu * mu)
        mean[j] = mu
        sem2[j] = var / reps
        cap_frac[j] = capped / (reps + capped)
    return mean, sem2, cap_frac


@njit(cache=True, nogil=True)
def dual_pair_batch(rng, x1, x2, horizon, r_plus, r_minus, u, nrep):
    """Onset and coalescence times of a two-particle dual system.

    Onset is the first time the particles come within 2 r_plus of each other;
    simulation stops at coalescence (both marked by one event) or horizon.
    Entries are +inf when the corresponding epoch did not occur.
    """
    d = x1.shape[0]
    onset = np.full(nrep, np.inf)
    coal = np.full(nrep, np.inf)
    a = np.empty(d)
    b = np.empty(d)
    z = np.empty(d)
    y = np.empty(d)
    thresh2 = 4.0 * r_plus * r_plus
    for k in range(nrep):
        for i in range(d):
            a[i] = x1[i]
            b[i] = x2[i]
        t = 0.0
        g2 = 0.0
        for i in range(d):
            g2 += (a[i] - b[i]) ** 2
        if g2 <= thresh2:
            onset[k] = 0.0
        while True:
            ra_p = _cap_fraction(a[0], r_plus, 1.0, d)
            ra_m = _cap_fraction(a[0], r_minus, -1.0, d)
            rb_p = _cap_fraction(b[0], r_plus, 1.0, d)
            rb_m = _cap_fraction(b[0], r_minus, -1.0, d)
            total = ra_p + ra_m + rb_p + rb_m
            t += -np.log1p(-rng.random()) / total
            if t >= horizon:
                break
            pick = rng.random() * total
            if pick < ra_p:
                host, sign, r = 0, 1.0, r_plus
            elif pick < ra_p + ra_m:
                host, sign, r = 0, -1.0, r_minus
            elif pick < ra_p + ra_m + rb_p:
                host, sign, r = 1, 1.0, r_plus
            else:
                host, sign, r = 1, -1.0, r_minus
            if host == 0:
                _draw_centre(rng, a, r, sign, d, z)
            else:
                _draw_centre(rng, b, r, sign, d, z)
            da = 0.0
            db = 0.0
            for i in range(d):
                da += (a[i] - z[i]) ** 2
                db += (b[i] - z[i]) ** 2
            cov_a = da < r * r
            cov_b = db < r * r
            mult = (1 if cov_a else 0) + (1 if cov_b else 0)
            if mult > 1:
                if rng.random() >= 1.0 / mult:
                    continue
            mark_a = cov_a and rng.random() < u
            mark_b = cov_b and rng.random() < u
            if not (mark_a or mark_b):
                continue
            _draw_in_ball(rng, z, r, d, y)
            if mark_a:
                for i in range(d):
                    a[i] = y[i]
            if mark_b:
                for i in range(d):
                    b[i] = y[i]
            if mark_a and mark_b:
                if np.isinf(onset[k]):
                    onset[k] = t
                coal[k] = t
                break
            g2 = 0.0
            for i in range(d):
                g2 += (a[i] - b[i]) ** 2
            if g2 <= thresh2 and np.isinf(onset[k]):
                onset[k] = t
    return onset, coal


@njit(cache=True, nogil=True)
def forward_kernel(rng, values, origin, h, lo, hi, r_plus, r_minus, u,
                   snap_times, out):
    """Event loop of the forward allele field on the window [lo, hi].

    Snapshots are taken at ``snap_times`` (state strictly before any event at
    the same instant); the loop ends after the last snapshot.  Event balls
    reaching outside the window are renormalised to their in-window part,
    confining truncation bias to an r_plus collar at the edges.
    Returns the number of events applied.
    """
    ncell = values.shape[0]
    rate_p = max(0.0, hi - max(lo, 0.0)) / (2.0 * r_plus)
    rate_m = max(0.0, min(hi, 0.0) - lo) / (2.0 * r_minus)
    lam = rate_p + rate_m
    horizon = snap_times[-1]
    t = 0.0
    si = 0
    n_events = 0
    while True:
        t_new = t + -np.log1p(-rng.random()) / lam
        while si < snap_times.shape[0] and snap_times[si] <= t_new:
            for i in range(ncell):
                out[si, i] = values[i]
            si += 1
        if si >= snap_times.shape[0] or t_new >= horizon:
            return n_events
        if rng.random() * lam < rate_p:
            r = r_plus
            c0 = max(lo, 0.0)
            c = c0 + rng.random() * (hi - c0)
        else:
            r = r_minus
            c1 = min(hi, 0.0)
            c = lo + rng.random() * (c1 - lo)
        bl = c - r
        br = c + r
        # overlap-weighted mean over the in-window part of the ball
        i0 = int(np.floor((bl - origin) / h))
        i1 = int(np.ceil((br - origin) / h))
        if i0 < 0:
            i0 = 0
        if i1 > ncell:
            i1 = ncell
        acc = 0.0
        wsum = 0.0
        for i in range(i0, i1):
            e_lo = origin + i * h
            e_hi = e_lo + h
            wlo = bl if bl > e_lo else e_lo
            whi = br if br < e_hi else e_hi
            w = whi - wlo
            if w > 0.0:
                acc += w * values[i]
                wsum += w
        mean = acc / wsum if wsum > 0.0 else 0.0
        k = 1.0 if rng.random() < mean else 0.0
        # replace on cells whose centre lies in the ball
        j0 = int(np.ceil((bl - origin) / h - 0.5))
        j1 = int(np.floor((br - origin) / h - 0.5))
        if j0 < 0:
            j0 = 0
        if j1 > ncell - 1:
            j1 = ncell - 1
        for i in range(j0, j1 + 1):
            values[i] = (1.0 - u) * values[i] + u * k
        t = t_new
        n_events += 1
