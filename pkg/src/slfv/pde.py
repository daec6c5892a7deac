"""Deterministic reference solver for the interface heat equation.

Solves, on a symmetric 1D grid with a node exactly at the interface,

    d rho / dt = sigma_+^2 / 2 * rho_xx   on {x > 0}
    d rho / dt = sigma_-^2 / 2 * rho_xx   on {x < 0}

with rho continuous at 0 and the transmission (flux) condition

    (1 + beta) * rho_x(0+) = (1 - beta) * rho_x(0-),

discretised with one-sided three-point derivative stencils, so the condition
holds exactly (to solver tolerance) at every time step.  Time stepping is
implicit Euler, unconditionally stable and monotone; Heaviside-type initial
data therefore does not oscillate.  An optional geometric ramp of the time
step absorbs the initial-layer error of rough initial data.

Multi-dimensional initial data depending only on x_1 reduces to this solver.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

__all__ = ["GridSpec", "TransmissionGrid", "NumericalFailure", "solve_rho", "green_cdf", "CdfTable"]


class NumericalFailure(RuntimeError):
    """Raised when a solve produces output outside its guaranteed envelope."""


@dataclass(frozen=True)
class GridSpec:
    """Spatial and temporal resolution of a solve.

    xmax      half-width of the domain [-xmax, xmax]
    dx        node spacing; xmax must be an integer multiple of dx
    dt        target (maximal) time step
    dt_init   first step of the geometric ramp (defaults to dt: no ramp)
    grading   ratio of consecutive ramp steps, > 1
    """

    xmax: float
    dx: float
    dt: float
    dt_init: float = None
    grading: float = 1.25

    def __post_init__(self):
        n = self.xmax / self.dx
        if abs(n - round(n)) > 1e-9:
            raise ValueError("xmax must be an integer multiple of dx")
        if self.dt <= 0 or self.dx <= 0 or self.xmax <= 0:
            raise ValueError("xmax, dx and dt must be positive")
        if self.dt_init is not None and not 0 < self.dt_init <= self.dt:
            raise ValueError("dt_init must lie in (0, dt]")
        if self.grading <= 1.0:
            raise ValueError("grading must exceed 1")

    @property
    def half_nodes(self):
        return int(round(self.xmax / self.dx))

    def nodes(self):
        n = self.half_nodes
        return np.arange(-n, n + 1) * self.dx

    def schedule(self, t):
        """Sequence of time steps summing exactly to t."""
        if t == 0:
            return np.empty(0)
        steps = []
        remaining = t
        dt = self.dt if self.dt_init is None else self.dt_init
        while remaining > 1e-15 * t:
            h = min(dt, remaining)
            steps.append(h)
            remaining -= h
            dt = min(self.dt, dt * self.grading)
        out = np.asarray(steps)
        out[-1] += t - out.sum()  # absorb rounding
        return out


@dataclass
class TransmissionGrid:
    """Nodal solution values on the symmetric grid."""

    x: np.ndarray
    rho: np.ndarray
    dx: float
    t: float
    sigma2_plus: float
    sigma2_minus: float
    beta: float

    def __call__(self, xq):
        return np.interp(xq, self.x, self.rho)

    def one_sided_slopes(self):
        """Three-point one-sided derivatives (D+ rho, D- rho) at the interface."""
        n = len(self.x) // 2
        r = self.rho
        dp = (-3.0 * r[n] + 4.0 * r[n + 1] - r[n + 2]) / (2.0 * self.dx)
        dm = (3.0 * r[n] - 4.0 * r[n - 1] + r[n - 2]) / (2.0 * self.dx)
        return dp, dm

    def mass(self):
        return np.trapezoid(self.rho, self.x)


def _row_coefficients(spec, sigma2_plus, sigma2_minus, beta, dt, far_field):
    """Diagonals diag[m][i] = A[i, i+m] of the implicit-Euler matrix."""
    x = spec.nodes()
    n = len(x)
    nc = n // 2
    sig2 = np.where(x > 0, sigma2_plus, sigma2_minus)
    mu = sig2 * dt / (2.0 * spec.dx**2)

    diags = {m: np.zeros(n) for m in (-2, -1, 0, 1, 2)}
    # interior rows
    diags[0][:] = 1.0 + 2.0 * mu
    diags[-1][:] = -mu
    diags[1][:] = -mu
    # interface row: (1+b)(-3 r_N + 4 r_{N+1} - r_{N+2}) - (1-b)(3 r_N - 4 r_{N-1} + r_{N-2}) = 0
    diags[-2][nc] = -(1.0 - beta)
    diags[-1][nc] = 4.0 * (1.0 - beta)
    diags[0][nc] = -6.0
    diags[1][nc] = 4.0 * (1.0 + beta)
    diags[2][nc] = -(1.0 + beta)
    # far boundaries
    for m in diags:
        diags[m][0] = 0.0
        diags[m][n - 1] = 0.0
    if far_field == "dirichlet":
        diags[0][0] = 1.0
        diags[0][n - 1] = 1.0
    elif far_field == "reflecting":
        # one-sided second-order homogeneous Neumann
        diags[0][0] = -3.0
        diags[1][0] = 4.0
        diags[2][0] = -1.0
        diags[0][n - 1] = -3.0
        diags[-1][n - 1] = 4.0
        diags[-2][n - 1] = -1.0
    else:
        raise ValueError(f"unknown far_field mode {far_field!r}")
    return diags


def _band_from_diags_fast(diags, n, transpose=False):
    """solve_banded layout ab[2 + i - j, j] = A[i, j], for A or its transpose."""
    ab = np.zeros((5, n))
    for m in (-2, -1, 0, 1, 2):
        if transpose:
            # A^T[i, i+m] = diags[-m][i+m]
            src = diags[-m]
            if m >= 0:
                vals = src[m:]  # i = 0..n-1-m  -> src[i+m]
                ab[2 - m, m:] = vals
            else:
                vals = src[: n + m]  # i = -m..n-1 -> src[i+m], j = i+m = 0..n-1+m
                ab[2 - m, : n + m] = vals
        else:
            src = diags[m]
            if m >= 0:
                ab[2 - m, m:] = src[: n - m]
            else:
                ab[2 - m, : n + m] = src[-m:]
    return ab


def _check_domain(spec, t, sigma2_plus, sigma2_minus):
    smax = math.sqrt(max(sigma2_plus, sigma2_minus))
    need = 8.0 * smax * math.sqrt(t)
    if spec.xmax < need:
        raise ValueError(
            f"far boundary at {spec.xmax} is closer than 8*sigma_max*sqrt(t) = "
            f"{need:.3g} to the interface; enlarge the domain"
        )


def solve_rho(w0, t, spec, sigma2_plus, sigma2_minus, beta, far_field="dirichlet"):
    """Evolve the nodal representation of w0 to time t.

    ``w0`` is a callable evaluated at the grid nodes.  With Dirichlet far
    fields the boundary values are pinned to w0's values at the domain ends.
    Returns a :class:`TransmissionGrid`.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not -1.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [-1, 1]")
    if t > 0:
        _check_domain(spec, t, sigma2_plus, sigma2_minus)
    x = spec.nodes()
    rho = np.asarray(w0(x), dtype=float).copy()
    if rho.shape != x.shape:
        raise ValueError("w0 must map the node array to an equal-length array")
    n = len(x)
    if t > 0:
        bands = {}
        for dt in spec.schedule(t):
            key = round(float(dt), 15)
            if key not in bands:
                diags = _row_coefficients(spec, sigma2_plus, sigma2_minus, beta, dt, far_field)
                bands[key] = _band_from_diags_fast(diags, n)
            b = rho.copy()
            b[n // 2] = 0.0
            if far_field == "dirichlet":
                b[0] = rho[0]
                b[-1] = rho[-1]
            else:
                b[0] = 0.0
                b[-1] = 0.0
            rho = solve_banded((2, 2), bands[key], b)
    return TransmissionGrid(
        x=x, rho=rho, dx=spec.dx, t=t,
        sigma2_plus=sigma2_plus, sigma2_minus=sigma2_minus, beta=beta,
    )


@dataclass
class CdfTable:
    """Monotone CDF table F(s) on the solver nodes, linearly interpolated."""

    s: np.ndarray
    F: np.ndarray

    def __call__(self, q):
        return np.interp(q, self.s, self.F, left=0.0, right=1.0)

    def quantile(self, p):
        return np.interp(p, self.F, self.s)


def green_cdf(x0, t, spec, sigma2_plus, sigma2_minus, beta, monotone_tol=1e-6):
    """CDF of the limit position at time t started from x0.

    F(s) = rho^{(s)}(t, x0) with initial data 1{x <= s}, for every node
    threshold s simultaneously.  By linearity of the solver this equals the
    inner product of 1{x <= s} with the transposed evolution of a unit mass
    at x0, so a single (transposed) sweep prices all thresholds: one solve
    instead of one per threshold.  Raises :class:`NumericalFailure` if the
    table fails monotonicity beyond ``monotone_tol``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    _check_domain(spec, t, sigma2_plus, sigma2_minus)
    x = spec.nodes()
    n = len(x)
    i0 = int(round((x0 - x[0]) / spec.dx))
    if not 0 <= i0 < n or abs(x[i0] - x0) > 1e-9 + 1e-6 * spec.dx:
        raise ValueError("x0 must coincide with a grid node")

    v = np.zeros(n)
    v[i0] = 1.0
    bands = {}
    # Both rough objects -- the Heaviside data (start of the forward sweep)
    # and the point evaluation (start of the transposed sweep) -- need the
    # small steps of the ramp, so the schedule is mirrored.
    half = spec.schedule(t / 2.0)
    sched = np.concatenate([half, half[::-1]])
    # transposed products compose in reverse order of the forward schedule
    for dt in sched[::-1]:
        key = round(float(dt), 15)
        if key not in bands:
            diags = _row_coefficients(spec, sigma2_plus, sigma2_minus, beta, dt, "dirichlet")
            bands[key] = _band_from_diags_fast(diags, n, transpose=True)
        w = solve_banded((2, 2), bands[key], v)
        # forward step is rho <- A^{-1} P rho with P zeroing the interface row
        # and re-pinning Dirichlet rows from the state; transpose accordingly.
        w[n // 2] = 0.0
        v = w
    F = np.cumsum(v)
    drops = np.diff(F)
    if np.any(drops < -monotone_tol) or F[-1] < 1.0 - 1e-6 or np.any(F < -monotone_tol):
        raise NumericalFailure(
            f"green_cdf table failed monotonicity/normalisation: "
            f"min increment {drops.min():.3g}, total {F[-1]:.9f}"
        )
    F = np.minimum(1.0, np.maximum.accumulate(np.maximum(F, 0.0)))
    return CdfTable(s=x.copy(), F=F)
