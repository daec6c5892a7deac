"""Goodness-of-fit statistics and the pass/fail report rows."""

import math
from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "ks_statistic",
    "ks_statistic_weighted",
    "ks_critical",
    "ks_2samp_statistic",
    "ks_2samp_critical",
    "effective_sample_size",
    "StatReport",
]


def _eval_cdf(cdf, x):
    return np.asarray(cdf(x), dtype=float)


def ks_statistic(sample, cdf):
    """Sup-norm distance between the empirical CDF of a sorted sample and
    a reference CDF (callable or monotone table)."""
    x = np.asarray(sample, dtype=float)
    if len(x) == 0:
        raise ValueError("sample must be nonempty")
    if np.any(np.diff(x) < 0):
        raise ValueError("sample must be sorted")
    f = _eval_cdf(cdf, x)
    n = len(x)
    hi = np.max(np.arange(1, n + 1) / n - f)
    lo = np.max(f - np.arange(0, n) / n)
    return float(max(hi, lo))


def effective_sample_size(weights):
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w**2))


def ks_statistic_weighted(values, weights, cdf):
    """Weighted empirical CDF vs reference; returns (D, effective n)."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(v) == 0:
        raise ValueError("sample must be nonempty")
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w) / w.sum()
    f = _eval_cdf(cdf, v)
    hi = np.max(cum - f)
    lo = np.max(f - np.concatenate(([0.0], cum[:-1])))
    return float(max(hi, lo)), effective_sample_size(w)


def ks_critical(n, level=0.01):
    """Asymptotic one-sample critical value at the given level."""
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c / math.sqrt(n)


def ks_2samp_statistic(a, b):
    """Two-sample sup-norm distance between empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("samples must be nonempty")
    allv = np.concatenate([a, b])
    fa = np.searchsorted(a, allv, side="right") / len(a)
    fb = np.searchsorted(b, allv, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_2samp_critical(n, m, level=0.01):
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt((n + m) / (n * m))


@dataclass
class StatReport:
    """One pass/fail row of a verification suite.

    ``provenance`` tags where the target comes from: PAPER (a claim of the
    source model), TRIVIAL (arithmetic/symmetry) or DERIVED (an independent
    numerical oracle).  ``required`` rows drive the process exit code;
    informational rows document context.
    """

    name: str
    estimate: float
    stderr: float
    target: float
    provenance: str
    tolerance: str
    passed: bool
    required: bool = True

    def to_row(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        req = "" if self.required else " [informational]"
        se = "" if self.stderr is None or not np.isfinite(self.stderr) else f" +-{self.stderr:.3g}"
        return (
            f"[{mark}] {self.name}: estimate={self.estimate:.6g}{se} "
            f"target={self.target:.6g} tol={self.tolerance} ({self.provenance}){req}"
        )
