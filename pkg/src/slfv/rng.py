"""Counter-based random number streams.

Every stochastic component draws from a ``numpy.random.Generator`` backed by
Philox, keyed by a (seed, *labels) tuple hashed through SHA-256.  Streams for
distinct purposes are statistically independent and adding a new instrumented
stream never perturbs draws made on existing ones.
"""

import hashlib

import numpy as np

__all__ = ["stream", "stream_key"]


def stream_key(seed, *parts):
    """Derive a 128-bit Philox key from a seed and a sequence of labels.

    Labels may be ints, strings or floats; the encoding is unambiguous so
    distinct label tuples give distinct keys.
    """
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for p in parts:
        if isinstance(p, str):
            b = b"s" + p.encode("utf-8")
        elif isinstance(p, (int, np.integer)):
            b = b"i" + int(p).to_bytes(8, "little", signed=True)
        elif isinstance(p, float):
            b = b"f" + np.float64(p).tobytes()
        else:
            raise TypeError(f"unsupported stream label type: {type(p)!r}")
        h.update(len(b).to_bytes(2, "little"))
        h.update(b)
    return int.from_bytes(h.digest()[:16], "little")


def stream(seed, *parts):
    """Return a fresh Generator for the stream identified by (seed, *parts)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *parts)))
