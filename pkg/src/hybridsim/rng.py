"""Counter-based uniforms.

Every draw is a pure function of ``(seed, stream, step)``: the stream is the
trajectory index inside an ensemble and the step is the switching-period
index. Results therefore do not depend on how an ensemble is chunked or
scheduled, and extending a run never changes its prefix.

The mixer is the SplitMix64 finalizer applied in three rounds.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))
_INV53 = 1.0 / float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniforms(seed: int, stream, step) -> np.ndarray:
    """Uniform doubles in [0, 1) keyed by ``(seed, stream, step)``.

    ``stream`` and ``step`` broadcast against each other.
    """
    with np.errstate(over="ignore"):
        s = np.asarray(seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
        a = np.asarray(stream, dtype=np.uint64)
        b = np.asarray(step, dtype=np.uint64)
        z = _mix(s + _GOLDEN)
        z = _mix(z ^ (a * _GOLDEN + _M1))
        z = _mix(z ^ (b * _M2 + _GOLDEN))
    return (z >> _S11).astype(np.float64) * _INV53


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for an independent sub-experiment."""
    z = np.asarray(seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for k in keys:
            z = _mix(z ^ (np.uint64(k) * _GOLDEN + _M2))
    return int(z)
