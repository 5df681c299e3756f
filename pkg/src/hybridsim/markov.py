"""Finite-state Markov chains driving the switching.

Convention: distributions are row vectors and evolve as ``p_next = p @ Q``,
so ``Q[i, j]`` is the probability of switching from state ``i`` to ``j``.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    IndexOutOfRangeError,
    NegativeEntryError,
    NoConvergenceError,
    NonSquareError,
    RowSumError,
)

ROW_SUM_TOL = 1e-9
STATIONARY_TOL = 1e-13
STATIONARY_MAX_ITERS = 10**6


class TransitionMatrix:
    """Validated row-stochastic matrix.

    Construct through :func:`validate`. The underlying array is read-only.
    """

    __slots__ = ("_q", "_cum")

    def __init__(self, q: np.ndarray):
        q = np.array(q, dtype=float)
        q.setflags(write=False)
        self._q = q
        cum = np.cumsum(q, axis=1)
        # Pin each row's CDF to exactly 1 from its last nonzero entry on, so that
        # u in [0, 1) never selects a zero-probability trailing state.
        for i, row in enumerate(q):
            last = np.flatnonzero(row > 0)[-1]
            cum[i, last:] = 1.0
        cum.setflags(write=False)
        self._cum = cum

    @property
    def matrix(self) -> np.ndarray:
        return self._q

    @property
    def cumulative(self) -> np.ndarray:
        return self._cum

    @property
    def size(self) -> int:
        return self._q.shape[0]

    def __getitem__(self, key):
        return self._q[key]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._q, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return np.array_equal(self._q, other._q)

    def __hash__(self):
        return hash(self._q.tobytes())

    def __repr__(self):
        return f"TransitionMatrix({self._q.tolist()})"

    def tolist(self) -> list[list[float]]:
        return self._q.tolist()


def validate(q) -> TransitionMatrix:
    """Check that ``q`` is a transition matrix and return it validated.

    Row sums may be off by up to 1e-9 (hand-typed decimals); rows are then
    renormalized. Raises :class:`NonSquareError`, :class:`NegativeEntryError`
    or :class:`RowSumError`.
    """
    if isinstance(q, TransitionMatrix):
        return q
    arr = np.asarray(q, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise NonSquareError(arr.shape)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NegativeEntryError(int(bad[0]), int(bad[1]), float(arr[tuple(bad)]))
    neg = np.argwhere(arr < 0)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeEntryError(i, j, float(arr[i, j]))
    sums = arr.sum(axis=1)
    for i, total in enumerate(sums):
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise RowSumError(i, float(total))
    return TransitionMatrix(arr / sums[:, None])


def _check_state(q: TransitionMatrix, i) -> int:
    if not (0 <= int(i) < q.size) or int(i) != i:
        raise IndexOutOfRangeError(i, q.size)
    return int(i)


def sample_next(q: TransitionMatrix, i: int, u: float) -> int:
    """Inverse-CDF draw of the next state.

    Returns the smallest ``j`` with ``Q[i, 0] + ... + Q[i, j] > u``.

    >>> q = validate([[.4, .6], [.5, .5]])
    >>> sample_next(q, 0, 0.39), sample_next(q, 0, 0.41)
    (0, 1)
    """
    i = _check_state(q, i)
    return int(np.searchsorted(q.cumulative[i], u, side="right"))


def sample_next_many(q: TransitionMatrix, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sample_next` over paired arrays of states and uniforms."""
    states = np.asarray(states, dtype=np.intp)
    if states.size and (states.min() < 0 or states.max() >= q.size):
        raise IndexOutOfRangeError(int(states[(states < 0) | (states >= q.size)][0]), q.size)
    cum = q.cumulative[states]
    return np.count_nonzero(cum <= np.asarray(u)[..., None], axis=-1)


def n_step_distribution(q: TransitionMatrix, init, n: int) -> np.ndarray:
    """Law of the chain after ``n`` steps from ``init``: ``init @ Q^n``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    p = _as_distribution(init, q.size)
    for _ in range(n):
        p = p @ q.matrix
    return p


def stationary_distribution(
    q: TransitionMatrix,
    tol: float = STATIONARY_TOL,
    max_iters: int = STATIONARY_MAX_ITERS,
) -> np.ndarray:
    """Stationary distribution reached from the uniform start.

    Iterates the lazy kernel ``(I + Q) / 2``, i.e. averages each step with
    the previous iterate. The lazy chain is aperiodic with the same
    stationary vectors as ``Q``, so periodic chains converge too, and the
    rate is geometric. Stops once the L1 change drops below ``tol``.
    """
    m = q.size
    lazy = 0.5 * (np.eye(m) + q.matrix)
    p = np.full(m, 1.0 / m)
    change = np.inf
    for _ in range(max_iters):
        nxt = p @ lazy
        nxt /= nxt.sum()
        change = np.abs(nxt - p).sum()
        p = nxt
        if change < tol:
            break
    else:
        raise NoConvergenceError(max_iters, change)
    # finish with a few plain steps so p @ Q = p holds to rounding
    for _ in range(4):
        p = p @ q.matrix
        p /= p.sum()
    return np.clip(p, 0.0, None)


def _as_distribution(p, size: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (size,):
        raise ValueError(f"distribution must have shape ({size},), got {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("distribution must be nonnegative and sum to 1")
    return p
