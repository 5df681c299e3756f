"""Numerical stochastic limit sets and hitting probabilities.

A cell belongs to the estimated limit set when a long trajectory keeps coming
back to it: at least ``revisit_threshold`` visit epochs, where a new epoch
starts once ``h`` time units have passed since the previous one began.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError
from .hybrid import HybridState, HybridSystemSpec, simulate
from .markov import sample_next_many, validate
from .measure import _box_bins, bin_index, cell_centers, cell_widths
from .parallel import map_chunks


@dataclass
class OccupancyGrid:
    box: np.ndarray
    bins: tuple
    h: float
    visits: np.ndarray = None
    epochs: np.ndarray = None
    epoch_start: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.box, self.bins = _box_bins(self.box, self.bins)
        n = int(np.prod(self.bins))
        if self.visits is None:
            self.visits = np.zeros(n, dtype=np.int64)
            self.epochs = np.zeros(n, dtype=np.int64)
            self.epoch_start = np.full(n, -np.inf)

    def add(self, times: np.ndarray, positions: np.ndarray) -> None:
        """Record samples in time order; samples outside the box are ignored."""
        idx = bin_index(self.box, self.bins, positions)
        keep = idx >= 0
        idx, times = idx[keep], np.asarray(times, dtype=float)[keep]
        np.add.at(self.visits, idx, 1)
        h = self.h * (1 - 1e-12)
        start, epochs = self.epoch_start, self.epochs
        for c, t in zip(idx.tolist(), times.tolist()):
            if t - start[c] >= h:
                start[c] = t
                epochs[c] += 1

    def cells(self, revisit_threshold: int) -> np.ndarray:
        return np.flatnonzero(self.epochs >= revisit_threshold)


@dataclass
class LimitSetEstimate:
    box: np.ndarray
    bins: tuple
    cells: np.ndarray
    revisit_threshold: int
    occupancy: OccupancyGrid

    def centers(self) -> np.ndarray:
        return cell_centers(self.box, self.bins)[self.cells]

    def widths(self) -> np.ndarray:
        return cell_widths(self.box, self.bins)

    def __contains__(self, cell) -> bool:
        return int(cell) in set(self.cells.tolist())

    def __len__(self):
        return len(self.cells)


def estimate_limit_set(
    spec: HybridSystemSpec,
    y0: HybridState,
    t_total: float,
    sample_dt: float | None = None,
    burn_in: float = 0.0,
    revisit_threshold: int = 3,
    seed: int = 0,
    box=None,
    bins=None,
) -> LimitSetEstimate:
    """Cells repeatedly revisited by one long trajectory after ``burn_in``.

    Time is sampled continuously (default ``sample_dt = h / 50``) so that
    points reached only between switches are counted too.
    """
    if t_total <= burn_in:
        raise ValueError("t_total must exceed burn_in")
    sample_dt = spec.h / 50 if sample_dt is None else sample_dt
    box, bins = _box_bins(spec.box if box is None else box, spec.bins if bins is None else bins, spec.dim)
    traj = simulate(spec, y0, t_total, sample_dt, seed)
    after = traj.times >= burn_in
    grid = OccupancyGrid(box, bins, spec.h)
    grid.add(traj.times[after], traj.positions[after])
    return LimitSetEstimate(box, bins, grid.cells(revisit_threshold), revisit_threshold, grid)


# ---------------------------------------------------------------------------
# hitting probabilities for the 1-D linear system


def hitting_bound(Q, x_star: float, z0: int, h: float = 1.0) -> tuple[int, float]:
    """Periods needed to fall from 1 to ``x_star`` and a lower bound on doing so.

    States are ordered ``(+1, -1)``. Under ``Z = -1`` a start at ``x = 1``
    follows ``-1 + 2 e^{-t}``, which reaches ``x_star`` after
    ``ln(2 / (x_star + 1))`` time units, i.e. ``k`` whole periods. With
    ``z0`` the state in force just before the first switch, ``k`` consecutive
    ``-1`` periods happen with probability
    ``Q[+1 -> -1] Q[-1 -> -1]^(k-1)`` (``z0 = +1``) or ``Q[-1 -> -1]^k``
    (``z0 = -1``).
    """
    q = validate(Q)
    if q.size != 2:
        raise DomainError("hitting_bound needs the two-state (+1, -1) system")
    if not -1.0 < x_star < 1.0:
        raise DomainError(f"x_star must lie in (-1, 1), got {x_star}")
    if z0 not in (0, 1):
        raise DomainError(f"z0 must be a state index (0 for +1, 1 for -1), got {z0}")
    k = max(1, math.ceil(math.log(2.0 / (x_star + 1.0)) / h - 1e-12))
    stay = q[1, 1]
    p = q[0, 1] * stay ** (k - 1) if z0 == 0 else stay**k
    return k, float(p)


@dataclass
class HittingResult:
    rate: float
    trials: int
    k: int
    m: int
    p_lower: float
    bound: float

    @property
    def standard_error(self) -> float:
        """Binomial standard error of the rate under the bound."""
        return math.sqrt(self.bound * (1.0 - self.bound) / self.trials)

    def passes(self, n_se: float = 4.0) -> bool:
        return self.rate >= self.bound - n_se * self.standard_error


def hitting_experiment(
    spec: HybridSystemSpec,
    x0: float,
    z0: int,
    x_star: float,
    m: int,
    trials: int,
    seed: int = 0,
    threads: int | None = None,
    chunk: int = 50_000,
) -> HittingResult:
    """Fraction of trials that reach ``x_star`` within ``m k`` switching periods.

    ``z0`` is the state before time 0; every trial draws its first period's
    state from row ``z0`` at time 0, matching :func:`hitting_bound`.
    One-dimensional autonomous flows are monotone between switches, so a
    crossing shows up at a period end.
    """
    if spec.dim != 1 or spec.n_states != 2:
        raise DomainError("hitting experiments need a one-dimensional two-state system")
    if m < 1 or trials < 1:
        raise ValueError("need m >= 1 and trials >= 1")
    k, p_lower = hitting_bound(spec.Q, x_star, z0, spec.h)
    n_periods = m * k
    above = x0 >= x_star

    def run(a, b):
        streams = np.arange(a, b, dtype=np.uint64)
        x = np.full((b - a, 1), float(x0))
        s = np.full(b - a, z0, dtype=np.intp)
        hit = np.full(b - a, x0 == x_star)
        for n in range(n_periods):
            s = sample_next_many(spec.Q, s, rng.uniforms(seed, streams, n))
            x = spec.flow(x, s, spec.h)
            hit |= (x[:, 0] <= x_star) if above else (x[:, 0] >= x_star)
        return int(hit.sum())

    hits = sum(map_chunks(run, trials, chunk, threads))
    bound = 1.0 - (1.0 - p_lower) ** m
    return HittingResult(hits / trials, trials, k, m, p_lower, bound)
