"""Grid measures on ``M x S`` and their transport.

A :class:`GridMeasure` stores one weight sheet per switching state on a
rectangular grid over the domain box, plus an overflow weight for mass that
left the box. It also remembers the phase ``t0`` at which it describes the
process, which is what makes :func:`pushforward` composable.

Transport is Ulam-style: the mass of each cell is carried by a small
lattice of representative points inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridMismatchError
from .hybrid import (
    TIME_TOL,
    HybridState,
    HybridSystemSpec,
    _check_phase,
    embedded_outcomes,
    iterate_periods,
)
from .flow import flow_offsets

MASS_TOL = 1e-9


def _box_bins(box, bins, dim=None):
    box = np.array(box, dtype=float).reshape(-1, 2)
    bins = tuple(int(b) for b in np.broadcast_to(bins, (box.shape[0],)))
    if dim is not None and box.shape[0] != dim:
        raise GridMismatchError(f"box has {box.shape[0]} axes, system has {dim}")
    return box, bins


def bin_index(box: np.ndarray, bins: tuple, x: np.ndarray) -> np.ndarray:
    """Flat (C-order) cell index of each point, ``-1`` outside the box.

    Cells are half-open except the last one on each axis, which includes the
    upper edge.
    """
    x = np.asarray(x, dtype=float).reshape(-1, box.shape[0])
    lo, hi = box[:, 0], box[:, 1]
    nb = np.asarray(bins)
    inside = np.all((x >= lo) & (x <= hi), axis=1)
    with np.errstate(invalid="ignore"):
        idx = np.floor((x - lo) / (hi - lo) * nb).astype(np.int64)
    idx = np.clip(idx, 0, nb - 1)
    flat = np.ravel_multi_index(tuple(idx.T), bins) if len(x) else np.empty(0, np.int64)
    return np.where(inside, flat, -1)


def cell_centers(box: np.ndarray, bins: tuple) -> np.ndarray:
    """Centers of all cells in flat index order, shape ``(n_cells, d)``."""
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for (lo, hi), n in zip(box, bins)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def cell_widths(box: np.ndarray, bins: tuple) -> np.ndarray:
    return (box[:, 1] - box[:, 0]) / np.asarray(bins)


@dataclass
class GridMeasure:
    box: np.ndarray
    bins: tuple
    sheets: np.ndarray
    overflow: float = 0.0
    t0: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        self.box, self.bins = _box_bins(self.box, self.bins)
        self.sheets = np.asarray(self.sheets, dtype=float)
        if self.sheets.shape[1:] != self.bins:
            raise GridMismatchError(f"sheet shape {self.sheets.shape[1:]} does not match bins {self.bins}")
        self.overflow = float(self.overflow)

    @property
    def n_states(self) -> int:
        return self.sheets.shape[0]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.bins))

    def total_mass(self) -> float:
        return float(self.sheets.sum() + self.overflow)

    def state_masses(self) -> np.ndarray:
        return self.sheets.reshape(self.n_states, -1).sum(axis=1)

    def check(self, tol: float = MASS_TOL) -> "GridMeasure":
        if np.any(self.sheets < 0) or self.overflow < 0:
            raise ValueError("measure weights must be nonnegative")
        if abs(self.total_mass() - 1.0) > tol:
            raise ValueError(f"measure mass is {self.total_mass()!r}, expected 1")
        return self

    def centers(self) -> np.ndarray:
        return cell_centers(self.box, self.bins)

    def widths(self) -> np.ndarray:
        return cell_widths(self.box, self.bins)

    @classmethod
    def empty(cls, box, bins, n_states: int, t0: float = 0.0, h: float = 1.0) -> "GridMeasure":
        box, bins = _box_bins(box, bins)
        return cls(box, bins, np.zeros((n_states, *bins)), 0.0, t0, h)

    @classmethod
    def from_samples(cls, box, bins, positions, states, n_states: int, t0=0.0, h=1.0) -> "GridMeasure":
        """Normalized histogram of sampled hybrid states."""
        mu = cls.empty(box, bins, n_states, t0, h)
        counts, outside = _count(mu.box, mu.bins, n_states, positions, states)
        total = counts.sum() + outside
        mu.sheets = counts.reshape(mu.sheets.shape) / total
        mu.overflow = outside / total
        return mu

    @classmethod
    def point_mass(cls, box, bins, y: HybridState, n_states: int, t0=0.0, h=1.0) -> "GridMeasure":
        return cls.from_samples(box, bins, y.x[None, :], np.array([y.state]), n_states, t0, h)

    @classmethod
    def for_system(cls, spec: HybridSystemSpec, t0: float = 0.0) -> "GridMeasure":
        return cls.empty(spec.box, spec.bins, spec.n_states, t0, spec.h)


@dataclass
class MarginalMeasure:
    box: np.ndarray
    bins: tuple
    weights: np.ndarray
    overflow: float = 0.0
    t0: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        self.box, self.bins = _box_bins(self.box, self.bins)
        self.weights = np.asarray(self.weights, dtype=float)
        self.overflow = float(self.overflow)

    def total_mass(self) -> float:
        return float(self.weights.sum() + self.overflow)

    def centers(self) -> np.ndarray:
        return cell_centers(self.box, self.bins)


def _count(box, bins, n_states, positions, states):
    n_cells = int(np.prod(bins))
    idx = bin_index(box, bins, positions)
    states = np.asarray(states, dtype=np.int64)
    inside = idx >= 0
    counts = np.bincount(states[inside] * n_cells + idx[inside], minlength=n_states * n_cells)
    return counts.astype(float), float(np.count_nonzero(~inside))


def _deposit(mu: GridMeasure, positions, states, weights) -> None:
    n_cells = mu.n_cells
    idx = bin_index(mu.box, mu.bins, positions)
    inside = idx >= 0
    flat = mu.sheets.reshape(-1)
    flat += np.bincount(
        np.asarray(states, dtype=np.int64)[inside] * n_cells + idx[inside],
        weights=weights[inside],
        minlength=flat.size,
    )
    mu.overflow += float(weights[~inside].sum())


# ---------------------------------------------------------------------------
# empirical estimation


DEFAULT_REFINE = {1: 16, 2: 2}


def default_refine(dim: int) -> int:
    return DEFAULT_REFINE.get(dim, 1)


def phase_family(
    spec: HybridSystemSpec,
    y0: HybridState,
    phases,
    burn_in: int = 1000,
    n_samples: int = 100_000,
    seed: int = 0,
    box=None,
    bins=None,
    n_chains: int = 1,
    refine: int = 1,
) -> list[GridMeasure]:
    """Empirical phase-indexed measures from one shared simulation pass.

    Every chain starts at ``y0`` (chain ``c`` uses random stream ``c``),
    discards ``burn_in`` switching periods, and then records its hybrid state
    at ``t0 + k h`` for each requested phase and ``k = 1, 2, ...``. Samples
    are taken period-major across chains until ``n_samples`` per phase are
    collected. ``n_chains=1`` is a single long trajectory.

    With ``refine > 1`` the histograms use ``refine`` times more bins per
    axis; :func:`coarsen` brings them back to the requested grid.
    """
    spec.check_state(y0)
    phases = [_check_phase(spec, t0) for t0 in phases]
    if n_samples < 1 or burn_in < 0 or n_chains < 1 or refine < 1:
        raise ValueError("need n_samples >= 1, burn_in >= 0, n_chains >= 1, refine >= 1")
    box, bins = _box_bins(spec.box if box is None else box, spec.bins if bins is None else bins, spec.dim)
    bins = tuple(b * refine for b in bins)
    order = np.argsort(phases, kind="stable")
    sorted_phases = np.asarray(phases)[order]
    n_cells = int(np.prod(bins))
    counts = np.zeros((len(phases), spec.n_states * n_cells))
    outside = np.zeros(len(phases))
    buf_x: list[np.ndarray] = []
    buf_s: list[np.ndarray] = []

    def flush():
        if not buf_s:
            return
        xs = np.concatenate(buf_x, axis=1)
        ss = np.concatenate(buf_s)
        for slot, p in enumerate(order):
            idx = bin_index(box, bins, xs[slot])
            inside = idx >= 0
            counts[p] += np.bincount(ss[inside] * n_cells + idx[inside], minlength=counts.shape[1])
            outside[p] += np.count_nonzero(~inside)
        buf_x.clear()
        buf_s.clear()

    per_chain = math.ceil(n_samples / n_chains)
    n_periods = burn_in + per_chain + 1
    x0 = np.repeat(y0.x[None, :], n_chains, axis=0)
    s0 = np.full(n_chains, y0.state, dtype=np.intp)
    streams = np.arange(n_chains, dtype=np.uint64)
    remaining, buffered = n_samples, 0
    for k, x, s in iterate_periods(spec, x0, s0, seed, streams, n_periods):
        if k <= burn_in:
            continue
        take = min(remaining, n_chains)
        buf_x.append(flow_offsets(spec.fields, x[:take], s[:take], sorted_phases, spec.integrator))
        buf_s.append(s[:take].astype(np.int64))
        buffered += take
        remaining -= take
        if buffered >= 65536:
            flush()
            buffered = 0
        if remaining == 0:
            break
    flush()
    return [
        GridMeasure(box, bins, (counts[p] / n_samples).reshape(spec.n_states, *bins),
                    outside[p] / n_samples, phases[p], spec.h)
        for p in range(len(phases))
    ]


def empirical_measure(
    spec: HybridSystemSpec,
    y0: HybridState,
    t0: float = 0.0,
    burn_in: int = 1000,
    n_samples: int = 100_000,
    seed: int = 0,
    box=None,
    bins=None,
    n_chains: int = 1,
    refine: int = 1,
) -> GridMeasure:
    """Empirical invariant measure of the embedded chain at phase ``t0``."""
    return phase_family(spec, y0, [t0], burn_in, n_samples, seed, box, bins, n_chains, refine)[0]


def coarsen(mu: GridMeasure, factor: int) -> GridMeasure:
    """Merge blocks of ``factor`` cells per axis; mass is preserved exactly."""
    if factor == 1:
        return mu
    if any(b % factor for b in mu.bins):
        raise GridMismatchError(f"bins {mu.bins} are not divisible by {factor}")
    coarse = tuple(b // factor for b in mu.bins)
    shape = [mu.n_states]
    for b in coarse:
        shape += [b, factor]
    sheets = mu.sheets.reshape(shape).sum(axis=tuple(range(2, 2 * len(coarse) + 1, 2)))
    return replace(mu, bins=coarse, sheets=sheets)


def marginalize(mu: GridMeasure) -> MarginalMeasure:
    """Project onto positions by summing the state sheets."""
    return MarginalMeasure(mu.box, mu.bins, mu.sheets.sum(axis=0), mu.overflow, mu.t0, mu.h)


# ---------------------------------------------------------------------------
# transport


DEFAULT_SUBDIVISIONS = {1: 4, 2: 2}


def _subdivisions(dim: int, subdivisions: int | None) -> int:
    if subdivisions is None:
        return DEFAULT_SUBDIVISIONS.get(dim, 2)
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    return int(subdivisions)


def _support(mu: GridMeasure, subdivisions: int = 1):
    """Representative points of all occupied cells with their weights.

    Each cell is split into ``subdivisions`` equal parts per axis and every
    part carries an equal share of the cell's mass from its own center.
    """
    flat = mu.sheets.reshape(mu.n_states, -1)
    states, cells = np.nonzero(flat > 0)
    pos, w = mu.centers()[cells], flat[states, cells]
    k = subdivisions
    if k == 1:
        return pos, states, w
    d = mu.box.shape[0]
    frac = (np.arange(k) + 0.5) / k - 0.5
    offsets = np.stack(np.meshgrid(*([frac] * d), indexing="ij"), axis=-1).reshape(-1, d)
    offsets = offsets * mu.widths()
    n_sub = len(offsets)
    pos = (pos[:, None, :] + offsets[None, :, :]).reshape(-1, d)
    return pos, np.repeat(states, n_sub), np.repeat(w / n_sub, n_sub)


def _transfer(spec: HybridSystemSpec, mu: GridMeasure, subdivisions: int) -> GridMeasure:
    """One full period at the measure's phase, branching over every switch."""
    pos, states, w = _support(mu, subdivisions)
    out = replace(mu, sheets=np.zeros_like(mu.sheets))
    if len(w):
        targets, probs = embedded_outcomes(spec, pos, states, mu.t0)
        for j in range(spec.n_states):
            wj = w * probs[:, j]
            keep = wj > 0
            _deposit(out, targets[keep, j], np.full(keep.sum(), j), wj[keep])
    return out


def _fractional(spec: HybridSystemSpec, mu: GridMeasure, r: float, subdivisions: int) -> GridMeasure:
    """Advance by ``r < h``; branches only if a switch time is crossed."""
    pos, states, w = _support(mu, subdivisions)
    to_switch = spec.h - mu.t0
    new_t0 = mu.t0 + r
    out = replace(mu, sheets=np.zeros_like(mu.sheets))
    if new_t0 < spec.h * (1 - TIME_TOL):
        if len(w):
            _deposit(out, spec.flow(pos, states, r), states, w)
        out.t0 = new_t0
        return out
    new_t0 = max(0.0, new_t0 - spec.h)
    if len(w):
        mid = spec.flow(pos, states, to_switch)
        probs = spec.Q.matrix[states]
        for j in range(spec.n_states):
            wj = w * probs[:, j]
            keep = wj > 0
            dest = spec.flow(mid[keep], j, new_t0) if new_t0 > 0 else mid[keep]
            _deposit(out, dest, np.full(keep.sum(), j), wj[keep])
    out.t0 = new_t0
    return out


def pushforward(
    spec: HybridSystemSpec, mu: GridMeasure, t: float, subdivisions: int | None = None
) -> GridMeasure:
    """Transport ``mu`` forward by ``t`` time units.

    ``t = m h + r``: ``m`` full-period transfers at the measure's phase, then
    a deterministic flow of ``r`` (with branching if the flow passes a switch
    time). The result carries phase ``(t0 + r) mod h``. Overflow mass stays
    in overflow.

    Mass in a cell is assumed uniform across it and is carried by
    ``subdivisions`` points per axis (default 4 in 1-D, 2 in 2-D); a single
    center point per cell aliases badly under contracting flows.
    """
    k = _subdivisions(spec.dim, subdivisions)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if mu.n_states != spec.n_states or mu.box.shape[0] != spec.dim:
        raise GridMismatchError("measure does not match the system's state count or dimension")
    m = int(math.floor(t / spec.h + TIME_TOL))
    r = t - m * spec.h
    if r < spec.h * TIME_TOL:
        r = 0.0
    out = replace(mu, sheets=mu.sheets.copy())
    for _ in range(m):
        out = _transfer(spec, out, k)
    if r > 0:
        out = _fractional(spec, out, r, k)
    return out


def total_variation(a, b) -> float:
    """Half the L1 distance between two measures on the same grid, overflow included."""
    if type(a) is not type(b):
        raise GridMismatchError("cannot compare a GridMeasure with a MarginalMeasure")
    if a.bins != b.bins or not np.array_equal(a.box, b.box):
        raise GridMismatchError("measures live on different grids")
    wa = a.sheets if isinstance(a, GridMeasure) else a.weights
    wb = b.sheets if isinstance(b, GridMeasure) else b.weights
    if wa.shape != wb.shape:
        raise GridMismatchError("measures have different state counts")
    return float(0.5 * (np.abs(wa - wb).sum() + abs(a.overflow - b.overflow)))


def invariance_report(
    spec: HybridSystemSpec,
    mu: GridMeasure,
    refine: int = 1,
    subdivisions: int | None = None,
) -> float:
    """TV distance between ``mu`` and its one-period push-forward.

    ``mu`` is given at transport resolution; both measures are compared after
    coarsening by ``refine``.
    """
    pushed = pushforward(spec, mu, spec.h, subdivisions)
    return total_variation(coarsen(pushed, refine), coarsen(mu, refine))
