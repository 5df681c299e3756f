"""The switched process ``Y_t = (x_t, Z_t)``.

Switches happen at every multiple of the period ``h``. At a switch time
``n h`` the recorded state is the one *after* the switch, while the position
is the (continuous) endpoint of the previous flow.

A process observed at phase ``t0`` in ``[0, h)`` sees its next switch after
``h - t0`` time units; one step of the embedded chain at that phase maps
``(x, i)`` to ``(phi_j(t0, phi_i(h - t0, x)), j)`` with probability
``Q[i, j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import rng
from .errors import IndexOutOfRangeError, NodeBudgetExceededError, SizeMismatchError
from .flow import IntegratorSettings, VectorFieldFamily, flow_durations, flow_map, flow_offsets
from .markov import TransitionMatrix, sample_next_many, validate
from .parallel import map_chunks

DEFAULT_MAX_NODES = 10**6
TIME_TOL = 1e-9


class HybridState:
    """A position paired with a switching-state index."""

    __slots__ = ("_x", "state")

    def __init__(self, x, state: int):
        x = np.array(x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("position must be finite")
        x.setflags(write=False)
        self._x = x
        self.state = int(state)

    @property
    def x(self) -> np.ndarray:
        return self._x

    def __eq__(self, other):
        if not isinstance(other, HybridState):
            return NotImplemented
        return self.state == other.state and np.array_equal(self._x, other._x)

    def __hash__(self):
        return hash((self._x.tobytes(), self.state))

    def __repr__(self):
        return f"HybridState(x={self._x.tolist()}, state={self.state})"


@dataclass(frozen=True)
class HybridSystemSpec:
    fields: VectorFieldFamily
    Q: TransitionMatrix
    h: float = 1.0
    box: np.ndarray = None
    integrator: IntegratorSettings = None
    bins: tuple = None
    name: str = "custom"
    initial: HybridState | None = None

    def __post_init__(self):
        q = validate(self.Q)
        object.__setattr__(self, "Q", q)
        if q.size != self.fields.n_states:
            raise SizeMismatchError(
                f"Q has {q.size} states but the vector-field family has {self.fields.n_states}"
            )
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("period h must be positive and finite")
        box = self.box
        if box is None:
            box = [[-1.0, 1.0]] * self.fields.dim
        box = np.array(box, dtype=float).reshape(self.fields.dim, 2)
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("box must satisfy lo < hi on every axis")
        box.setflags(write=False)
        object.__setattr__(self, "box", box)
        integ = self.integrator or IntegratorSettings(step_size=self.h / 100)
        if integ.step_size > self.h * (1 + 1e-12):
            raise ValueError("integrator step must not exceed the switching period h")
        object.__setattr__(self, "integrator", integ)
        bins = self.bins
        if bins is None:
            bins = (200,) if self.fields.dim == 1 else (100,) * self.fields.dim
        bins = tuple(int(b) for b in np.broadcast_to(bins, (self.fields.dim,)))
        if any(b < 1 for b in bins):
            raise ValueError("bins must be positive")
        object.__setattr__(self, "bins", bins)

    @property
    def dim(self) -> int:
        return self.fields.dim

    @property
    def n_states(self) -> int:
        return self.Q.size

    def check_state(self, y: HybridState) -> HybridState:
        if y.x.shape != (self.dim,):
            raise SizeMismatchError(f"position must have {self.dim} coordinates")
        if not 0 <= y.state < self.n_states:
            raise IndexOutOfRangeError(y.state, self.n_states)
        return y

    def flow(self, x, s, duration: float) -> np.ndarray:
        return flow_map(self.fields, x, s, duration, self.integrator)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    positions: np.ndarray
    sample_dt: float
    seed: int
    stream: int = 0

    def __len__(self):
        return len(self.times)

    @property
    def samples(self) -> list[tuple[float, HybridState]]:
        return [
            (float(t), HybridState(x, s))
            for t, s, x in zip(self.times, self.states, self.positions)
        ]


def period_index(t, h: float):
    """Switching period containing time ``t``; multiples of ``h`` open a new period."""
    return np.floor(np.asarray(t) / h + TIME_TOL).astype(np.int64)


def draw_states(q: TransitionMatrix, s0: int, n_periods: int, seed: int, stream: int = 0) -> np.ndarray:
    """State of each period ``0 .. n_periods - 1``; period ``n`` uses draw step ``n``."""
    out = np.empty(n_periods, dtype=np.int64)
    if n_periods == 0:
        return out
    u = rng.uniforms(seed, stream, np.arange(n_periods, dtype=np.uint64))
    cum = q.cumulative
    s = int(s0)
    out[0] = s
    for n in range(1, n_periods):
        s = int(np.searchsorted(cum[s], u[n], side="right"))
        out[n] = s
    return out


def simulate(
    spec: HybridSystemSpec,
    y0: HybridState,
    t_end: float,
    sample_dt: float,
    seed: int,
    stream: int = 0,
) -> Trajectory:
    """One random trajectory sampled every ``sample_dt`` on ``[0, t_end]``.

    Switch draws come from the counter-based generator keyed by
    ``(seed, stream, period)``, so equal arguments give identical output and a
    longer ``t_end`` only appends samples.
    """
    spec.check_state(y0)
    if t_end < 0 or sample_dt <= 0:
        raise ValueError("need t_end >= 0 and sample_dt > 0")
    n_samples = int(math.floor(t_end / sample_dt + TIME_TOL)) + 1
    times = np.arange(n_samples) * sample_dt
    periods = period_index(times, spec.h)
    n_periods = int(periods[-1]) + 1
    states = draw_states(spec.Q, y0.state, n_periods, seed, stream)
    starts = np.empty((n_periods, spec.dim))
    starts[0] = y0.x
    for p in range(1, n_periods):
        starts[p] = spec.flow(starts[p - 1], states[p - 1], spec.h)
    offsets = np.maximum(times - periods * spec.h, 0.0)
    positions = flow_durations(spec.fields, starts[periods], states[periods], offsets, spec.integrator)
    return Trajectory(times, states[periods], positions, sample_dt, seed, stream)


def iterate_periods(
    spec: HybridSystemSpec,
    x: np.ndarray,
    s: np.ndarray,
    seed: int,
    streams: np.ndarray,
    n_periods: int,
    first_step: int = 1,
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Advance a batch of independent trajectories one switching period at a time.

    Yields ``(k, x, s)`` at the start of period ``k`` (positions ``(n, d)``,
    states ``(n,)``) for ``k = 0 .. n_periods - 1``. The switch that opens
    period ``k + 1`` uses draw step ``first_step + k``.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=np.intp)
    streams = np.asarray(streams, dtype=np.uint64)
    block = max(1, 65536 // max(1, len(streams)))
    u = None
    for k in range(n_periods):
        yield k, x, s
        if k + 1 < n_periods:
            if k % block == 0:
                steps = first_step + k + np.arange(min(block, n_periods - 1 - k), dtype=np.uint64)
                u = rng.uniforms(seed, streams[:, None], steps[None, :])
            x = spec.flow(x, s, spec.h)
            s = sample_next_many(spec.Q, s, u[:, k % block])


# ---------------------------------------------------------------------------
# embedded chain and exact enumeration


def _check_phase(spec: HybridSystemSpec, t0: float) -> float:
    t0 = float(t0)
    if not 0 <= t0 < spec.h:
        raise ValueError(f"phase t0 must lie in [0, h={spec.h}), got {t0}")
    return t0


def embedded_outcomes(spec: HybridSystemSpec, x: np.ndarray, s: np.ndarray, t0: float):
    """All one-step outcomes for a batch of states.

    Returns positions ``(n, |S|, d)`` and probabilities ``(n, |S|)``; column
    ``j`` holds the outcome that switches into state ``j``.
    """
    x = np.asarray(x, dtype=float).reshape(-1, spec.dim)
    s = np.asarray(s, dtype=np.intp)
    mid = spec.flow(x, s, spec.h - t0)
    out = np.empty((x.shape[0], spec.n_states, spec.dim))
    for j in range(spec.n_states):
        out[:, j, :] = spec.flow(mid, j, t0) if t0 > 0 else mid
    return out, spec.Q.matrix[s]


def embedded_step(spec: HybridSystemSpec, y: HybridState, t0: float = 0.0) -> list[tuple[HybridState, float]]:
    """One step of the embedded chain at phase ``t0``.

    Outcomes with zero switching probability are omitted.
    """
    spec.check_state(y)
    t0 = _check_phase(spec, t0)
    pos, prob = embedded_outcomes(spec, y.x[None, :], np.array([y.state]), t0)
    return [
        (HybridState(pos[0, j], j), float(prob[0, j]))
        for j in range(spec.n_states)
        if prob[0, j] > 0
    ]


@dataclass
class SpiderLevel:
    positions: np.ndarray
    states: np.ndarray
    probs: np.ndarray
    parents: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass
class SpiderTree:
    root: HybridState
    t0: float
    levels: list[SpiderLevel] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def leaves(self) -> SpiderLevel:
        return self.levels[-1]

    def level_sums(self) -> np.ndarray:
        return np.array([lvl.probs.sum() for lvl in self.levels])

    def paths(self) -> Iterator[list[int]]:
        """Node indices from root to each leaf (one list per leaf)."""
        for leaf in range(len(self.leaves)):
            path = [leaf]
            for lvl in reversed(self.levels[1:]):
                path.append(int(lvl.parents[path[-1]]))
            yield path[::-1]


def spider(
    spec: HybridSystemSpec,
    y0: HybridState,
    t0: float = 0.0,
    depth: int = 1,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> SpiderTree:
    """Enumerate every switching branch for ``depth`` periods.

    Coincident branches are never merged; zero-probability branches are not
    expanded. Raises :class:`NodeBudgetExceededError` when ``|S|**depth``
    exceeds ``max_nodes``.
    """
    spec.check_state(y0)
    t0 = _check_phase(spec, t0)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    required = spec.n_states**depth
    if required > max_nodes:
        raise NodeBudgetExceededError(required, max_nodes)
    tree = SpiderTree(root=y0, t0=t0)
    tree.levels.append(
        SpiderLevel(y0.x[None, :].copy(), np.array([y0.state]), np.ones(1), np.array([-1]))
    )
    for _ in range(depth):
        cur = tree.levels[-1]
        pos, prob = embedded_outcomes(spec, cur.positions, cur.states, t0)
        keep = prob > 0
        parent_idx, child_state = np.nonzero(keep)
        tree.levels.append(
            SpiderLevel(
                positions=pos[parent_idx, child_state],
                states=child_state.astype(np.intp),
                probs=cur.probs[parent_idx] * prob[parent_idx, child_state],
                parents=parent_idx,
            )
        )
    return tree


def _apply(f: Callable, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(x, s), dtype=float)
    return np.broadcast_to(vals, (len(s),))


def markov_operator(
    spec: HybridSystemSpec,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    y: HybridState,
    n: int,
    t0: float = 0.0,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> float:
    """Exact expectation of ``f`` after ``n`` embedded steps from ``y``.

    ``f(x, s)`` is called on batches: positions ``(m, d)`` and states
    ``(m,)``; it may return a scalar for a constant function.
    """
    leaves = spider(spec, y, t0, n, max_nodes).leaves
    return float(np.dot(leaves.probs, _apply(f, leaves.positions, leaves.states)))


def sample_embedded(
    spec: HybridSystemSpec,
    y: HybridState,
    t0: float,
    n: int,
    n_traj: int,
    seed: int,
    threads: int | None = None,
    chunk: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo counterpart of :func:`spider`: ``n_traj`` random outcomes after ``n`` steps.

    Trajectory ``k`` is stream ``k`` of the counter-based generator, so the
    result is independent of chunking and thread count.
    """
    spec.check_state(y)
    t0 = _check_phase(spec, t0)

    def run(a, b):
        streams = np.arange(a, b, dtype=np.uint64)
        x = np.repeat(y.x[None, :], b - a, axis=0)
        s = np.full(b - a, y.state, dtype=np.intp)
        for step in range(1, n + 1):
            x = spec.flow(x, s, spec.h - t0)
            s = sample_next_many(spec.Q, s, rng.uniforms(seed, streams, step))
            if t0 > 0:
                x = spec.flow(x, s, t0)
        return x, s

    parts = map_chunks(run, n_traj, chunk, threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
