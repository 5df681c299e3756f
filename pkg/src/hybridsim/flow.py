"""Deterministic flows of the individual vector fields and their composition.

Vector fields are evaluated in batches: ``field(x, s)`` receives positions of
shape ``(n, d)`` and integer state indices of shape ``(n,)`` and returns the
time derivatives, shape ``(n, d)``. An optional closed-form flow
``analytic(x, s, duration)`` with the same batch layout replaces numerical
integration whenever it is present.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteStateError, SequenceTooShortError

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
AnalyticFn = Callable[[np.ndarray, np.ndarray, object], np.ndarray]


@dataclass(frozen=True)
class VectorFieldFamily:
    """One vector field per switching state."""

    dim: int
    state_values: tuple
    field: FieldFn
    analytic: Optional[AnalyticFn] = None

    @property
    def n_states(self) -> int:
        return len(self.state_values)

    def evaluate(self, x, s) -> np.ndarray:
        """Field value at a single point or a batch of points."""
        xb, sb, single = _batch(x, s, self.dim)
        out = np.asarray(self.field(xb, sb), dtype=float)
        return out[0] if single else out


@dataclass(frozen=True)
class IntegratorSettings:
    step_size: float = 0.01
    method: str = "rk4"

    def __post_init__(self):
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError("step_size must be a positive finite number")
        if self.method != "rk4":
            raise ValueError(f"unsupported integrator method {self.method!r}")


def _batch(x, s, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x).reshape(-1, dim)
    sb = np.broadcast_to(np.asarray(s, dtype=np.intp), (xb.shape[0],))
    return xb, sb, single


def _rk4(field: FieldFn, x: np.ndarray, s: np.ndarray, duration: float, step: float) -> np.ndarray:
    n_steps = max(1, math.ceil(duration / step - 1e-9))
    last = duration - (n_steps - 1) * step
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            dt = step if k < n_steps - 1 else last
            k1 = field(x, s)
            k2 = field(x + 0.5 * dt * k1, s)
            k3 = field(x + 0.5 * dt * k2, s)
            k4 = field(x + dt * k3, s)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def flow_map(
    fields: VectorFieldFamily,
    x,
    s,
    duration: float,
    settings: IntegratorSettings | None = None,
    *,
    use_analytic: bool = True,
) -> np.ndarray:
    """Position after flowing ``duration`` time units in state ``s``.

    ``x`` may be one point ``(d,)`` or a batch ``(n, d)``; ``s`` is a state
    index or an array of them, one per point. Without a closed-form flow the
    field is integrated by fixed-step RK4, the last step shortened to land
    exactly on ``duration``.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    xb, sb, single = _batch(x, s, fields.dim)
    if duration == 0 or xb.shape[0] == 0:
        out = xb.copy()
    elif use_analytic and fields.analytic is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.asarray(fields.analytic(xb, sb, duration), dtype=float)
    else:
        settings = settings or IntegratorSettings()
        out = _rk4(fields.field, xb, sb, float(duration), settings.step_size)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(
            f"flow produced a non-finite state after {duration} time units"
        )
    return out[0] if single else out


def _rk4_each(field: FieldFn, x: np.ndarray, s: np.ndarray, durations: np.ndarray, step: float) -> np.ndarray:
    """RK4 with a separate duration per point, stepping exactly as :func:`_rk4` would."""
    n_steps = np.maximum(1, np.ceil(durations / step - 1e-9)).astype(np.int64)
    last = durations - (n_steps - 1) * step
    x = x.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(int(n_steps.max(initial=0))):
            act = np.flatnonzero(n_steps > k)
            xa, sa = x[act], s[act]
            dt = np.where(k < n_steps[act] - 1, step, last[act])[:, None]
            k1 = field(xa, sa)
            k2 = field(xa + 0.5 * dt * k1, sa)
            k3 = field(xa + 0.5 * dt * k2, sa)
            k4 = field(xa + dt * k3, sa)
            x[act] = xa + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def flow_durations(
    fields: VectorFieldFamily,
    x: np.ndarray,
    s,
    durations,
    settings: IntegratorSettings | None = None,
) -> np.ndarray:
    """Flow each point of a batch ``(n, d)`` for its own duration.

    Row ``i`` equals ``flow_map(fields, x[i], s[i], durations[i], settings)``.
    A closed-form flow receives the durations as an ``(n, 1)`` column.
    """
    xb, sb, _ = _batch(x, s, fields.dim)
    durations = np.asarray(durations, dtype=float).reshape(-1)
    if np.any(durations < 0):
        raise ValueError("durations must be nonnegative")
    out = xb.copy()
    move = np.flatnonzero(durations > 0)
    if move.size:
        if fields.analytic is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                out[move] = fields.analytic(xb[move], sb[move], durations[move, None])
        else:
            settings = settings or IntegratorSettings()
            out[move] = _rk4_each(fields.field, xb[move], sb[move], durations[move], settings.step_size)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("flow produced a non-finite state")
    return out


def flow_offsets(
    fields: VectorFieldFamily,
    x: np.ndarray,
    s,
    offsets: Sequence[float],
    settings: IntegratorSettings | None = None,
) -> np.ndarray:
    """Positions at increasing times ``offsets`` along one flow from ``x``.

    ``x`` is a batch ``(n, d)``; the result has shape ``(len(offsets), n, d)``.
    Numerical flows are integrated segment by segment.
    """
    offsets = np.asarray(offsets, dtype=float)
    xb, sb, _ = _batch(x, s, fields.dim)
    out = np.empty((len(offsets), xb.shape[0], fields.dim))
    if fields.analytic is not None:
        n = xb.shape[0]
        flat = flow_durations(fields, np.tile(xb, (len(offsets), 1)), np.tile(sb, len(offsets)), np.repeat(offsets, n))
        return flat.reshape(len(offsets), n, fields.dim)
    cur, prev = xb, 0.0
    for k, tau in enumerate(offsets):
        cur = flow_map(fields, cur, sb, float(tau - prev), settings)
        out[k] = cur
        prev = tau
    return out


def hybrid_flow(
    fields: VectorFieldFamily,
    x0,
    states: Sequence[int],
    h: float,
    t: float,
    settings: IntegratorSettings | None = None,
) -> np.ndarray:
    """Compose the per-state flows along a given state sequence.

    ``states[k]`` is active on ``[k h, (k + 1) h)``. The flow runs full
    periods for every multiple of ``h`` strictly below ``t``, then the
    remainder in the next state, so ``t = 2h`` with two states uses both.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x0, dtype=float)
    if t == 0:
        return x.copy()
    n_full = max(0, math.ceil(t / h - 1e-12) - 1)
    if len(states) < n_full + 1:
        raise SequenceTooShortError(
            f"need {n_full + 1} states to flow for t={t} with h={h}, got {len(states)}"
        )
    for k in range(n_full):
        x = flow_map(fields, x, states[k], h, settings)
    return flow_map(fields, x, states[n_full], t - n_full * h, settings)


def jacobian(fields: VectorFieldFamily, x, s: int, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the state-``s`` field at ``x``."""
    x = np.asarray(x, dtype=float)
    d = fields.dim
    steps = rel_step * np.maximum(1.0, np.abs(x))
    pts = np.repeat(x[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    pts[2 * idx, idx] += steps
    pts[2 * idx + 1, idx] -= steps
    vals = np.asarray(fields.field(pts, np.full(2 * d, s, dtype=np.intp)), dtype=float)
    return ((vals[0::2] - vals[1::2]) / (2 * steps)[:, None]).T


def find_fixed_points(
    fields: VectorFieldFamily,
    s: int,
    seeds,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> list[np.ndarray]:
    """Newton iteration from each seed; returns distinct converged roots.

    Seeds that fail to converge are dropped with a log message. Roots closer
    than 1e-6 to an earlier one are merged.
    """
    roots: list[np.ndarray] = []
    for seed in seeds:
        x = np.array(seed, dtype=float).reshape(fields.dim)
        converged = False
        for _ in range(max_iter):
            fx = fields.evaluate(x, s)
            if not np.all(np.isfinite(fx)):
                break
            if np.linalg.norm(fx) < tol:
                converged = True
                break
            try:
                dx = np.linalg.solve(jacobian(fields, x, s), -fx)
            except np.linalg.LinAlgError:
                break
            x = x + dx
        if not converged:
            logger.warning("Newton did not converge from seed %s", np.asarray(seed).tolist())
            continue
        if all(np.linalg.norm(x - r) > 1e-6 for r in roots):
            roots.append(x)
    return roots


def classify_fixed_point(fields: VectorFieldFamily, x, s: int) -> str:
    """Linear stability type: ``sink``, ``source``, ``saddle`` or ``nonhyperbolic``."""
    re = np.linalg.eigvals(jacobian(fields, x, s)).real
    if np.any(np.abs(re) < 1e-9):
        return "nonhyperbolic"
    if np.all(re < 0):
        return "sink"
    if np.all(re > 0):
        return "source"
    return "saddle"
