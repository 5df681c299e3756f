"""Built-in example systems and config-driven construction.

State ordering is part of each system's contract because it fixes how rows
and columns of ``Q`` are read:

* ``linear_1d``: states ``(+1, -1)`` for ``dx/dt = -x + Z``.
* ``cstr_2d``: states ``(-0.15, 0, 0.15)`` for the stirred-tank reactor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

from .errors import SchemaViolationError, SizeMismatchError, UnknownSystemError
from .flow import IntegratorSettings, VectorFieldFamily
from .hybrid import HybridState, HybridSystemSpec
from .markov import TransitionMatrix, validate

Q1 = ((0.4, 0.6), (0.5, 0.5))
Q2 = ((0.1, 0.9), (0.1, 0.9))
CSTR_Q = ((0.3, 0.3, 0.4),) * 3
CSTR_DEFAULTS = {"lam": 1.0, "beta": 0.15, "x_c": 1.0, "B": 7.0, "Da": 0.05}


def _require_size(q, n: int, path: str = "Q") -> TransitionMatrix:
    q = validate(q)
    if q.size != n:
        raise SizeMismatchError(f"{path}: expected a {n}x{n} matrix, got {q.size}x{q.size}")
    return q


def build_linear_1d(
    Q=Q1,
    h: float = 1.0,
    box=((-3.0, 3.0),),
    bins=(200,),
    step_size: float | None = None,
) -> HybridSystemSpec:
    """``dx/dt = -x + Z`` with ``Z`` in ``(+1, -1)``, in that state order."""
    q = _require_size(Q, 2)
    values = np.array([1.0, -1.0])

    def field(x, s):
        return -x + values[s][:, None]

    def analytic(x, s, t):
        z = values[s][:, None]
        return z + (x - z) * np.exp(-t)

    fields = VectorFieldFamily(1, (1.0, -1.0), field, analytic)
    return HybridSystemSpec(
        fields,
        q,
        h=h,
        box=box,
        integrator=IntegratorSettings(step_size if step_size else h / 100),
        bins=bins,
        name="linear_1d",
        initial=HybridState([2.0], 0),
    )


def cstr_fields(lam=1.0, beta=0.15, x_c=1.0, B=7.0, Da=0.05, z_values=(-0.15, 0.0, 0.15)):
    """Reactor vector fields.

    ``dx1/dt = -lam x1 - beta (x1 - x_c) + B Da (1 - x2) e^x1 + Z (1 - x1)``
    ``dx2/dt = -lam x2 + Da (1 - x2) e^x1``

    The defaults reproduce the simplified reactor (``B Da = 0.35``).
    """
    zv = np.asarray(z_values, dtype=float)

    def field(x, s):
        x1, x2 = x[:, 0], x[:, 1]
        rate = (1.0 - x2) * np.exp(x1)
        out = np.empty_like(x)
        out[:, 0] = -lam * x1 - beta * (x1 - x_c) + B * Da * rate + zv[s] * (1.0 - x1)
        out[:, 1] = -lam * x2 + Da * rate
        return out

    return VectorFieldFamily(2, tuple(float(z) for z in zv), field)


def build_cstr_2d(
    Q=CSTR_Q,
    h: float = 1.0,
    box=((0.0, 8.0), (0.0, 1.2)),
    bins=(100, 100),
    step_size: float | None = None,
    **params,
) -> HybridSystemSpec:
    """Stirred-tank reactor with ``Z`` in ``(-0.15, 0, 0.15)``, in that state order."""
    q = _require_size(Q, 3)
    unknown = set(params) - set(CSTR_DEFAULTS)
    if unknown:
        raise TypeError(f"unknown reactor parameters: {sorted(unknown)}")
    fields = cstr_fields(**{**CSTR_DEFAULTS, **params})
    return HybridSystemSpec(
        fields,
        q,
        h=h,
        box=box,
        integrator=IntegratorSettings(step_size if step_size else h / 100),
        bins=bins,
        name="cstr_2d",
        initial=HybridState([0.67, 0.09], 1),
    )


@dataclass(frozen=True)
class SystemCatalogEntry:
    name: str
    builder: Callable[..., HybridSystemSpec]
    n_states: int
    dim: int
    defaults: Mapping[str, Any] = field(default_factory=dict)
    params: tuple = ()

    def build(self, **overrides) -> HybridSystemSpec:
        return self.builder(**{**self.defaults, **overrides})


CATALOG: dict[str, SystemCatalogEntry] = {
    "linear_1d": SystemCatalogEntry(
        "linear_1d", build_linear_1d, 2, 1, {"Q": Q1, "h": 1.0}
    ),
    "cstr_2d": SystemCatalogEntry(
        "cstr_2d", build_cstr_2d, 3, 2, {"Q": CSTR_Q, "h": 1.0}, tuple(CSTR_DEFAULTS)
    ),
}

_TOP_KEYS = {"system", "Q", "h", "box", "bins", "integrator", "params", "initial"}


def _number(value, path, positive=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolationError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value) or (positive and value <= 0):
        raise SchemaViolationError(path, f"expected a positive finite number, got {value!r}")
    return value


def _matrix(value, path, n_rows=None, n_cols=None) -> list[list[float]]:
    if not isinstance(value, (list, tuple)):
        raise SchemaViolationError(path, "expected a list of rows")
    if n_rows is not None and len(value) != n_rows:
        raise SchemaViolationError(path, f"expected {n_rows} rows, got {len(value)}")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, (list, tuple)):
            raise SchemaViolationError(f"{path}[{i}]", "expected a list")
        if n_cols is not None and len(row) != n_cols:
            raise SchemaViolationError(f"{path}[{i}]", f"expected {n_cols} entries, got {len(row)}")
        rows.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return rows


def load_system(config: Mapping[str, Any]) -> HybridSystemSpec:
    """Build a spec from a parsed config document.

    Recognized keys: ``system`` (catalog name, required), ``Q``, ``h``,
    ``box``, ``bins``, ``integrator.step``, ``params`` (reactor parameters)
    and ``initial`` (``x`` and ``state``, the default starting point for CLI
    runs). Errors name the offending field.
    """
    if not isinstance(config, Mapping):
        raise SchemaViolationError("<root>", "config must be a mapping")
    extra = set(config) - _TOP_KEYS
    if extra:
        raise SchemaViolationError(sorted(extra)[0], "unknown key")
    if "system" not in config:
        raise SchemaViolationError("system", "missing required key")
    name = config["system"]
    if name not in CATALOG:
        raise UnknownSystemError(name, CATALOG)
    entry = CATALOG[name]
    kw: dict[str, Any] = {}
    if "Q" in config:
        n = entry.n_states
        if not isinstance(config["Q"], (list, tuple)) or len(config["Q"]) != n:
            raise SchemaViolationError(
                "Q", f"system {name} needs a {n}x{n} matrix"
            )
        kw["Q"] = _matrix(config["Q"], "Q", n, n)
    if "h" in config:
        kw["h"] = _number(config["h"], "h", positive=True)
    if "box" in config:
        box = _matrix(config["box"], "box", entry.dim, 2)
        for i, (lo, hi) in enumerate(box):
            if lo >= hi:
                raise SchemaViolationError(f"box[{i}]", "lower bound must be below upper bound")
        kw["box"] = box
    if "bins" in config:
        bins = config["bins"]
        bins = [bins] * entry.dim if isinstance(bins, int) and not isinstance(bins, bool) else bins
        if not isinstance(bins, (list, tuple)) or len(bins) != entry.dim:
            raise SchemaViolationError("bins", f"expected {entry.dim} bin counts")
        for i, b in enumerate(bins):
            if isinstance(b, bool) or not isinstance(b, int) or b < 1:
                raise SchemaViolationError(f"bins[{i}]", "expected a positive integer")
        kw["bins"] = tuple(bins)
    if "integrator" in config:
        integ = config["integrator"]
        if not isinstance(integ, Mapping) or set(integ) - {"step", "method"}:
            raise SchemaViolationError("integrator", "expected a mapping with 'step' (and 'method')")
        if integ.get("method", "rk4") != "rk4":
            raise SchemaViolationError("integrator.method", "only 'rk4' is supported")
        if "step" in integ:
            kw["step_size"] = _number(integ["step"], "integrator.step", positive=True)
    if "params" in config:
        params = config["params"]
        if not isinstance(params, Mapping):
            raise SchemaViolationError("params", "expected a mapping")
        for key, value in params.items():
            if key not in entry.params:
                raise SchemaViolationError(f"params.{key}", f"not a parameter of {name}")
            kw[key] = _number(value, f"params.{key}")
    h = kw.get("h", entry.defaults.get("h", 1.0))
    if kw.get("step_size", 0) > h:
        raise SchemaViolationError("integrator.step", "must not exceed h")
    spec = entry.build(**kw)
    if "initial" in config:
        spec = _with_initial(spec, config["initial"])
    return spec


def _with_initial(spec: HybridSystemSpec, initial) -> HybridSystemSpec:
    if not isinstance(initial, Mapping) or set(initial) - {"x", "state"}:
        raise SchemaViolationError("initial", "expected a mapping with 'x' and 'state'")
    x = initial.get("x", spec.initial.x.tolist())
    x = [x] if isinstance(x, (int, float)) and not isinstance(x, bool) else x
    if not isinstance(x, (list, tuple)) or len(x) != spec.dim:
        raise SchemaViolationError("initial.x", f"expected {spec.dim} coordinates")
    x = [_number(v, f"initial.x[{i}]") for i, v in enumerate(x)]
    state = initial.get("state", spec.initial.state)
    if isinstance(state, bool) or not isinstance(state, int) or not 0 <= state < spec.n_states:
        raise SchemaViolationError("initial.state", f"expected a state index in [0, {spec.n_states})")
    return replace(spec, initial=HybridState(x, state))
