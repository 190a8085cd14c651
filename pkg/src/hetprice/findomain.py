"""Financial domain types: underlyings, derivative contracts and pricing tasks.

Everything here is an immutable value. Bounds are checked on construction
and violations raise :class:`~hetprice.errors.ValidationError`; nothing is
clamped.

Monitoring convention: a task with ``steps`` time steps observes the spot at
``t_k = k * T / steps`` for ``k = 1..steps``. Barrier checks and Asian
fixings happen only on that grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, dataclass, fields
from typing import Union

from .errors import ValidationError

__all__ = [
    "BlackScholes",
    "Heston",
    "European",
    "AsianArithmetic",
    "BarrierKnockOut",
    "PricingTask",
    "Portfolio",
    "parse_task_file",
    "serialize_portfolio",
]

SEED_LIMIT = 1 << 64
KINDS = ("call", "put")
DIRECTIONS = ("up", "down")


def _check_real(name, value, *, lo=None, lo_open=False, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"must be a number, got {value!r}", field=name)
    if not math.isfinite(value):
        raise ValidationError(f"must be finite, got {value!r}", field=name)
    if lo is not None and (value <= lo if lo_open else value < lo):
        op = ">" if lo_open else ">="
        raise ValidationError(f"must be {op} {lo}, got {value!r}", field=name)
    if hi is not None and value > hi:
        raise ValidationError(f"must be <= {hi}, got {value!r}", field=name)


def _check_int(name, value, *, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"must be an integer, got {value!r}", field=name)
    if lo is not None and value < lo:
        raise ValidationError(f"must be >= {lo}, got {value!r}", field=name)
    if hi is not None and value >= hi:
        raise ValidationError(f"must be < {hi}, got {value!r}", field=name)


def _check_choice(name, value, choices):
    if value not in choices:
        raise ValidationError(f"must be one of {choices}, got {value!r}", field=name)


# --- underlyings -----------------------------------------------------------


@dataclass(frozen=True)
class BlackScholes:
    """Geometric Brownian motion with constant volatility."""

    spot: float
    rate: float
    volatility: float

    type_name = "black_scholes"

    def __post_init__(self):
        _check_real("spot", self.spot, lo=0, lo_open=True)
        _check_real("rate", self.rate)
        _check_real("volatility", self.volatility, lo=0)


@dataclass(frozen=True)
class Heston:
    """Heston stochastic volatility: mean-reverting square-root variance."""

    spot: float
    rate: float
    v0: float
    kappa: float
    theta: float
    xi: float
    rho: float

    type_name = "heston"

    def __post_init__(self):
        _check_real("spot", self.spot, lo=0, lo_open=True)
        _check_real("rate", self.rate)
        for name in ("v0", "kappa", "theta", "xi"):
            _check_real(name, getattr(self, name), lo=0)
        _check_real("rho", self.rho, lo=-1, hi=1)


Underlying = Union[BlackScholes, Heston]


# --- derivatives -----------------------------------------------------------


@dataclass(frozen=True)
class European:
    strike: float
    maturity: float
    kind: str = "call"

    type_name = "european"

    def __post_init__(self):
        _check_real("strike", self.strike, lo=0, lo_open=True)
        _check_real("maturity", self.maturity, lo=0, lo_open=True)
        _check_choice("kind", self.kind, KINDS)


@dataclass(frozen=True)
class AsianArithmetic:
    """Arithmetic-average Asian option over ``fixings`` equally spaced grid dates."""

    strike: float
    maturity: float
    fixings: int
    kind: str = "call"

    type_name = "asian_arithmetic"

    def __post_init__(self):
        _check_real("strike", self.strike, lo=0, lo_open=True)
        _check_real("maturity", self.maturity, lo=0, lo_open=True)
        _check_int("fixings", self.fixings, lo=1)
        _check_choice("kind", self.kind, KINDS)


@dataclass(frozen=True)
class BarrierKnockOut:
    """Discretely monitored knock-out option.

    ``direction="up"`` knocks out on any monitored spot ``>= barrier``,
    ``direction="down"`` on any monitored spot ``<= barrier``.
    """

    strike: float
    maturity: float
    barrier: float
    direction: str
    kind: str = "call"

    type_name = "barrier_knock_out"

    def __post_init__(self):
        _check_real("strike", self.strike, lo=0, lo_open=True)
        _check_real("maturity", self.maturity, lo=0, lo_open=True)
        _check_real("barrier", self.barrier, lo=0, lo_open=True)
        _check_choice("direction", self.direction, DIRECTIONS)
        _check_choice("kind", self.kind, KINDS)


Derivative = Union[European, AsianArithmetic, BarrierKnockOut]

_UNDERLYINGS = {cls.type_name: cls for cls in (BlackScholes, Heston)}
_DERIVATIVES = {cls.type_name: cls for cls in (European, AsianArithmetic, BarrierKnockOut)}


# --- tasks -----------------------------------------------------------------


@dataclass(frozen=True)
class PricingTask:
    """One derivative on one underlying plus simulation settings."""

    id: str
    underlying: Underlying
    derivative: Derivative
    steps: int
    base_seed: int = 0

    def __post_init__(self):
        try:
            if not isinstance(self.id, str) or not self.id:
                raise ValidationError("must be a non-empty string", field="id")
            if not isinstance(self.underlying, tuple(_UNDERLYINGS.values())):
                raise ValidationError("unknown underlying", field="underlying")
            if not isinstance(self.derivative, tuple(_DERIVATIVES.values())):
                raise ValidationError("unknown derivative", field="derivative")
            _check_int("steps", self.steps, lo=1)
            _check_int("base_seed", self.base_seed, lo=0, hi=SEED_LIMIT)
            if isinstance(self.derivative, AsianArithmetic):
                if self.steps % self.derivative.fixings != 0:
                    raise ValidationError(
                        f"steps ({self.steps}) must be a multiple of fixings "
                        f"({self.derivative.fixings})",
                        field="fixings",
                    )
        except ValidationError as exc:
            if exc.task_id is None and isinstance(self.id, str):
                raise ValidationError(_bare(exc), field=exc.field, task_id=self.id) from None
            raise

    @property
    def family(self) -> str:
        """Underlying model name; platforms may key per-family rates on it."""
        return self.underlying.type_name

    def with_seed(self, base_seed: int) -> "PricingTask":
        return PricingTask(self.id, self.underlying, self.derivative, self.steps, base_seed)


@dataclass(frozen=True)
class Portfolio:
    tasks: tuple

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ValidationError("portfolio must contain at least one task", field="tasks")
        seen = set()
        for task in self.tasks:
            if not isinstance(task, PricingTask):
                raise ValidationError(f"not a PricingTask: {task!r}", field="tasks")
            if task.id in seen:
                raise ValidationError("duplicate id", field="id", task_id=task.id)
            seen.add(task.id)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, item):
        return self.tasks[item]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tasks]


def _bare(exc: ValidationError) -> str:
    msg = str(exc)
    if exc.field is not None or exc.task_id is not None:
        msg = msg.split(": ", 1)[-1]
    return msg


# --- JSON task format ------------------------------------------------------


def _build_variant(kind, registry, obj, task_id):
    if not isinstance(obj, dict):
        raise ValidationError("must be an object", field=kind, task_id=task_id)
    type_name = obj.get("type")
    if type_name not in registry:
        raise ValidationError(
            f"unknown type {type_name!r}; expected one of {sorted(registry)}",
            field=f"{kind}.type",
            task_id=task_id,
        )
    cls = registry[type_name]
    names = {f.name for f in fields(cls)}
    extra = set(obj) - names - {"type"}
    if extra:
        raise ValidationError(f"unexpected fields {sorted(extra)}", field=kind, task_id=task_id)
    required = {f.name for f in fields(cls) if f.default is MISSING}
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"missing fields {sorted(missing)}", field=kind, task_id=task_id)
    try:
        return cls(**{k: v for k, v in obj.items() if k != "type"})
    except ValidationError as exc:
        raise ValidationError(_bare(exc), field=exc.field, task_id=task_id) from None


def _task_from_dict(obj, index) -> PricingTask:
    if not isinstance(obj, dict):
        raise ValidationError(f"task #{index} must be an object", field="tasks")
    task_id = obj.get("id")
    if not isinstance(task_id, str) or not task_id:
        raise ValidationError(f"task #{index} needs a non-empty string id", field="id")
    expected = {"id", "underlying", "derivative", "steps", "base_seed"}
    extra = set(obj) - expected
    if extra:
        raise ValidationError(f"unexpected fields {sorted(extra)}", task_id=task_id)
    for key in ("underlying", "derivative", "steps"):
        if key not in obj:
            raise ValidationError("missing", field=key, task_id=task_id)
    underlying = _build_variant("underlying", _UNDERLYINGS, obj["underlying"], task_id)
    derivative = _build_variant("derivative", _DERIVATIVES, obj["derivative"], task_id)
    return PricingTask(task_id, underlying, derivative, obj["steps"], obj.get("base_seed", 0))


def parse_task_file(data) -> Portfolio:
    """Parse and validate the JSON task format.

    ``data`` may be ``bytes`` (decoded as UTF-8) or ``str``. Raises
    :class:`ValidationError` for malformed JSON as well as bound violations;
    the message names the offending field and task id.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValidationError(f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"syntax error: {exc}") from None
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise ValidationError('expected an object with a "tasks" list', field="tasks")
    if not isinstance(doc["tasks"], list):
        raise ValidationError("must be a list", field="tasks")
    return Portfolio(tuple(_task_from_dict(t, i) for i, t in enumerate(doc["tasks"])))


def _variant_to_dict(obj) -> dict:
    out = {"type": obj.type_name}
    out.update({f.name: getattr(obj, f.name) for f in fields(obj)})
    return out


def task_to_dict(task: PricingTask) -> dict:
    return {
        "id": task.id,
        "underlying": _variant_to_dict(task.underlying),
        "derivative": _variant_to_dict(task.derivative),
        "steps": task.steps,
        "base_seed": task.base_seed,
    }


def serialize_portfolio(portfolio: Portfolio) -> str:
    """Inverse of :func:`parse_task_file`; floats survive via ``repr``."""
    if not isinstance(portfolio, Portfolio):
        portfolio = Portfolio(tuple(portfolio))
    return json.dumps({"tasks": [task_to_dict(t) for t in portfolio.tasks]}, indent=2) + "\n"
