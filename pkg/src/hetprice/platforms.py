"""Execution platforms: one real local CPU backend and simulated accelerators.

A simulated platform computes real numbers with the local kernel but reports
a virtual latency ``setup_s + n_paths / rate`` instead of reading the wall
clock. Rates may be overridden per task id or per underlying family, which
is how the shipped six-accelerator profile carries its two benchmark columns.
"""

from __future__ import annotations

import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

from .errors import ValidationError
from .mcengine import DEFAULT_CHUNK_SIZE, PartialResult, chunk_moments, chunk_plan, merge, run_chunk

__all__ = [
    "LocalCpu",
    "Simulated",
    "PlatformRegistry",
    "execute",
    "load_registry",
    "load_table1",
    "BASELINE_RATE",
]

# sequential-CPU path rate the shipped speedup profiles are scaled from
BASELINE_RATE = 1e5


def _positive(name, value, platform, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"platform {platform!r}: must be a finite number", field=name)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"platform {platform!r}: must be {bound}, got {value!r}", field=name)


@dataclass(eq=False)
class LocalCpu:
    """Runs chunks on a local thread pool and reports measured wall time."""

    name: str
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK_SIZE

    kind = "local_cpu"
    clock = "wall"

    def __post_init__(self):
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise ValidationError(f"platform {self.name!r}: must be an integer >= 1", field="workers")
        self._lock = threading.Lock()

    def execute(self, task, n_paths: int, first_chunk: int = 0) -> PartialResult:
        plan = chunk_plan(n_paths, first_chunk, self.chunk_size)
        with self._lock:
            t0 = time.perf_counter()
            if self.workers == 1 or len(plan) == 1:
                parts = [run_chunk(task, count, index) for index, count in plan]
            else:
                with ThreadPoolExecutor(self.workers) as pool:
                    parts = list(pool.map(lambda ic: run_chunk(task, ic[1], ic[0]), plan))
            elapsed = time.perf_counter() - t0
        out = PartialResult.zero()
        for part in parts:
            out = merge(out, part)
        return out.with_elapsed(elapsed)

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.kind, "workers": self.workers}


@dataclass(eq=False)
class Simulated:
    """Accelerator profile driven by a virtual clock."""

    name: str
    rate: float
    setup_s: float = 0.0
    rate_overrides: dict = field(default_factory=dict)
    chunk_size: int = DEFAULT_CHUNK_SIZE

    kind = "simulated"
    clock = "virtual"

    def __post_init__(self):
        _positive("rate", self.rate, self.name)
        _positive("setup_s", self.setup_s, self.name, allow_zero=True)
        if not isinstance(self.rate_overrides, dict):
            raise ValidationError(f"platform {self.name!r}: must be an object", field="rate_overrides")
        for key, value in self.rate_overrides.items():
            _positive(f"rate_overrides.{key}", value, self.name)
        self._lock = threading.Lock()

    def rate_for(self, task) -> float:
        """Task-id override, then underlying-family override, then the default rate."""
        if task.id in self.rate_overrides:
            return float(self.rate_overrides[task.id])
        return float(self.rate_overrides.get(task.family, self.rate))

    def virtual_latency(self, task, n_paths: int) -> float:
        return self.setup_s + n_paths / self.rate_for(task)

    def execute(self, task, n_paths: int, first_chunk: int = 0) -> PartialResult:
        out = PartialResult.zero()
        with self._lock:
            for index, count in chunk_plan(n_paths, first_chunk, self.chunk_size):
                out = merge(out, PartialResult(*chunk_moments(task, count, index)))
        return out.with_elapsed(self.virtual_latency(task, n_paths))

    def to_dict(self) -> dict:
        out = {"name": self.name, "type": self.kind, "rate": self.rate, "setup_s": self.setup_s}
        if self.rate_overrides:
            out["rate_overrides"] = dict(self.rate_overrides)
        return out


def execute(platform, task, n_paths: int, first_chunk: int = 0) -> PartialResult:
    """Run ``n_paths`` of ``task`` on ``platform`` starting at ``first_chunk``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    return platform.execute(task, n_paths, first_chunk)


class PlatformRegistry:
    """Ordered, name-unique collection of platforms."""

    def __init__(self, platforms):
        self.platforms = tuple(platforms)
        if not self.platforms:
            raise ValidationError("registry must contain at least one platform", field="platforms")
        seen = set()
        for p in self.platforms:
            if p.name in seen:
                raise ValidationError(f"duplicate name {p.name!r}", field="name")
            seen.add(p.name)

    def __iter__(self):
        return iter(self.platforms)

    def __len__(self):
        return len(self.platforms)

    def __getitem__(self, key):
        if isinstance(key, str):
            for p in self.platforms:
                if p.name == key:
                    return p
            raise KeyError(key)
        return self.platforms[key]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.platforms]

    def with_chunk_size(self, chunk_size: int) -> "PlatformRegistry":
        for p in self.platforms:
            p.chunk_size = chunk_size
        return self

    def to_json(self) -> str:
        return json.dumps({"platforms": [p.to_dict() for p in self.platforms]}, indent=2) + "\n"


def _platform_from_dict(obj, index):
    if not isinstance(obj, dict):
        raise ValidationError(f"platform #{index} must be an object", field="platforms")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError(f"platform #{index} needs a non-empty string name", field="name")
    kind = obj.get("type")
    if kind == "local_cpu":
        extra = set(obj) - {"name", "type", "workers"}
        if extra:
            raise ValidationError(f"platform {name!r}: unexpected fields {sorted(extra)}", field="type")
        return LocalCpu(name, obj.get("workers", 1))
    if kind == "simulated":
        extra = set(obj) - {"name", "type", "rate", "setup_s", "rate_overrides"}
        if extra:
            raise ValidationError(f"platform {name!r}: unexpected fields {sorted(extra)}", field="type")
        if "rate" not in obj:
            raise ValidationError(f"platform {name!r}: missing", field="rate")
        return Simulated(name, obj["rate"], obj.get("setup_s", 0.0), dict(obj.get("rate_overrides", {})))
    raise ValidationError(f"platform {name!r}: unknown type {kind!r}", field="type")


def load_registry(data) -> PlatformRegistry:
    """Parse the JSON platform format into a validated registry."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"syntax error: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("platforms"), list):
        raise ValidationError('expected an object with a "platforms" list', field="platforms")
    return PlatformRegistry(_platform_from_dict(p, i) for i, p in enumerate(doc["platforms"]))


def load_table1() -> PlatformRegistry:
    """The shipped six-profile registry scaled from published speedups."""
    return load_registry(resources.files("hetprice.data").joinpath("table1.json").read_text())
