"""Payoffs, chunked Monte Carlo pricing and mergeable moment sums.

Discounted payoff sums are accumulated *exactly*: every float64 payoff is a
dyadic rational, and chunk sums of ``x`` and ``x**2`` are kept as
:class:`fractions.Fraction`. Merging is then plain rational addition, which
is associative and commutative with no rounding, so results never depend on
how paths were split across platforms or in which order shards return.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InsufficientPathsError
from .findomain import AsianArithmetic, BarrierKnockOut, European, PricingTask
from .stochastic import normals_per_path, simulate_block, stream_for

__all__ = [
    "Z_95",
    "DEFAULT_CHUNK_SIZE",
    "PartialResult",
    "Estimate",
    "payoff",
    "payoffs",
    "exact_moments",
    "run_chunk",
    "run_chunks",
    "chunk_plan",
    "chunk_moments",
    "merge",
    "estimate",
]

Z_95 = 1.959964
DEFAULT_CHUNK_SIZE = 65536
MAX_CHUNK_SIZE = 1 << 24
# normals held in memory at once while simulating a chunk
_BLOCK_NORMALS = 1 << 21


@dataclass(frozen=True)
class PartialResult:
    """Moment sums of discounted payoffs over some set of paths."""

    n: int
    sum: Fraction
    sum_sq: Fraction
    elapsed_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sum", Fraction(self.sum))
        object.__setattr__(self, "sum_sq", Fraction(self.sum_sq))
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.n == 0 and (self.sum or self.sum_sq):
            raise ValueError("empty result must have zero sums")
        if self.n >= 1 and self.sum_sq * self.n < self.sum * self.sum:
            raise ValueError("sum_sq < sum**2 / n")

    @classmethod
    def zero(cls) -> "PartialResult":
        return cls(0, Fraction(0), Fraction(0), 0.0)

    def moments(self) -> tuple:
        return (self.n, self.sum, self.sum_sq)

    def with_elapsed(self, elapsed_s: float) -> "PartialResult":
        return PartialResult(self.n, self.sum, self.sum_sq, elapsed_s)


@dataclass(frozen=True)
class Estimate:
    price: float
    std_error: float
    ci_half_width: float
    n: int

    def to_dict(self) -> dict:
        return {
            "price": self.price,
            "std_error": self.std_error,
            "ci_half_width": self.ci_half_width,
            "n": self.n,
        }


# --- payoffs ---------------------------------------------------------------


def _vanilla(kind, spot, strike):
    if kind == "call":
        return np.maximum(spot - strike, 0.0)
    return np.maximum(strike - spot, 0.0)


def payoffs(d, paths: np.ndarray, spot0: float) -> np.ndarray:
    """Undiscounted payoffs for a ``(n, steps)`` array of grid spots."""
    paths = np.atleast_2d(paths)
    terminal = paths[:, -1]
    if isinstance(d, European):
        return _vanilla(d.kind, terminal, d.strike)
    if isinstance(d, AsianArithmetic):
        steps = paths.shape[1]
        stride = steps // d.fixings
        # grid indices k*steps/fixings (1-based) -> stride-1, 2*stride-1, ...
        average = paths[:, stride - 1::stride].mean(axis=1)
        return _vanilla(d.kind, average, d.strike)
    if isinstance(d, BarrierKnockOut):
        if d.direction == "up":
            alive = (paths < d.barrier).all(axis=1) & (spot0 < d.barrier)
        else:
            alive = (paths > d.barrier).all(axis=1) & (spot0 > d.barrier)
        return np.where(alive, _vanilla(d.kind, terminal, d.strike), 0.0)
    raise TypeError(f"unsupported derivative {d!r}")


def payoff(d, path, spot0: float) -> float:
    """Undiscounted payoff of one path of grid spots."""
    return float(payoffs(d, np.asarray(path, dtype=np.float64)[None, :], spot0)[0])


# --- exact accumulation ----------------------------------------------------


def _scaled(total: int, exponent: int) -> Fraction:
    if exponent >= 0:
        return Fraction(total << exponent)
    return Fraction(total, 1 << -exponent)


def exact_moments(x) -> tuple:
    """Exact ``(sum(x), sum(x**2))`` of a float64 array as Fractions.

    Each value is split as ``mantissa * 2**e`` with a 53-bit integer
    mantissa, the mantissa into three 18-bit limbs, and limb products are
    summed per exponent in int64 before being combined in Python ints.
    """
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        return Fraction(0), Fraction(0)
    # limb products stay below 2**37, so 2**25 of them fit in int64
    if x.size > 1 << 25:
        raise ValueError("too many values for int64 limb sums")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite payoff")
    frac, exp = np.frexp(x)
    mant = np.ldexp(frac, 53).astype(np.int64)
    exp = exp.astype(np.int64) - 53
    order = np.argsort(exp, kind="stable")
    exp = exp[order]
    mant = mant[order]
    starts = np.flatnonzero(np.r_[True, exp[1:] != exp[:-1]])
    exps = exp[starts]

    a = mant >> 36
    b = (mant >> 18) & 0x3FFFF
    c = mant & 0x3FFFF

    def group(values):
        return np.add.reduceat(values, starts)

    sa, sb, sc = group(a), group(b), group(c)
    q72, q54, q36, q18, q0 = (
        group(a * a), group(2 * a * b), group(2 * a * c + b * b), group(2 * b * c), group(c * c)
    )
    emin = int(exps.min())
    total = 0
    total_sq = 0
    for i, e in enumerate(exps.tolist()):
        shift = e - emin
        total += ((int(sa[i]) << 36) + (int(sb[i]) << 18) + int(sc[i])) << shift
        sq = ((int(q72[i]) << 72) + (int(q54[i]) << 54) + (int(q36[i]) << 36)
              + (int(q18[i]) << 18) + int(q0[i]))
        total_sq += sq << (2 * shift)
    return _scaled(total, emin), _scaled(total_sq, 2 * emin)


# --- chunked pricing -------------------------------------------------------


def _discounted_payoffs(task: PricingTask, stream, n_paths: int, start: int, count: int):
    u, d = task.underlying, task.derivative
    paths = simulate_block(u, d.maturity, task.steps, stream, n_paths, start, count)
    return math.exp(-u.rate * d.maturity) * payoffs(d, paths, u.spot)


def _chunk_sums(task: PricingTask, n_paths: int, chunk_index: int) -> tuple:
    stream = stream_for(task, chunk_index)
    per_path = normals_per_path(task.underlying, task.steps)
    block = max(1, _BLOCK_NORMALS // per_path)
    total = Fraction(0)
    total_sq = Fraction(0)
    for start in range(0, n_paths, block):
        count = min(block, n_paths - start)
        s, s2 = exact_moments(_discounted_payoffs(task, stream, n_paths, start, count))
        total += s
        total_sq += s2
    return total, total_sq


def run_chunk(task: PricingTask, n_paths: int, chunk_index: int) -> PartialResult:
    """Simulate ``n_paths`` paths on the stream of ``chunk_index``.

    ``elapsed_s`` is the measured wall time of the call.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    t0 = time.perf_counter()
    total, total_sq = _chunk_sums(task, n_paths, chunk_index)
    return PartialResult(n_paths, total, total_sq, time.perf_counter() - t0)


@lru_cache(maxsize=8192)
def chunk_moments(task: PricingTask, n_paths: int, chunk_index: int) -> tuple:
    """Memoised ``(n, sum, sum_sq)`` of one chunk.

    Only for callers that do not time the computation (simulated platforms).
    """
    total, total_sq = _chunk_sums(task, n_paths, chunk_index)
    return n_paths, total, total_sq


def chunk_plan(n_paths: int, first_chunk: int = 0, chunk_size: int = DEFAULT_CHUNK_SIZE):
    """``[(chunk_index, count), ...]`` covering ``n_paths``; only the last chunk may be short."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not 1 <= chunk_size <= MAX_CHUNK_SIZE:
        raise ValueError(f"chunk_size must be in [1, {MAX_CHUNK_SIZE}]")
    full, rest = divmod(n_paths, chunk_size)
    plan = [(first_chunk + i, chunk_size) for i in range(full)]
    if rest:
        plan.append((first_chunk + full, rest))
    return plan


def run_chunks(task: PricingTask, n_paths: int, first_chunk: int = 0,
               chunk_size: int = DEFAULT_CHUNK_SIZE) -> PartialResult:
    """Sequentially run and merge every chunk of :func:`chunk_plan`."""
    out = PartialResult.zero()
    t0 = time.perf_counter()
    for index, count in chunk_plan(n_paths, first_chunk, chunk_size):
        out = merge(out, run_chunk(task, count, index))
    return out.with_elapsed(time.perf_counter() - t0)


# --- statistics ------------------------------------------------------------


def merge(a: PartialResult, b: PartialResult) -> PartialResult:
    """Combine two disjoint results; latency is that of parallel execution."""
    return PartialResult(a.n + b.n, a.sum + b.sum, a.sum_sq + b.sum_sq, max(a.elapsed_s, b.elapsed_s))


def sample_variance(r: PartialResult) -> float:
    if r.n < 2:
        raise InsufficientPathsError(f"need at least 2 paths, got {r.n}")
    var = (r.sum_sq - r.sum * r.sum / r.n) / (r.n - 1)
    return max(float(var), 0.0)


def estimate(r: PartialResult) -> Estimate:
    """Price, standard error and 95% CI half-width from moment sums."""
    var = sample_variance(r)
    std_error = math.sqrt(var / r.n)
    return Estimate(float(r.sum / r.n), std_error, Z_95 * std_error, r.n)
