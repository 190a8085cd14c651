"""Keyed normal streams and path simulation for Black-Scholes and Heston.

Streams come from Philox-4x64, a counter-based generator. The cipher key is
``(base_seed, fnv1a(task_id))`` and the chunk index occupies the third
counter word, so every ``(base_seed, task, chunk)`` triple owns a disjoint
region of one keystream and any position in it can be reached directly.
Normals use the inverse CDF, one uniform per normal, so consumption counts
are exact:

* Black-Scholes: ``steps`` normals per path.
* Heston: ``2 * steps`` normals per path.

Within a batch of ``n`` paths the layout is blocked: the first
``n * steps`` normals drive the spot and, for Heston, the next ``n * steps``
are the orthogonal variance shocks. A Heston batch therefore sees exactly
the spot shocks a Black-Scholes batch with the same key would see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .findomain import BlackScholes, Heston

__all__ = [
    "StreamKey",
    "NormalStream",
    "fnv1a_64",
    "open_stream",
    "stream_for",
    "normals_per_path",
    "simulate_path",
    "simulate_paths",
    "simulate_block",
]

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a over the UTF-8 bytes of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class StreamKey:
    task_id_hash: int
    chunk_index: int
    base_seed: int

    def __post_init__(self):
        for name in ("task_id_hash", "chunk_index", "base_seed"):
            value = getattr(self, name)
            if not 0 <= value <= _MASK64:
                raise ValueError(f"{name} must fit in 64 bits, got {value}")


class NormalStream:
    """Stateful source of i.i.d. standard normals, deterministic in its key."""

    def __init__(self, key: StreamKey):
        self.key = key
        self._cipher_key = np.array([key.base_seed, key.task_id_hash], dtype=np.uint64)
        self.position = 0

    def seek(self, position: int) -> "NormalStream":
        if position < 0:
            raise ValueError("position must be >= 0")
        self.position = position
        return self

    def uniforms(self, count: int) -> np.ndarray:
        """Next ``count`` uniforms on the open interval (0, 1)."""
        block, skip = divmod(self.position, 4)
        counter = np.array(
            [block & _MASK64, block >> 64, self.key.chunk_index, 0], dtype=np.uint64
        )
        gen = np.random.Philox(key=self._cipher_key, counter=counter)
        if skip:
            gen.random_raw(skip)
        raw = gen.random_raw(count)
        self.position += count
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, count: int) -> np.ndarray:
        return ndtri(self.uniforms(count))


def open_stream(key: StreamKey) -> NormalStream:
    return NormalStream(key)


def stream_for(task, chunk_index: int) -> NormalStream:
    """Stream for one chunk of ``task``."""
    return NormalStream(StreamKey(fnv1a_64(task.id), chunk_index, task.base_seed))


def normals_per_path(underlying, steps: int) -> int:
    return 2 * steps if isinstance(underlying, Heston) else steps


def _bs_paths(u: BlackScholes, T, steps, z):
    dt = T / steps
    drift = (u.rate - 0.5 * u.volatility**2) * dt
    vol = u.volatility * np.sqrt(dt)
    log_paths = np.cumsum(drift + vol * z, axis=1)
    return u.spot * np.exp(log_paths)


def _heston_paths(u: Heston, T, steps, z_s, z_perp, return_variance=False):
    n = z_s.shape[0]
    dt = T / steps
    rho_perp = np.sqrt(1.0 - u.rho * u.rho)
    spots = np.empty((n, steps))
    variances = np.empty((n, steps + 1)) if return_variance else None
    log_s = np.full(n, np.log(u.spot))
    v = np.full(n, float(u.v0))
    if return_variance:
        variances[:, 0] = v
    for k in range(steps):
        v_plus = np.maximum(v, 0.0)
        root = np.sqrt(v_plus * dt)
        zs = z_s[:, k]
        zv = u.rho * zs + rho_perp * z_perp[:, k]
        log_s = log_s + (u.rate - 0.5 * v_plus) * dt + root * zs
        v = v + u.kappa * (u.theta - v_plus) * dt + u.xi * root * zv
        spots[:, k] = log_s
        if return_variance:
            variances[:, k + 1] = v
    np.exp(spots, out=spots)
    if return_variance:
        return spots, variances
    return spots


def simulate_block(u, T: float, steps: int, stream: NormalStream, n_total: int,
                   start: int, count: int, return_variance: bool = False):
    """Paths ``start .. start+count`` of a batch of ``n_total`` paths.

    The stream is addressed absolutely from the batch origin (its position
    when this is called with ``start=0``), so simulating a batch in blocks
    reproduces simulating it whole. Returns a ``(count, steps)`` array.
    """
    origin = stream.position
    stream.seek(origin + start * steps)
    z_s = stream.normals(count * steps).reshape(count, steps)
    if isinstance(u, BlackScholes):
        stream.seek(origin)
        return _bs_paths(u, T, steps, z_s)
    stream.seek(origin + (n_total + start) * steps)
    z_perp = stream.normals(count * steps).reshape(count, steps)
    stream.seek(origin)
    return _heston_paths(u, T, steps, z_s, z_perp, return_variance)


def simulate_paths(u, T: float, steps: int, stream: NormalStream, n: int,
                   return_variance: bool = False):
    """Simulate ``n`` paths from the stream's current position and consume them."""
    origin = stream.position
    out = simulate_block(u, T, steps, stream, n, 0, n, return_variance)
    stream.seek(origin + n * normals_per_path(u, steps))
    return out


def simulate_path(u, T: float, steps: int, stream: NormalStream) -> np.ndarray:
    """One path of spots ``S(t_1) .. S(t_steps)``.

    Black-Scholes takes the exact log-Euler step; Heston uses full-truncation
    Euler on the variance with ``max(v, 0)`` inside drift and diffusion.
    """
    if steps < 1 or T <= 0:
        raise ValueError("need steps >= 1 and T > 0")
    return simulate_paths(u, T, steps, stream, 1)[0]
