"""Sample paths' terminal positions: plain, subordinated, and flights.

Batch generation walks one Philox counter block per sample index, so a
batch is reproducible for a fixed seed no matter how it is chunked or
parallelized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError
from .sampling import (
    RngStream,
    EventSchedule,
    _as_generator,
    _draw_angles,
    _sorted_uniform,
    draw_time,
)

__all__ = [
    "MotionParams",
    "FixedEvents",
    "PoissonAtHorizon",
    "Conditioning",
    "SampleBatch",
    "position",
    "sample_positions",
    "sample_composed",
    "flight_position",
    "sample_flights",
]


@dataclass(frozen=True)
class MotionParams:
    """Friction level nu, speed c and Poisson rate lam of a motion."""

    nu: float
    c: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu >= 0.0):
            raise DomainError("friction level nu must be finite and >= 0")
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise DomainError("speed c must be finite and positive")
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise DomainError("rate lambda must be finite and positive")


@dataclass(frozen=True)
class FixedEvents:
    """Condition on exactly n Poisson events."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("event count must be nonnegative")


@dataclass(frozen=True)
class PoissonAtHorizon:
    """Mix over N(t) ~ Poisson(lambda t)."""


Conditioning = Union[FixedEvents, PoissonAtHorizon]


@dataclass
class SampleBatch:
    """Monte Carlo output plus the fingerprint that generated it."""

    values: np.ndarray
    seed: int
    descriptor: str

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def write_csv(self, fp) -> None:
        """One value (or vector) per row, 17 significant digits."""
        vals = np.atleast_2d(self.values.T).T
        width = vals.shape[1] if vals.ndim > 1 else 1
        header = "x" if width == 1 else ",".join(f"x{i+1}" for i in range(width))
        fp.write(header + "\n")
        for row in np.atleast_2d(vals):
            fp.write(",".join(f"{v:.17g}" for v in np.atleast_1d(row)) + "\n")

    def to_json_dict(self) -> dict:
        data = self.values.tolist()
        return {
            "meta": {
                "seed": self.seed,
                "descriptor": self.descriptor,
                "count": len(self),
            },
            "data": data,
        }

    def write_json(self, fp) -> None:
        json.dump(self.to_json_dict(), fp, sort_keys=True)
        fp.write("\n")


# ---------------------------------------------------------------------------
# single positions
# ---------------------------------------------------------------------------


def _cos_angles(gen, nu: float, size: int) -> np.ndarray:
    """cos(theta) for friction angles; identical draws to _draw_angles.

    cos(arccos(2V - 1)) = 2V - 1, so the arccos/cos round trip is skipped.
    """
    g = gen.standard_gamma(nu + 0.5, size=2 * size)
    v = g[:size] / (g[:size] + g[size:])
    return 2.0 * v - 1.0


def _position_core(gen, nu: float, c: float, horizon: float, n: int) -> float:
    """c * sum of segment lengths times cos(angle); clamped to [-c h, c h]."""
    times = _sorted_uniform(gen, n) * horizon
    seg = np.diff(times, prepend=0.0, append=horizon)
    x = c * float(seg @ _cos_angles(gen, nu, n + 1))
    bound = c * horizon
    if x > bound:
        return bound
    if x < -bound:
        return -bound
    return x


def position(params: MotionParams, schedule: EventSchedule, rng) -> float:
    """Terminal position over the given event schedule; |x| <= c * horizon."""
    gen = _as_generator(rng)
    seg = schedule.segment_lengths()
    theta = _draw_angles(params.nu, schedule.count + 1, gen)
    x = params.c * float(seg @ np.cos(theta))
    bound = params.c * schedule.horizon
    return max(-bound, min(bound, x))


def _event_count(cond, lam: float, t: float, gen) -> int:
    if isinstance(cond, FixedEvents):
        return cond.n
    if isinstance(cond, PoissonAtHorizon):
        return int(gen.poisson(lam * t))
    raise DomainError(f"unknown conditioning {cond!r}")


def _cond_tag(cond) -> str:
    return f"n={cond.n}" if isinstance(cond, FixedEvents) else "poisson"


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


def sample_positions(params: MotionParams, cond, t: float, count: int, rng: RngStream) -> SampleBatch:
    """Batch of terminal positions at horizon t."""
    if count < 1:
        raise DomainError("sample count must be >= 1")
    if not t > 0.0:
        raise DomainError("horizon must be positive")
    cursor = rng.substreams()
    out = np.empty(count)
    for i in range(count):
        gen = cursor.at(i)
        n = _event_count(cond, params.lam, t, gen)
        out[i] = _position_core(gen, params.nu, params.c, t, n)
    desc = (
        f"simulate nu={params.nu:g} c={params.c:g} lambda={params.lam:g} "
        f"t={t:g} {_cond_tag(cond)}"
    )
    return SampleBatch(values=out, seed=rng.seed, descriptor=desc)


def sample_composed(params: MotionParams, change, cond, t: float, count: int,
                    rng: RngStream) -> SampleBatch:
    """Batch of positions of the motion run up to a random clock.

    Per sample: the clock S is drawn at horizon t first; the event count
    uses Poisson(lambda * t) at the deterministic horizon (the mixture
    weights of the composed laws), while the events themselves land on
    (0, S).
    """
    if count < 1:
        raise DomainError("sample count must be >= 1")
    if not t > 0.0:
        raise DomainError("horizon must be positive")
    cursor = rng.substreams()
    out = np.empty(count)
    for i in range(count):
        gen = cursor.at(i)
        s = draw_time(change, t, gen)
        n = _event_count(cond, params.lam, t, gen)
        out[i] = _position_core(gen, params.nu, params.c, s, n)
    desc = (
        f"compose nu={params.nu:g} c={params.c:g} lambda={params.lam:g} "
        f"t={t:g} {_cond_tag(cond)} clock={change!r}"
    )
    return SampleBatch(values=out, seed=rng.seed, descriptor=desc)


# ---------------------------------------------------------------------------
# planar / 4-D random flights
# ---------------------------------------------------------------------------


def _directions(gen, dim: int, size: int) -> np.ndarray:
    if dim == 2:
        phi = gen.random(size) * (2.0 * math.pi)
        return np.column_stack((np.cos(phi), np.sin(phi)))
    # uniform on S^3 via normalized standard normals
    z = gen.standard_normal((size, 4))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms == 0.0):
        bad = norms == 0.0
        z[bad] = gen.standard_normal((int(bad.sum()), 4))
        norms = np.linalg.norm(z, axis=1)
    return z / norms[:, None]


def _flight_core(gen, dim: int, c: float, horizon: float, n: int) -> np.ndarray:
    times = _sorted_uniform(gen, n) * horizon
    seg = np.diff(times, prepend=0.0, append=horizon)
    dirs = _directions(gen, dim, n + 1)
    return c * (seg @ dirs)


def flight_position(dim: int, c: float, schedule: EventSchedule, rng) -> np.ndarray:
    """Terminal position of a planar (dim=2) or 4-D flight; norm <= c * horizon."""
    if dim not in (2, 4):
        raise DomainError(f"flights support dim in {{2, 4}}, got {dim}")
    if not c > 0.0:
        raise DomainError("speed c must be positive")
    gen = _as_generator(rng)
    seg = schedule.segment_lengths()
    dirs = _directions(gen, dim, schedule.count + 1)
    return c * (seg @ dirs)


def sample_flights(dim: int, c: float, cond, t: float, count: int, rng: RngStream,
                   lam: float = 1.0) -> SampleBatch:
    """Batch of flight positions, shape (count, dim)."""
    if dim not in (2, 4):
        raise DomainError(f"flights support dim in {{2, 4}}, got {dim}")
    if count < 1:
        raise DomainError("sample count must be >= 1")
    if not t > 0.0:
        raise DomainError("horizon must be positive")
    cursor = rng.substreams()
    out = np.empty((count, dim))
    for i in range(count):
        gen = cursor.at(i)
        n = _event_count(cond, lam, t, gen)
        out[i] = _flight_core(gen, dim, c, t, n)
    desc = f"flight dim={dim} c={c:g} t={t:g} {_cond_tag(cond)}"
    return SampleBatch(values=out, seed=rng.seed, descriptor=desc)
