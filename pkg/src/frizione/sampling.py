"""Exact samplers: friction angles, Poisson schedules, and random clocks.

All samplers are pure given an ``RngStream`` value: the same
(seed, stream_index) pair and arguments reproduce the same draws,
independent of thread count or batch layout. Batch generation indexes
disjoint Philox counter blocks per sample, so it is order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "SubstreamCursor",
    "EventSchedule",
    "BesselTime",
    "GammaChain",
    "SojournTime",
    "BesselOfGamma",
    "GaussianModulus",
    "Fbm",
    "IntegratedBrownian",
    "WienerIntegralTable",
    "TimeChange",
    "draw_angle",
    "draw_schedule",
    "draw_poisson",
    "draw_time",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Value handle for a reproducible random stream.

    Distinct (seed, stream_index) pairs yield statistically independent
    Philox streams; identical pairs yield identical sequences.
    """

    seed: int
    stream_index: int = 0

    def _key(self):
        return [self.seed & _MASK64, self.stream_index & _MASK64]

    def generator(self, block: int = 0) -> np.random.Generator:
        """Stateful generator positioned at counter block ``block``."""
        bg = np.random.Philox(key=self._key(), counter=[0, 0, block & _MASK64, 0])
        return np.random.Generator(bg)

    def substreams(self) -> "SubstreamCursor":
        return SubstreamCursor(self)


class SubstreamCursor:
    """Reusable per-sample generator over counter-indexed substreams.

    ``at(i)`` repositions a single Philox instance at counter block ``i``,
    bit-identical to constructing ``RngStream.generator(i)`` afresh but
    without the per-sample construction cost.
    """

    def __init__(self, stream: RngStream):
        self._bg = np.random.Philox(key=stream._key())
        self._gen = np.random.Generator(self._bg)
        self._template = self._bg.state

    def at(self, index: int) -> np.random.Generator:
        st = self._template
        st["state"]["counter"][:] = 0
        st["state"]["counter"][2] = index & _MASK64
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise DomainError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# event schedules
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EventSchedule:
    """Horizon, event count and strictly increasing event times in (0, horizon)."""

    horizon: float
    times: np.ndarray

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise DomainError("EventSchedule horizon must be positive")
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.size:
            if not (np.all(t > 0.0) and np.all(t < self.horizon)):
                raise DomainError("event times must lie in the open interval (0, horizon)")
            if not np.all(np.diff(t) > 0.0):
                raise DomainError("event times must be strictly increasing")

    @property
    def count(self) -> int:
        return int(self.times.size)

    def segment_lengths(self) -> np.ndarray:
        """Waiting times between consecutive events, end points included."""
        return np.diff(np.concatenate(([0.0], self.times, [self.horizon])))


def draw_schedule(n: int, t: float, rng) -> EventSchedule:
    """Order statistics of n independent uniforms on (0, t)."""
    if n < 0:
        raise DomainError("event count must be nonnegative")
    if not t > 0.0:
        raise DomainError("horizon must be positive")
    gen = _as_generator(rng)
    times = _sorted_uniform(gen, n) * t
    return EventSchedule(horizon=t, times=times)


def _sorted_uniform(gen: np.random.Generator, n: int) -> np.ndarray:
    """Strictly increasing order statistics of n uniforms on (0, 1)."""
    if n == 0:
        return np.empty(0)
    u = gen.random(n)
    u.sort()
    while u[0] == 0.0 or np.any(np.diff(u) == 0.0):
        u = gen.random(n)
        u.sort()
    return u


# ---------------------------------------------------------------------------
# friction angles
# ---------------------------------------------------------------------------

_THETA_LO = math.ulp(0.0)
_THETA_HI = math.pi - math.ulp(math.pi)


def _draw_angles(nu: float, size: int, gen: np.random.Generator) -> np.ndarray:
    """Angles with density proportional to sin^(2 nu) on (0, pi).

    Exact: V ~ Beta(nu+1/2, nu+1/2) via a pair of Gamma draws, then
    theta = arccos(2V - 1), so cos(theta) has density ~ (1-u^2)^(nu-1/2).
    """
    a = nu + 0.5
    g = gen.standard_gamma(a, size=(2, size))
    v = g[0] / (g[0] + g[1])
    theta = np.arccos(np.clip(2.0 * v - 1.0, -1.0, 1.0))
    return np.clip(theta, _THETA_LO, _THETA_HI)


def draw_angle(nu: float, rng) -> float:
    """One friction angle in (0, pi) for friction level nu >= 0."""
    if not nu >= 0.0:
        raise DomainError(f"friction level must be nonnegative, got {nu}")
    gen = _as_generator(rng)
    return float(_draw_angles(nu, 1, gen)[0])


def draw_poisson(mean: float, rng) -> int:
    """Poisson variate, mean >= 0."""
    if not mean >= 0.0:
        raise DomainError(f"Poisson mean must be nonnegative, got {mean}")
    gen = _as_generator(rng)
    return int(gen.poisson(mean))


# ---------------------------------------------------------------------------
# random clocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fbm:
    """Fractional Brownian modulus clock; variance t^(2H)."""

    hurst: float

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise DomainError("Hurst index must lie in (0, 1)")

    def variance_at(self, t: float) -> float:
        return t ** (2.0 * self.hurst)


@dataclass(frozen=True)
class IntegratedBrownian:
    """Integrated Brownian motion modulus; variance t^3 / 3."""

    def variance_at(self, t: float) -> float:
        return t ** 3 / 3.0


@dataclass(frozen=True)
class WienerIntegralTable:
    """Tabulated variance curve sigma^2(t) for a Wiener integral clock."""

    table: tuple

    def __post_init__(self):
        tab = tuple((float(a), float(b)) for a, b in self.table)
        object.__setattr__(self, "table", tab)
        if len(tab) < 2:
            raise DomainError("variance table needs at least two points")
        ts = [p[0] for p in tab]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("variance table times must be strictly increasing")
        if any(p[1] < 0.0 for p in tab):
            raise DomainError("variances must be nonnegative")

    def variance_at(self, t: float) -> float:
        ts = [p[0] for p in self.table]
        if not ts[0] <= t <= ts[-1]:
            raise DomainError(f"horizon {t} outside variance table [{ts[0]}, {ts[-1]}]")
        return float(np.interp(t, ts, [p[1] for p in self.table]))


@dataclass(frozen=True)
class BesselTime:
    """Bessel clock R^d, iterated ``iterations`` extra times (0 = plain)."""

    d: int
    iterations: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("Bessel clock dimension must be >= 1")
        if self.iterations < 0:
            raise DomainError("Bessel clock iterations must be >= 0")


@dataclass(frozen=True)
class GammaChain:
    """Nested Gamma clocks; alphas[0] is the outermost shape."""

    alphas: tuple

    def __post_init__(self):
        al = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", al)
        if not al:
            raise DomainError("GammaChain requires at least one shape parameter")
        if any(a <= 0.0 for a in al):
            raise DomainError("GammaChain shapes must be positive")


@dataclass(frozen=True)
class SojournTime:
    """Time spent positive by a Brownian motion on [0, t]; arcsine law."""


@dataclass(frozen=True)
class BesselOfGamma:
    """Bessel clock run at an independent Gamma time."""

    d: int
    alpha: float

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("Bessel clock dimension must be >= 1")
        if not self.alpha > 0.0:
            raise DomainError("Gamma shape must be positive")


@dataclass(frozen=True)
class GaussianModulus:
    """|N(0, sigma^2(t))| clock; only the marginal variance at t matters."""

    variance: Union[Fbm, IntegratedBrownian, WienerIntegralTable]


TimeChange = Union[BesselTime, GammaChain, SojournTime, BesselOfGamma, GaussianModulus]


def _bessel_draw(d: int, horizon: float, gen: np.random.Generator) -> float:
    # R^d(s) = sqrt(s * chi^2_d)
    return math.sqrt(horizon * gen.chisquare(d))


def draw_time(change, t: float, rng) -> float:
    """One draw of the random clock at horizon t."""
    if not t > 0.0:
        raise DomainError("horizon must be positive")
    gen = _as_generator(rng)
    if isinstance(change, BesselTime):
        s = t
        for _ in range(change.iterations + 1):
            s = _bessel_draw(change.d, s, gen)
        return s
    if isinstance(change, GammaChain):
        # innermost shape first: Gamma(shape alpha, rate s) = std_gamma(alpha)/s
        s = t
        for a in reversed(change.alphas):
            s = gen.standard_gamma(a) / s
        return s
    if isinstance(change, SojournTime):
        return t * math.sin(0.5 * math.pi * gen.random()) ** 2
    if isinstance(change, BesselOfGamma):
        g = gen.standard_gamma(change.alpha) / t
        return _bessel_draw(change.d, g, gen) if g > 0.0 else 0.0
    if isinstance(change, GaussianModulus):
        sigma2 = change.variance.variance_at(t)
        return abs(math.sqrt(sigma2) * gen.standard_normal())
    raise DomainError(f"unknown time change {change!r}")
