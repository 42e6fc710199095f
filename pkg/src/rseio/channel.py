"""Packet-arrival channels and exact sequence probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "ArrivalSequence",
    "Bernoulli",
    "DropoutModel",
    "Markov",
    "all_sequences",
    "channel_from_dict",
    "log_sequence_probability",
    "sample_sequence",
]


@dataclass(frozen=True)
class Bernoulli:
    """i.i.d. arrivals with ``P(gamma_t = 1) = gamma``."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"arrival probability {self.gamma} outside [0, 1]")


@dataclass(frozen=True)
class Markov:
    """Two-state Markov arrivals.

    Attributes
    ----------
    alpha : float
        ``P(gamma_{t+1} = 1 | gamma_t = 1)``.
    beta : float
        ``P(gamma_{t+1} = 0 | gamma_t = 0)``.
    gamma0 : float
        ``P(gamma_0 = 1)``; ``gamma_0`` drives the first transition but is
        never emitted.
    """

    alpha: float
    beta: float
    gamma0: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DomainError(f"Markov {name}={value} must lie in the open interval (0, 1)")
        if not 0.0 <= self.gamma0 <= 1.0:
            raise DomainError(f"Markov gamma0={self.gamma0} outside [0, 1]")

    @property
    def p_first(self) -> float:
        """Marginal ``P(gamma_1 = 1)``."""
        return self.alpha * self.gamma0 + (1.0 - self.beta) * (1.0 - self.gamma0)


DropoutModel = Bernoulli | Markov


@dataclass(frozen=True)
class ArrivalSequence:
    """Finite arrival record ``gamma_1 .. gamma_N``."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("arrival bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    @property
    def index(self) -> int:
        """Enumeration index ``m = sum_i 2^(i-1) gamma_i`` (i from 1)."""
        return sum(b << i for i, b in enumerate(self.bits))

    @classmethod
    def from_index(cls, m: int, n: int) -> "ArrivalSequence":
        return cls(tuple((m >> i) & 1 for i in range(n)))

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)


def sample_sequence(model: DropoutModel, n: int, rng_seed=None) -> ArrivalSequence:
    """Draw ``gamma_1 .. gamma_n``; deterministic given ``rng_seed``."""
    return ArrivalSequence(tuple(sample_bits(model, n, np.random.default_rng(rng_seed))))


def sample_bits(model: DropoutModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Array form of :func:`sample_sequence` drawing from an existing generator."""
    if n < 1:
        raise ValueError("sequence length must be >= 1")
    if isinstance(model, Bernoulli):
        return (rng.random(n) < model.gamma).astype(np.int8)
    u = rng.random(n + 1)
    out = np.empty(n, dtype=np.int8)
    state = u[0] < model.gamma0
    for i in range(n):
        state = u[i + 1] < (model.alpha if state else 1.0 - model.beta)
        out[i] = state
    return out


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def log_sequence_probability(model: DropoutModel, seq) -> float:
    """Exact log-probability of an arrival sequence.

    Returns ``-inf`` when the sequence is impossible.

    Examples
    --------
    >>> round(log_sequence_probability(Bernoulli(0.8), (1, 0, 1)), 4)
    -2.0557
    """
    bits = tuple(seq.bits if isinstance(seq, ArrivalSequence) else seq)
    if not bits:
        raise ValueError("sequence must be nonempty")
    ones = sum(bits)
    if isinstance(model, Bernoulli):
        zeros = len(bits) - ones
        # 0 * log 0 := 0 so that certain events keep probability one
        lp = ones * _log(model.gamma) if ones else 0.0
        lq = zeros * _log(1.0 - model.gamma) if zeros else 0.0
        return lp + lq
    a, b, g0 = model.alpha, model.beta, model.gamma0
    s1 = bits[0]
    # closed-form P(gamma_1 = 0) is b + g0 (1 - a - b); pick the matching branch
    total = _log(s1 + (1 - 2 * s1) * (b + g0 * (1.0 - a - b)))
    n11 = n10 = n01 = n00 = 0
    for prev, cur in zip(bits, bits[1:]):
        if prev and cur:
            n11 += 1
        elif prev:
            n10 += 1
        elif cur:
            n01 += 1
        else:
            n00 += 1
    return total + n11 * math.log(a) + n10 * math.log(1 - a) + n01 * math.log(1 - b) + n00 * math.log(b)


def all_sequences(n: int):
    """All ``2^n`` sequences ordered by enumeration index."""
    for m in range(2 ** n):
        yield ArrivalSequence.from_index(m, n)


def channel_from_dict(spec) -> DropoutModel:
    """Parse ``{"kind": "bernoulli", "gamma": g}`` or the Markov form."""
    if not isinstance(spec, dict):
        raise ConfigError("channel must be an object")
    kind = spec.get("kind")
    try:
        if kind == "bernoulli":
            _require_keys(spec, {"kind", "gamma"})
            return Bernoulli(float(spec["gamma"]))
        if kind == "markov":
            _require_keys(spec, {"kind", "alpha", "beta", "gamma0"})
            return Markov(float(spec["alpha"]), float(spec["beta"]), float(spec["gamma0"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise ConfigError(f"channel: {exc}") from None
    raise ConfigError(f"channel.kind must be 'bernoulli' or 'markov', got {kind!r}")


def _require_keys(spec, keys):
    if set(spec) != keys:
        raise ConfigError(f"channel of kind {spec['kind']!r} needs exactly the keys {sorted(keys)}")

