"""Seeded index selection: squared-norm weighted draws and the cyclic rule.

The generator is SplitMix64 used in counter mode: the ``k``-th 64-bit word
of a stream is ``mix(seed + (k + 1) * GAMMA)``. That makes any block of
draws computable in one vectorised numpy call and bit-identical on every
platform, independent of numpy's own bit generators.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

__all__ = [
    "NonPositiveWeight",
    "RngState",
    "WeightedSampler",
    "CyclicState",
    "build_sampler",
    "draw",
    "cycle_next",
]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


class NonPositiveWeight(ValueError):
    pass


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


class RngState:
    """Counter-mode SplitMix64 stream.

    Parameters
    ----------
    seed : int
        Any Python integer; reduced modulo 2**64.
    counter : int
        Number of 64-bit words already consumed.
    """

    def __init__(self, seed=0, counter=0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def __repr__(self):
        return f"RngState(seed={self.seed}, counter={self.counter})"

    def copy(self):
        return RngState(self.seed, self.counter)

    def next_u64(self, count):
        k = np.arange(self.counter + 1, self.counter + 1 + count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            words = _mix(np.uint64(self.seed) + k * _GAMMA)
        self.counter += count
        return words

    def uniforms(self, count):
        """``count`` doubles on the grid ``{0, 2**-53, ..., 1 - 2**-53}``."""
        return (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * _TWO_M53

    def uniform(self):
        return float(self.uniforms(1)[0])

    def normals(self, count):
        """Standard normal variates by the Box-Muller transform.

        Each pair of words yields two variates; an odd ``count`` discards the
        last one so the stream position is always advanced by an even number.
        """
        pairs = (count + 1) // 2
        w = self.next_u64(2 * pairs) >> np.uint64(11)
        u1 = (w[0::2].astype(np.float64) + 1.0) * _TWO_M53  # (0, 1], keeps log finite
        u2 = w[1::2].astype(np.float64) * _TWO_M53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]


class WeightedSampler:
    """Inverse-CDF sampler over ``0..len-1`` with ``P(i) = w_i / sum(w)``."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise NonPositiveWeight("at least one weight is required")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            bad = np.flatnonzero(~(w > 0.0) | ~np.isfinite(w))
            raise NonPositiveWeight(f"weights must be finite and > 0; offending indices {bad[:10].tolist()}")
        self.cumulative = np.cumsum(w)
        self.cumulative.setflags(write=False)
        self.total = float(self.cumulative[-1])
        self._cum_list = self.cumulative.tolist()

    def __len__(self):
        return self.cumulative.size

    @property
    def probabilities(self):
        return np.diff(self.cumulative, prepend=0.0) / self.total

    def index_for(self, u):
        """Map one uniform variate in ``[0, 1)`` to an index."""
        i = bisect_right(self._cum_list, u * self.total)
        return min(i, len(self) - 1)

    def indices_for(self, u):
        idx = np.searchsorted(self.cumulative, np.asarray(u) * self.total, side="right")
        return np.minimum(idx, len(self) - 1)

    def draw(self, rng):
        return self.index_for(rng.uniform())

    def draw_many(self, rng, count):
        return self.indices_for(rng.uniforms(count))


class CyclicState:
    """Deterministic sweep ``k mod modulus`` (0-based)."""

    def __init__(self, modulus, k=0):
        if modulus < 1:
            raise ValueError("modulus must be >= 1")
        self.modulus = int(modulus)
        self.k = int(k)

    def next(self):
        i = self.k % self.modulus
        self.k += 1
        return i

    def take(self, count):
        out = np.arange(self.k, self.k + count, dtype=np.int64) % self.modulus
        self.k += count
        return out


def build_sampler(weights):
    return WeightedSampler(weights)


def draw(sampler, rng):
    return sampler.draw(rng)


def cycle_next(state):
    return state.next()
