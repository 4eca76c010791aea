"""Reproducible random streams.

Every stochastic routine in the package takes either an :class:`RngStream`
or a ready ``numpy.random.Generator``.  A stream is just a ``(seed,
stream_id)`` pair; each call that receives one builds a fresh Philox
generator from ``SeedSequence([seed, stream_id])``, so results are a pure
function of the inputs and the pair.  Passing a ``Generator`` instead
consumes its state like any numpy code would.

Sequential jit kernels do not call numpy's generators.  They draw from a
SplitMix64 counter stream instead: draw ``i`` is a fixed hash of
``key + i * golden``, with the key taken from the same seed sequence.
The kernel state is a one-element ``uint64`` array holding the counter.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._jit import njit

_MASK64 = (1 << 64) - 1
_KERNEL_TAG = 0x5EED

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit
def next_u64(st):
    z = st[0] + _GOLDEN
    st[0] = z
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit
def next_uniform(st):
    """U[0,1) with 53 random bits."""
    return np.float64(next_u64(st) >> _S11) * _INV53


@njit
def next_coin_uniform(st):
    """A fair coin (top bit) and an independent U[0,1) from the remaining bits."""
    z = next_u64(st)
    coin = (z >> _S63) == _ONE
    return coin, np.float64((z << _ONE) >> _S11) * _INV53


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if int(self.stream_id) < 0:
            raise ValueError(f"stream_id must be non-negative, got {self.stream_id}")

    def generator(self, *substream: int) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.seed), int(self.stream_id), *map(int, substream)])
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def kernel_state(self, *substream: int) -> np.ndarray:
        """Counter state for :func:`next_u64`, keyed by this stream."""
        ss = np.random.SeedSequence([int(self.seed), int(self.stream_id), _KERNEL_TAG, *map(int, substream)])
        return ss.generate_state(1, np.uint64)


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"expected RngStream, Generator or int seed, got {type(rng).__name__}")


def as_kernel_state(rng: "RngLike") -> np.ndarray:
    """Kernel counter state from a stream, an int seed, or a Generator (consumes one draw)."""
    if isinstance(rng, np.random.Generator):
        return rng.integers(0, 2**64, size=1, dtype=np.uint64)
    if isinstance(rng, (int, np.integer)):
        rng = RngStream(int(rng))
    return rng.kernel_state()
