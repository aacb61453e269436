"""Brownian increments on dyadic grids and keyed reproducible RNG streams.

Each observation interval of length delta is discretized into 2^level equal
steps.  Increments at adjacent levels nest: summing fine increments pairwise
gives exactly the increments of the next coarser grid, which is what the
level coupling relies on.

Randomness is organized as counter-based keyed streams: a stream is a master
seed plus a tuple of key parts (strings or integers).  Distinct key tuples
give statistically independent generators, identical tuples give identical
draws, independent of execution order.  This is what makes parallel chains
and repetitions bitwise reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CannotCoarsenError

_U64 = (1 << 64) - 1


def _encode_key_part(part):
    """Map a key part to a stable non-negative integer for SeedSequence."""
    if isinstance(part, (int, np.integer)):
        return int(part) & _U64
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported key part type: {type(part).__name__}")


@dataclass(frozen=True)
class RngStream:
    """A keyed handle into a reproducible family of random generators.

    Attributes:
        master_seed: 64-bit experiment master seed.
        key: tuple of sub-stream key parts (purpose strings, level, chain,
            iteration, interval indices and the like).
    """

    master_seed: int
    key: tuple = ()

    def child(self, *parts) -> "RngStream":
        """Derive a sub-stream by appending key parts."""
        return RngStream(self.master_seed, self.key + tuple(parts))

    def generator(self) -> np.random.Generator:
        """Instantiate the counter-based generator for this key."""
        entropy = [_encode_key_part(self.master_seed)]
        entropy.extend(_encode_key_part(p) for p in self.key)
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed, *parts) -> int:
    """Stable 63-bit integer seed from a master seed and key parts."""
    blob = b"".join(_encode_key_part(p).to_bytes(8, "little")
                    for p in (master_seed,) + parts)
    digest = hashlib.blake2b(blob, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class BrownianIncrements:
    """Increments of a d-dimensional Brownian motion over one observation interval.

    Attributes:
        level: dyadic refinement level l; the interval is split into 2^l steps.
        delta: observation interval length.
        increments: array of shape (2^l, d), row j ~ N(0, h I_d), h = delta 2^-l.
        interval_index: index k of the observation interval (bookkeeping only).
    """

    level: int
    delta: float
    increments: np.ndarray
    interval_index: int = 0
    dim: int = field(init=False)

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=np.float64)
        if self.increments.ndim != 2:
            raise ValueError("increments must have shape (2^level, dim)")
        if self.increments.shape[0] != 2 ** self.level:
            raise ValueError(
                f"level {self.level} requires {2 ** self.level} increments, "
                f"got {self.increments.shape[0]}"
            )
        self.dim = self.increments.shape[1]

    @property
    def step_size(self) -> float:
        return self.delta * 2.0 ** (-self.level)

    def displacement(self) -> np.ndarray:
        """Total W change over the interval.

        Reduces by iterated pairwise summation, the same association order
        used by coarsening, so the displacement is bit-identical at every
        level of the same underlying path.
        """
        acc = self.increments
        while acc.shape[0] > 1:
            acc = acc[0::2] + acc[1::2]
        return acc[0]


def sample_increments(level, delta, dim, rng, interval_index=0) -> BrownianIncrements:
    """Draw the 2^level Gaussian increments for one observation interval.

    Args:
        level: dyadic level, >= 0.
        delta: interval length.
        dim: Brownian dimension d.
        rng: numpy Generator (typically RngStream(...).generator()).
        interval_index: interval label stored on the result.

    Returns:
        BrownianIncrements with rows ~ N(0, delta 2^-level I_d).
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    h = delta * 2.0 ** (-level)
    incs = rng.standard_normal((2 ** level, dim)) * np.sqrt(h)
    return BrownianIncrements(level=level, delta=delta, increments=incs,
                              interval_index=interval_index)


def coarsen(fine: BrownianIncrements) -> BrownianIncrements:
    """Project increments one level down by pairwise summation.

    The sum of each adjacent pair of fine increments is exactly the increment
    of the coarser grid over the doubled step, so the coarse scheme is driven
    by the same Brownian path.  One addition per component, no rescaling.
    """
    if fine.level < 1:
        raise CannotCoarsenError("level-0 increments cannot be coarsened")
    summed = fine.increments[0::2] + fine.increments[1::2]
    return BrownianIncrements(level=fine.level - 1, delta=fine.delta,
                              increments=summed, interval_index=fine.interval_index)
