"""Buffer and mini-batch index partitions.

Iterations ``r``, buffers ``k`` and epochs ``t`` are 1-based, matching the way
the training loop counts them; row indices are 0-based.

Seeds for every shuffle come from ``SeedSequence([seed, r, k, t, tag])`` so the
buffer producer can derive any partition on its own without coordinating with
the consumer. ``fixed`` mode uses ``r = t = 0`` for all draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivisibilityError, DomainError

MODES = ("fixed", "reshuffle_per_iteration", "reshuffle_per_epoch")
_TAG_BUFFERS = 0
_TAG_MINIBATCHES = 1


def _permutation(n: int, *key: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(v) for v in key])))
    return rng.permutation(n)


@dataclass(frozen=True)
class PartitionPlan:
    N: int
    K: int
    M: int
    mode: str = "reshuffle_per_epoch"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown partition mode {self.mode!r}; expected one of {MODES}")
        if self.N < 1 or self.K < 1 or self.M < 1:
            raise DomainError("N, K and M must be positive")
        if self.N % self.K:
            raise DivisibilityError(f"K={self.K} does not divide N={self.N}")
        if (self.N // self.K) % self.M:
            raise DivisibilityError(f"M={self.M} does not divide buffer size {self.N // self.K}")

    @property
    def buffer_size(self) -> int:
        return self.N // self.K

    @property
    def batch_size(self) -> int:
        return self.N // (self.K * self.M)

    def buffers(self, r: int) -> list[np.ndarray]:
        """K disjoint sorted index arrays covering range(N)."""
        if r < 1:
            raise DomainError("iteration numbers start at 1")
        key_r = 0 if self.mode == "fixed" else r
        perm = _permutation(self.N, self.seed, key_r, 0, 0, _TAG_BUFFERS)
        return [np.sort(chunk) for chunk in np.split(perm, self.K)]

    def _minibatch_positions(self, r: int, k: int, t: int) -> list[np.ndarray]:
        if r < 1 or t < 1 or not 1 <= k <= self.K:
            raise DomainError(f"invalid (r, k, t) = ({r}, {k}, {t})")
        if self.mode == "fixed":
            key = (0, k, 0)
        elif self.mode == "reshuffle_per_iteration":
            key = (r, k, 0)
        else:
            key = (r, k, t)
        perm = _permutation(self.buffer_size, self.seed, *key, _TAG_MINIBATCHES)
        return [np.sort(chunk) for chunk in np.split(perm, self.M)]

    def minibatches(self, r: int, k: int, t: int, buffer: np.ndarray | None = None) -> list[np.ndarray]:
        """M disjoint sorted index arrays covering buffer ``k`` of iteration ``r``.

        ``buffer`` may be passed to skip recomputing ``buffers(r)[k - 1]``.
        """
        positions = self._minibatch_positions(r, k, t)
        if buffer is None:
            buffer = self.buffers(r)[k - 1]
        return [buffer[pos] for pos in positions]

    def local_minibatches(self, r: int, k: int, t: int) -> list[np.ndarray]:
        """Mini-batches as positions inside the sorted buffer array."""
        return self._minibatch_positions(r, k, t)
