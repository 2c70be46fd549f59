"""Big-endian base-m indexing of output strings.

``index_of((l_1, ..., l_t)) = sum_s l_s * m**(t - s)``, so the first symbol is
the most significant digit. Reverse (past) strings are indexed in the order
they are read backwards from the present, most recent symbol first.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfRange


@dataclass(frozen=True)
class IndexMap:
    m: int
    tau: int

    def __post_init__(self):
        if self.m < 1 or self.tau < 0:
            raise OutOfRange(f"invalid index map m={self.m}, tau={self.tau}")

    @property
    def size(self) -> int:
        return self.m**self.tau

    def index_of(self, s: Sequence[int]) -> int:
        if len(s) != self.tau:
            raise OutOfRange(f"string length {len(s)} != tau={self.tau}")
        idx = 0
        for sym in s:
            sym = int(sym)
            if not 0 <= sym < self.m:
                raise OutOfRange(f"symbol {sym} outside [0, {self.m})")
            idx = idx * self.m + sym
        return idx

    def string_of(self, idx: int) -> tuple[int, ...]:
        idx = int(idx)
        if not 0 <= idx < self.size:
            raise OutOfRange(f"index {idx} outside [0, {self.size})")
        out = []
        for _ in range(self.tau):
            idx, r = divmod(idx, self.m)
            out.append(r)
        return tuple(reversed(out))

    def index_rows(self, strings: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`index_of` over the rows of an integer array."""
        strings = np.asarray(strings, dtype=np.int64)
        if strings.ndim != 2 or strings.shape[1] != self.tau:
            raise OutOfRange(f"expected (count, {self.tau}) array, got {strings.shape}")
        if strings.size and (strings.min() < 0 or strings.max() >= self.m):
            raise OutOfRange(f"symbols outside [0, {self.m})")
        weights = self.m ** np.arange(self.tau - 1, -1, -1, dtype=np.int64)
        return strings @ weights

    def all_strings(self) -> np.ndarray:
        """All ``m**tau`` strings as rows, in index order."""
        idx = np.arange(self.size, dtype=np.int64)
        digits = np.empty((self.size, self.tau), dtype=np.int64)
        for s in range(self.tau - 1, -1, -1):
            idx, digits[:, s] = np.divmod(idx, self.m)
        return digits


def index_of(s: Sequence[int], m: int) -> int:
    return IndexMap(m, len(s)).index_of(s)


def string_of(idx: int, m: int, tau: int) -> tuple[int, ...]:
    return IndexMap(m, tau).string_of(idx)
