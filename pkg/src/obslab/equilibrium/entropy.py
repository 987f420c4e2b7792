"""Block entropy of d-branch itineraries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from obslab.errors import DomainError, UndersampledError

SAMPLES_PER_WORD = 10


class BlockCounts:
    """Counts of overlapping words of length 1..L, mergeable by addition.

    Words never straddle two sequences; within one sequence chunk boundaries
    are bridged by carrying the last L-1 symbols (call `end()` between
    sequences).
    """

    def __init__(self, d: int, L: int):
        if d < 2 or L < 1:
            raise DomainError("need d >= 2 and word length >= 1")
        if d**L > 1 << 28:
            raise DomainError(f"word table d^L = {d**L} too large")
        self.d, self.L = int(d), int(L)
        self.counts = [np.zeros(d**k, dtype=np.int64) for k in range(1, L + 1)]
        self._carry = np.zeros(0, dtype=np.int64)

    def update(self, symbols) -> "BlockCounts":
        s = np.concatenate([self._carry, np.asarray(symbols, dtype=np.int64)])
        c = len(self._carry)
        code = np.zeros(0, dtype=np.int64)
        for k in range(1, self.L + 1):
            m = s.size - k + 1
            if m <= 0:
                break
            code = s[:m].copy() if k == 1 else code[:m] * self.d + s[k - 1:k - 1 + m]
            # words starting before the carry boundary were counted in an earlier
            # call when they fitted entirely inside it
            start = max(0, c - k + 1)
            if start < m:
                self.counts[k - 1] += np.bincount(code[start:], minlength=self.d**k)
        self._carry = s[max(0, s.size - (self.L - 1)):] if self.L > 1 else s[:0]
        return self

    def end(self) -> "BlockCounts":
        self._carry = np.zeros(0, dtype=np.int64)
        return self

    def merge(self, other: "BlockCounts") -> "BlockCounts":
        if (other.d, other.L) != (self.d, self.L):
            raise DomainError("cannot merge count tables of different shape")
        out = BlockCounts(self.d, self.L)
        out.counts = [a + b for a, b in zip(self.counts, other.counts)]
        return out

    def total(self, k: int) -> int:
        return int(self.counts[k - 1].sum())

    def block_entropy(self, k: int) -> float:
        c = self.counts[k - 1]
        c = c[c > 0].astype(float)
        p = c / c.sum()
        return float(-(p * np.log(p)).sum())

    def observed(self, k: int) -> int:
        return int(np.count_nonzero(self.counts[k - 1]))

    def max_reliable_k(self) -> int:
        """Largest k with at least 10 d^(k+1) words of length k+1."""
        best = 0
        for k in range(1, self.L):
            if self.total(k + 1) >= SAMPLES_PER_WORD * self.d ** (k + 1):
                best = k
        return best


@dataclass
class EntropyEstimate:
    h: float
    error: float
    method: str
    k: int
    table: list = field(default_factory=list)  # rows (k, H_k, slope)
    monotone: bool = True
    samples: int = 0

    def as_dict(self) -> dict:
        return {"h": self.h, "h_err": self.error, "method": self.method, "k": self.k,
                "monotone": self.monotone, "samples": self.samples}


def entropy_from_counts(counts: BlockCounts, k: int) -> EntropyEstimate:
    """h_k = H_{k+1} - H_k; error = |h_k - h_{k-1}| + (B_{k+1} - 1) / (2 N)."""
    if k < 1 or k + 1 > counts.L:
        raise DomainError(f"order k = {k} needs words up to length {k + 1} (table has {counts.L})")
    d = counts.d
    N = counts.total(k + 1)
    if N < SAMPLES_PER_WORD * d ** (k + 1):
        raise UndersampledError(
            f"{N} words of length {k + 1} < {SAMPLES_PER_WORD} d^{k + 1}; reduce the order",
            counts.max_reliable_k(),
        )
    H = [0.0] + [counts.block_entropy(j) for j in range(1, k + 2)]
    slopes = [H[j + 1] - H[j] for j in range(0, k + 1)]  # slopes[j] = h_j (h_0 = H_1)
    table = [(j, H[j], slopes[j]) for j in range(0, k + 2) if j <= k]
    table.append((k + 1, H[k + 1], float("nan")))
    hk = slopes[k]
    gap = abs(hk - slopes[k - 1])
    bias = (counts.observed(k + 1) - 1) / (2.0 * N)
    mono = bool(np.all(np.diff(slopes[: k + 1]) <= 1e-12))
    return EntropyEstimate(float(hk), float(gap + bias), "symbolic_block", int(k), table, mono, N)


def count_symbols(sequences: Iterable, d: int, k: int) -> BlockCounts:
    bc = BlockCounts(d, k + 1)
    for seq in sequences:
        if isinstance(seq, np.ndarray) or isinstance(seq, list):
            bc.update(seq)
        else:
            for chunk in seq:
                bc.update(chunk)
        bc.end()
    return bc


def atomic_exact(mu) -> EntropyEstimate:
    if not mu.is_atomic:
        raise DomainError("atomic_exact needs a finitely supported measure")
    return EntropyEstimate(0.0, 0.0, "atomic_exact", 0, [], True, int(mu.weights.size))
