"""Wick products of (jointly Gaussian) mode variables.

For up to four factors the Wick polynomial subtracts all pairings,

    :x1: = x1
    :x1 x2: = x1 x2 - E[x1 x2]
    :x1 x2 x3: = x1 x2 x3 - E[x2 x3] x1 - E[x1 x3] x2 - E[x1 x2] x3
    :x1 x2 x3 x4: = x1 x2 x3 x4 - sum_pairs E[..] x x + sum E[..]E[..],

so that E[: ... :] = 0, and the second moment of two Wick monomials of equal
order is the permanent-type sum over pairings between the two groups.
Covariances come from a CovOracle: a Hermitian table E[xi eta] indexed by
opaque variable ids (no conjugation convention; mode variables pair k with
-k as in the covariance relations of the linear level).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Callable, Hashable, Sequence

import numpy as np


class CovOracle:
    """Covariance table E[xi eta] over hashable variable ids.

    Symmetric in its two arguments (E[xi eta] = E[eta xi]); the stored pairs
    are canonicalized.  `hermitian_defect` checks conj-symmetry for oracles
    populated with both a variable and its conjugate partner.
    """

    def __init__(self, table: dict | None = None, fn: Callable | None = None):
        self._table = {}
        self._fn = fn
        if table:
            for (a, b), v in table.items():
                self._table[self._key(a, b)] = complex(v)

    @staticmethod
    def _key(a: Hashable, b: Hashable):
        return (a, b) if repr(a) <= repr(b) else (b, a)

    def __call__(self, a: Hashable, b: Hashable) -> complex:
        key = self._key(a, b)
        if key in self._table:
            return self._table[key]
        if self._fn is not None:
            return complex(self._fn(a, b))
        raise KeyError(f"no covariance for pair {key!r}")

    @classmethod
    def from_matrix(cls, ids: Sequence[Hashable], mat: np.ndarray) -> "CovOracle":
        mat = np.asarray(mat)
        table = {
            (ids[i], ids[j]): mat[i, j] for i in range(len(ids)) for j in range(i, len(ids))
        }
        return cls(table)


def _pairings(idx: Sequence[int]):
    """All perfect matchings of an even index set."""
    idx = list(idx)
    if not idx:
        yield []
        return
    first, rest = idx[0], idx[1:]
    for i, other in enumerate(rest):
        for tail in _pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, other)] + tail


@dataclass
class WickPolynomial:
    """Evaluator of :x_1 ... x_n: with frozen covariance contractions."""

    ids: tuple
    cov: CovOracle

    def __post_init__(self):
        n = len(self.ids)
        if not 1 <= n <= 4:
            raise ValueError(f"wick products are implemented for 1..4 factors, got {n}")

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        """samples has shape (n, ...) aligned with ids; returns the Wick product."""
        samples = np.asarray(samples)
        n = len(self.ids)
        if samples.shape[0] != n:
            raise ValueError("sample block count does not match variable count")
        out = np.prod(samples, axis=0).astype(np.complex128)
        idx = list(range(n))
        # subtract single-pair contractions, add back double pairings (n = 4)
        for pair in combinations(idx, 2):
            c = self.cov(self.ids[pair[0]], self.ids[pair[1]])
            rest = [i for i in idx if i not in pair]
            rest_prod = np.prod(samples[rest], axis=0) if rest else 1.0
            out -= c * rest_prod
        if n == 4:
            for m in _pairings(idx):
                term = 1.0
                for a, b in m:
                    term *= self.cov(self.ids[a], self.ids[b])
                out += term
        return out


def wick(ids: Sequence[Hashable], cov: CovOracle) -> WickPolynomial:
    return WickPolynomial(tuple(ids), cov)


def wick_pair_moment(
    left: Sequence[Hashable], right: Sequence[Hashable], cov: CovOracle
) -> complex:
    """E[:x_1..x_n: :y_1..y_n:] as the sum over pairings across the groups."""
    n = len(left)
    if len(right) != n or not 1 <= n <= 4:
        raise ValueError("need two groups of equal length in 1..4")
    total = 0.0 + 0.0j
    for perm in permutations(range(n)):
        term = 1.0 + 0.0j
        for i in range(n):
            term *= cov(left[i], right[perm[i]])
        total += term
    return total
