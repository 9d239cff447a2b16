"""Shared brute-force oracles, kept deliberately independent of the library's
fast paths: codebooks are enumerated with itertools, not with unrank."""

from itertools import permutations, product

import numpy as np

from cpcodes.codec import VARIANT_II, InitialCodeword


def enumerate_codebook(cw: InitialCodeword) -> np.ndarray:
    """Every codeword of a single permutation codebook, by exhaustion."""
    base = tuple(cw.initial_vector())
    perms = sorted(set(permutations(base)))
    if cw.variant != VARIANT_II:
        return np.array(perms, dtype=float)
    rows = []
    for perm in perms:
        nonzero = [i for i, v in enumerate(perm) if v != 0.0]
        for signs in product((1.0, -1.0), repeat=len(nonzero)):
            row = list(perm)
            for pos, s in zip(nonzero, signs):
                row[pos] = s * row[pos]
            rows.append(row)
    return np.array(rows, dtype=float)


def brute_force_min_distance(x: np.ndarray, codebook: np.ndarray) -> float:
    """Minimum squared distance, computed with the same per-pair arithmetic as
    the encoder (elementwise difference, square, row sum)."""
    best = np.inf
    for start in range(0, len(codebook), 4096):
        block = codebook[start : start + 4096]
        d = np.sum((x[None, :] - block) ** 2, axis=1)
        best = min(best, float(d.min()))
    return best


def random_decreasing_levels(rng, K: int, variant: int, zero_last: bool = False):
    """Strictly decreasing levels with comfortable gaps; nonnegative for
    sign-carrying codebooks, optionally ending at exactly zero."""
    gaps = rng.uniform(0.3, 1.0, size=K)
    levels = np.cumsum(gaps[::-1])[::-1]
    if variant == VARIANT_II:
        if zero_last:
            levels = levels - levels[-1]
    else:
        levels = levels - levels.mean()
    return tuple(float(v) for v in levels)
