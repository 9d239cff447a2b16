"""Encoding, decoding, and bijective indexing for permutation codebooks.

Encoding a vector against a union of permutation subcodebooks costs one sort
of the input plus O(J n) bookkeeping: the best codeword inside each subcode
is obtained by writing its level values into the sorted positions, and the
winner among the J candidates is a global nearest neighbor.

Index layout.  Codewords are ranked lexicographically with level 0 (the
largest value) as the smallest symbol, so the initial codeword itself always
has rank 0.  For sign-carrying codebooks the rank is
``perm_rank * 2**h + sign_bits`` where the h sign bits follow vector position
order, first nonzero-level position in the most significant bit, bit 1 for a
negative entry.  Zero-level positions carry no sign bit and decode to +0.0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .combinatorics import Composition, group_starts, multinomial_size, variant2_size

VARIANT_I = 1
VARIANT_II = 2

_MAGIC = b"CPC1"


class StreamError(ValueError):
    """Encoded stream is corrupt or inconsistent with the codebook."""


_sort_calls = 0


def sort_calls() -> int:
    """Number of input sorts performed so far (complexity accounting)."""
    return _sort_calls


@dataclass(frozen=True)
class InitialCodeword:
    """A composition plus its strictly decreasing level values."""

    composition: Composition
    levels: tuple[float, ...]
    variant: int = VARIANT_I

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.variant not in (VARIANT_I, VARIANT_II):
            raise ValueError(f"variant must be {VARIANT_I} or {VARIANT_II}")
        if len(self.levels) != self.composition.num_levels:
            raise ValueError(
                f"{len(self.levels)} levels for {self.composition.num_levels} groups"
            )
        if not all(math.isfinite(v) for v in self.levels):
            raise ValueError("levels must be finite")
        if any(a <= b for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must be strictly decreasing, got {self.levels}")
        if self.variant == VARIANT_II and self.levels[-1] < 0:
            raise ValueError("sign-carrying codebooks need nonnegative levels")

    @property
    def n(self) -> int:
        return self.composition.n

    @property
    def sign_bits(self) -> int:
        """Number of free sign positions: n, or n - n_K when the last level is 0."""
        if self.variant == VARIANT_I:
            return 0
        if self.levels[-1] == 0.0:
            return self.n - self.composition.parts[-1]
        return self.n

    @property
    def size(self) -> int:
        if self.variant == VARIANT_I:
            return multinomial_size(self.composition)
        return variant2_size(self.composition, self.sign_bits)

    def initial_vector(self) -> np.ndarray:
        """The level values expanded by multiplicity (descending)."""
        return np.repeat(np.asarray(self.levels, dtype=float), self.composition.parts)


@dataclass(frozen=True)
class ConcentricCode:
    """Union of permutation subcodebooks sharing one dimension and variant."""

    subcodes: tuple[InitialCodeword, ...]
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "subcodes", tuple(self.subcodes))
        if not self.subcodes:
            raise ValueError("need at least one subcode")
        n, variant = self.subcodes[0].n, self.subcodes[0].variant
        if any(cw.n != n or cw.variant != variant for cw in self.subcodes):
            raise ValueError("subcodes must share dimension and variant")
        if self.probs is not None:
            probs = tuple(float(p) for p in self.probs)
            object.__setattr__(self, "probs", probs)
            if len(probs) != len(self.subcodes):
                raise ValueError("one probability per subcode required")
            if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError("probabilities must be nonnegative and sum to 1")

    @property
    def n(self) -> int:
        return self.subcodes[0].n

    @property
    def variant(self) -> int:
        return self.subcodes[0].variant

    @property
    def J(self) -> int:
        return len(self.subcodes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(cw.size for cw in self.subcodes)


@dataclass(frozen=True)
class EncodedIndex:
    """Chosen subcode (0-based) and the codeword rank inside it."""

    sphere: int
    rank: int


def _order_desc(keys: np.ndarray) -> np.ndarray:
    """Indices sorting keys descending; ties keep the smaller original index."""
    global _sort_calls
    _sort_calls += 1
    return np.argsort(-keys, kind="stable")


def _place_levels(cw: InitialCodeword, x: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty(cw.n, dtype=float)
    out[order] = cw.initial_vector()
    if cw.variant == VARIANT_II:
        signs = np.where(x < 0, -1.0, 1.0)
        out = np.where(out != 0.0, signs * out, 0.0)
    return out


def encode_pc(x: np.ndarray, cw: InitialCodeword) -> np.ndarray:
    """Nearest codeword to ``x`` in the single permutation codebook of ``cw``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cw.n,):
        raise ValueError(f"expected a vector of length {cw.n}, got shape {x.shape}")
    keys = np.abs(x) if cw.variant == VARIANT_II else x
    return _place_levels(cw, x, _order_desc(keys))


def encode_cpc(x: np.ndarray, code: ConcentricCode) -> tuple[EncodedIndex, np.ndarray]:
    """Nearest codeword in the union codebook, with its index.

    A single sort of ``x`` serves every subcode; ties between subcodes break
    toward the smaller sphere index.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (code.n,):
        raise ValueError(f"expected a vector of length {code.n}, got shape {x.shape}")
    keys = np.abs(x) if code.variant == VARIANT_II else x
    order = _order_desc(keys)
    best_j, best_w, best_d = -1, None, math.inf
    for j, cw in enumerate(code.subcodes):
        w = _place_levels(cw, x, order)
        d = float(np.sum((x - w) ** 2))
        if d < best_d:
            best_j, best_w, best_d = j, w, d
    return EncodedIndex(best_j, rank_codeword(best_w, code.subcodes[best_j])), best_w


def sort_by_variant(x: np.ndarray, variant: int) -> np.ndarray:
    """Descending sort along the last axis, of magnitudes for variant II."""
    keys = np.abs(x) if variant == VARIANT_II else x
    return -np.sort(-keys, axis=-1)


def subcode_distances(sorted_samples: np.ndarray, code: ConcentricCode) -> np.ndarray:
    """Squared distances from each (pre-sorted) sample row to each subcode's codeword.

    ``sorted_samples`` must come from :func:`sort_by_variant`; for
    sign-carrying codebooks the sign-matched distance equals the distance in
    magnitude coordinates, so signs drop out here.
    """
    s = np.asarray(sorted_samples, dtype=float)
    x2 = np.einsum("ij,ij->i", s, s)
    cols = np.empty((s.shape[0], code.J), dtype=float)
    for j, cw in enumerate(code.subcodes):
        gs = np.add.reduceat(s, group_starts(cw.composition), axis=1)
        mu = np.asarray(cw.levels)
        const = float(np.dot(np.asarray(cw.composition.parts, dtype=float), mu * mu))
        cols[:, j] = const - 2.0 * (gs @ mu)
    return cols + x2[:, None]


# ---------------------------------------------------------------------------
# ranking / unranking


def _symbols_and_signs(w: np.ndarray, cw: InitialCodeword) -> tuple[list[int], int]:
    levels = cw.levels
    lookup = {lv: i for i, lv in enumerate(levels)}
    symbols = []
    sign_value = 0
    for v in w:
        v = float(v)
        key = abs(v) if cw.variant == VARIANT_II else v
        i = lookup.get(key)
        if i is None:
            raise ValueError(f"component {v!r} matches no level of {levels}")
        symbols.append(i)
        if cw.variant == VARIANT_II and levels[i] != 0.0:
            sign_value = (sign_value << 1) | (1 if v < 0 else 0)
    counts = [0] * len(levels)
    for s in symbols:
        counts[s] += 1
    if counts != list(cw.composition.parts):
        raise ValueError(
            f"level multiplicities {counts} do not match composition {cw.composition}"
        )
    return symbols, sign_value


def rank_codeword(w: np.ndarray, cw: InitialCodeword) -> int:
    """Exact index of a codeword in [0, size): permutation rank, then sign bits."""
    w = np.asarray(w, dtype=float)
    if w.shape != (cw.n,):
        raise ValueError(f"expected a vector of length {cw.n}")
    symbols, sign_value = _symbols_and_signs(w, cw)
    counts = list(cw.composition.parts)
    total = cw.n
    remaining = multinomial_size(cw.composition)
    rank = 0
    for s in symbols:
        for t in range(s):
            if counts[t]:
                rank += remaining * counts[t] // total
        remaining = remaining * counts[s] // total
        counts[s] -= 1
        total -= 1
    if cw.variant == VARIANT_II:
        rank = (rank << cw.sign_bits) | sign_value
    return rank


def unrank_codeword(rank: int, cw: InitialCodeword) -> np.ndarray:
    """Inverse of :func:`rank_codeword`."""
    if not 0 <= rank < cw.size:
        raise ValueError(f"rank {rank} out of range [0, {cw.size})")
    if cw.variant == VARIANT_II:
        perm_rank, sign_value = divmod(rank, 1 << cw.sign_bits)
    else:
        perm_rank, sign_value = rank, 0
    counts = list(cw.composition.parts)
    total = cw.n
    remaining = multinomial_size(cw.composition)
    symbols = []
    for _ in range(cw.n):
        for s in range(len(counts)):
            if counts[s] == 0:
                continue
            branch = remaining * counts[s] // total
            if perm_rank < branch:
                symbols.append(s)
                remaining = branch
                counts[s] -= 1
                total -= 1
                break
            perm_rank -= branch
    out = np.asarray(cw.levels, dtype=float)[symbols]
    if cw.variant == VARIANT_II:
        h = cw.sign_bits
        bit = h - 1
        for p in range(cw.n):
            if out[p] != 0.0:
                if (sign_value >> bit) & 1:
                    out[p] = -out[p]
                bit -= 1
    return out


def decode(idx: EncodedIndex, code: ConcentricCode) -> np.ndarray:
    """Reconstruct the codeword addressed by an encoded index."""
    if not 0 <= idx.sphere < code.J:
        raise ValueError(f"sphere {idx.sphere} out of range for J={code.J}")
    return unrank_codeword(idx.rank, code.subcodes[idx.sphere])


# ---------------------------------------------------------------------------
# serialization


def code_to_dict(code: ConcentricCode) -> dict:
    doc = {
        "variant": code.variant,
        "n": code.n,
        "subcodes": [
            {"parts": list(cw.composition.parts), "levels": list(cw.levels)}
            for cw in code.subcodes
        ],
    }
    if code.probs is not None:
        doc["probs"] = list(code.probs)
    return doc


def code_from_dict(doc: dict) -> ConcentricCode:
    variant = int(doc["variant"])
    subcodes = tuple(
        InitialCodeword(Composition(tuple(sc["parts"])), tuple(sc["levels"]), variant)
        for sc in doc["subcodes"]
    )
    probs = tuple(doc["probs"]) if "probs" in doc else None
    code = ConcentricCode(subcodes, probs=probs)
    if code.n != int(doc["n"]):
        raise ValueError(f"declared n={doc['n']} but subcodes have n={code.n}")
    return code


def save_code(path, code: ConcentricCode, extra: dict | None = None) -> None:
    doc = code_to_dict(code)
    if extra:
        doc.update(extra)
    with open(path, "w", newline="\n") as fp:
        json.dump(doc, fp, indent=2, sort_keys=True)
        fp.write("\n")


def load_code(path) -> ConcentricCode:
    with open(path) as fp:
        return code_from_dict(json.load(fp))


def _write_varint(fp, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        fp.write(bytes([byte | (0x80 if value else 0)]))
        if not value:
            return


def _read_varint(fp) -> int | None:
    shift = 0
    value = 0
    started = False
    while True:
        chunk = fp.read(1)
        if not chunk:
            if started:
                raise StreamError("truncated varint")
            return None
        started = True
        byte = chunk[0]
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value
        shift += 7


def write_stream(fp, code: ConcentricCode, indices) -> int:
    """Write encoded indices; record format is (sphere varint, rank length, rank bytes)."""
    fp.write(_MAGIC)
    _write_varint(fp, code.n)
    _write_varint(fp, code.variant)
    _write_varint(fp, code.J)
    count = 0
    for idx in indices:
        _write_varint(fp, idx.sphere)
        payload = idx.rank.to_bytes(max(1, (idx.rank.bit_length() + 7) // 8), "big")
        _write_varint(fp, len(payload))
        fp.write(payload)
        count += 1
    return count


def read_stream(fp, code: ConcentricCode) -> list[EncodedIndex]:
    """Read and validate an encoded stream against its codebook."""
    if fp.read(len(_MAGIC)) != _MAGIC:
        raise StreamError("bad magic; not an encoded-index stream")
    n, variant, j_count = (_read_varint(fp) for _ in range(3))
    if (n, variant, j_count) != (code.n, code.variant, code.J):
        raise StreamError(
            f"stream header (n={n}, variant={variant}, J={j_count}) does not match codebook"
        )
    sizes = code.sizes
    out = []
    while True:
        sphere = _read_varint(fp)
        if sphere is None:
            return out
        if sphere >= code.J:
            raise StreamError(f"record {len(out)}: sphere {sphere} out of range")
        length = _read_varint(fp)
        if length is None:
            raise StreamError(f"record {len(out)}: missing rank")
        payload = fp.read(length)
        if len(payload) != length:
            raise StreamError(f"record {len(out)}: truncated rank payload")
        rank = int.from_bytes(payload, "big")
        if rank >= sizes[sphere]:
            raise StreamError(f"record {len(out)}: rank {rank} out of range")
        out.append(EncodedIndex(sphere, rank))
