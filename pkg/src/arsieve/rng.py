"""Deterministic, platform-stable pseudo-random generation.

Every stochastic operation in this package draws from a counter-based
SplitMix64 stream.  The k-th raw output for seed ``s`` is

    out_k = mix64((s + k * GAMMA) mod 2^64),   k = 1, 2, ...

where ``GAMMA = 0x9E3779B97F4A7C15`` (the 64-bit golden ratio) and
``mix64`` is the SplitMix64 avalanche finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

All arithmetic is modulo 2^64, so streams are bit-identical on every
platform.  Because outputs are indexed by a counter, batch generation and
rejection sampling can be vectorised while remaining exactly equivalent to
one-draw-at-a-time consumption: after a rejection pass the counter is reset
to the position just past the last accepted draw.

Seed derivation for parallel work uses :func:`stable_mix`, a chained
application of the same finalizer.  For a fixed root seed it is injective
in each index argument, so distinct replicate indices can never collide.
Reference outputs are committed in ``tests/data/rng_test_vectors.csv``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_MULT_1 = 0xBF58476D1CE4E5B9
_MIX_MULT_2 = 0x94D049BB133111EB

# float in [0, 1) from the top 53 bits of a 64-bit word
_INV_2_53 = 2.0 ** -53

_GAMMA_U64 = np.uint64(_GAMMA)
_MULT1_U64 = np.uint64(_MIX_MULT_1)
_MULT2_U64 = np.uint64(_MIX_MULT_2)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer (pure Python, exact)."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * _MIX_MULT_1) & _MASK64
    z ^= z >> 27
    z = (z * _MIX_MULT_2) & _MASK64
    z ^= z >> 31
    return z


def stable_mix(root_seed: int, *indices: int) -> int:
    """Derive a 64-bit sub-seed from a root seed and integer indices.

    Defined as ``h = mix64(root)`` followed, for each index ``ix``, by
    ``h = mix64(h XOR mix64(ix + GAMMA))``.  For a fixed prefix the map is
    injective in the final index, so sub-seeds for distinct replicate (or
    cell, or stage) indices never collide.
    """
    h = mix64(root_seed & _MASK64)
    for ix in indices:
        h = mix64(h ^ mix64((ix + _GAMMA) & _MASK64))
    return h


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MULT1_U64
    z = z ^ (z >> np.uint64(27))
    z = z * _MULT2_U64
    return z ^ (z >> np.uint64(31))


class SeededGenerator:
    """Counter-based SplitMix64 stream with vectorised draw methods.

    The generator state is ``(seed, counter)``.  Draw methods consume the
    stream in order; rejection-based methods rewind the counter to just
    past the last accepted raw output so that vectorised generation is
    exactly equivalent to scalar generation.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.counter = 0

    # -- raw stream ----------------------------------------------------

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * _GAMMA) & _MASK64)

    def u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        if n < 0:
            raise InvalidInputError("draw count must be non-negative")
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix64_vec(np.uint64(self.seed) + ks * _GAMMA_U64)

    # -- uniforms ------------------------------------------------------

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1), one raw output each."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    # -- integers ------------------------------------------------------

    def indices(self, count: int, bound: int) -> np.ndarray:
        """``count`` unbiased integers in [0, bound).

        Uses rejection of the modulo tail: a raw output ``u`` is accepted
        iff ``u < 2^64 - (2^64 mod bound)``, then mapped to ``u % bound``.
        """
        if bound < 1:
            raise InvalidInputError("bound must be >= 1")
        if count < 0:
            raise InvalidInputError("draw count must be non-negative")
        bound_u = np.uint64(bound)
        threshold = ((1 << 64) // bound) * bound  # multiple of bound
        thr_u = np.uint64(threshold & _MASK64)  # 0 means "accept all"
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            need = count - filled
            chunk = need + (need >> 2) + 8
            start = self.counter
            raw = self.u64(chunk)
            ok = raw < thr_u if threshold <= _MASK64 else np.ones(chunk, dtype=bool)
            n_ok = int(ok.sum())
            if n_ok >= need:
                # rewind to just past the raw draw giving the last needed accept
                last = int(np.nonzero(np.cumsum(ok) == need)[0][0])
                self.counter = start + last + 1
                accepted = raw[: last + 1][ok[: last + 1]]
            else:
                accepted = raw[ok]
            take = accepted % bound_u
            out[filled : filled + take.size] = take.astype(np.int64)
            filled += take.size
        return out

    # -- normals -------------------------------------------------------

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normal doubles via the Marsaglia polar method.

        Consumes uniforms in pairs (u, v) on (-1, 1); a pair is accepted
        iff 0 < s = u^2 + v^2 < 1 and then yields the two normals
        u * sqrt(-2 ln s / s) and v * sqrt(-2 ln s / s), in that order.
        For odd ``n`` the second normal of the final pair is discarded.
        """
        if n < 0:
            raise InvalidInputError("draw count must be non-negative")
        pairs_needed = (n + 1) // 2
        us = np.empty(pairs_needed)
        vs = np.empty(pairs_needed)
        ss = np.empty(pairs_needed)
        filled = 0
        while filled < pairs_needed:
            need = pairs_needed - filled
            chunk = need + (need >> 1) + 8  # polar acceptance rate is pi/4
            start = self.counter
            flat = self.uniforms(2 * chunk) * 2.0 - 1.0
            u = flat[0::2]
            v = flat[1::2]
            s = u * u + v * v
            ok = (s > 0.0) & (s < 1.0)
            n_ok = int(ok.sum())
            if n_ok >= need:
                last = int(np.nonzero(np.cumsum(ok) == need)[0][0])
                self.counter = start + 2 * (last + 1)
                sel = ok[: last + 1]
                u, v, s = u[: last + 1][sel], v[: last + 1][sel], s[: last + 1][sel]
            else:
                u, v, s = u[ok], v[ok], s[ok]
            us[filled : filled + u.size] = u
            vs[filled : filled + u.size] = v
            ss[filled : filled + u.size] = s
            filled += u.size
        factor = np.sqrt(-2.0 * np.log(ss) / ss)
        out = np.empty(2 * pairs_needed)
        out[0::2] = us * factor
        out[1::2] = vs * factor
        return out[:n]


def draw_uniform_index(gen: SeededGenerator, n: int) -> int:
    """One unbiased integer in [0, n) from ``gen``."""
    if n < 1:
        raise InvalidInputError("bound must be >= 1")
    return int(gen.indices(1, n)[0])


def draw_standard_normal(gen: SeededGenerator) -> float:
    """One standard normal draw from ``gen`` (polar method)."""
    return float(gen.normals(1)[0])


def spawn(root_seed: int, *indices: int) -> SeededGenerator:
    """Generator seeded with ``stable_mix(root_seed, *indices)``."""
    return SeededGenerator(stable_mix(root_seed, *indices))
