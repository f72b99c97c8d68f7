"""Seeded permutation streams.

The generator is counter based so that the permutation of epoch t depends only
on (seed, t), never on how many epochs were drawn before:

    mix(z)  = SplitMix64 finalizer
    key     = mix(seed + t * G)                       (mod 2^64)
    draw_k  = mix(key + k * G),  k = 1, 2, ...        G = 0x9E3779B97F4A7C15

Fisher-Yates runs i = N-1 .. 1 and takes j = draw mod (i+1), rejecting draws
below 2^64 mod (i+1) so that every index is exactly equally likely.  Entries
are 0-based.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .errors import ConfigurationError, InvalidParameterError

_MASK = (1 << 64) - 1
_G = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _fisher_yates_python(seed, t0, count, N):
    out = np.empty((count, N), dtype=np.int64)
    for c in range(count):
        key = _mix((seed + (t0 + c) * _G) & _MASK)
        perm = list(range(N))
        ctr = 0
        for i in range(N - 1, 0, -1):
            bound = i + 1
            thresh = (1 << 64) % bound
            while True:
                ctr += 1
                r = _mix((key + ctr * _G) & _MASK)
                if r >= thresh:
                    break
            j = r % bound
            perm[i], perm[j] = perm[j], perm[i]
        out[c] = perm
    return out


def uniform_permutations(seed, t0, count, N):
    """Permutations for epochs t0, ..., t0 + count - 1 as a (count, N) array."""
    if not 0 <= seed <= _MASK:
        raise InvalidParameterError("seed must be an unsigned 64-bit integer")
    if _backend.use_numba():
        from . import _jit
        return _jit.fisher_yates(np.uint64(seed), t0, count, N)
    return _fisher_yates_python(seed, t0, count, N)


@dataclass(frozen=True)
class PermutationSource:
    """Where each epoch's component order comes from.

    Build with :meth:`uniform`, :meth:`identity` (the incremental gradient
    order) or :meth:`explicit`.
    """

    mode: str
    seed: Optional[int] = None
    perms: Optional[tuple] = None

    @classmethod
    def uniform(cls, seed):
        return cls("uniform", seed=int(seed))

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def explicit(cls, perms: Sequence[Sequence[int]]):
        return cls("explicit", perms=tuple(tuple(int(i) for i in p) for p in perms))

    def batch(self, t0, count, N):
        """Permutations for epochs t0 .. t0+count-1 (t is 1-based)."""
        if self.mode == "uniform":
            return uniform_permutations(self.seed, t0, count, N)
        if self.mode == "identity":
            return np.tile(np.arange(N, dtype=np.int64), (count, 1))
        if self.mode == "explicit":
            if t0 - 1 + count > len(self.perms):
                raise ConfigurationError(
                    f"explicit permutation list has {len(self.perms)} entries, "
                    f"epoch {t0 - 1 + count} requested")
            out = np.array(self.perms[t0 - 1:t0 - 1 + count], dtype=np.int64).reshape(count, N)
            if np.any(np.sort(out, axis=1) != np.arange(N)):
                raise ConfigurationError("explicit entries must be permutations of 0..N-1")
            return out
        raise ConfigurationError(f"unknown permutation mode {self.mode!r}")


def sample_permutation(source, t, N):
    return source.batch(t, 1, N)[0]
