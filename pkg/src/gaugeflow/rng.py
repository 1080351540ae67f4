"""Deterministic random numbers: a splitmix64 stream with Box-Muller normals.

Every stochastic choice in this package (dataset sampling, weight init,
batch shuffling, path draws) goes through `Prng`, so a seed pins down every
output byte. splitmix64 advances its state by a fixed odd increment per
draw, which makes the stream counter-based: draw number k (1-indexed from
the current state) is `mix(state + k*GOLDEN)`. The block helpers below
exploit this to produce, vectorized, exactly the values that repeated
scalar calls would produce.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U53 = 2.0 ** -53


def _mix(z: int) -> int:
    # splitmix64 output function on python ints, masked to 64 bits
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix_vec(z: np.ndarray) -> np.ndarray:
    # same output function on uint64 arrays; unsigned overflow wraps, which
    # is exactly the mod-2^64 arithmetic we want
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Prng:
    """splitmix64 generator; identical seeds give bit-identical streams."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    # -- raw draws ----------------------------------------------------------

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix(self.state)

    def _counters(self, n: int) -> np.ndarray:
        # counters for the next n draws, then advance the state past them
        c = np.uint64(self.state) + np.uint64(_GOLDEN) * np.arange(1, n + 1, dtype=np.uint64)
        self.state = (self.state + n * _GOLDEN) & _MASK64
        return c

    # -- uniforms -----------------------------------------------------------

    def uniform(self) -> float:
        # f64 in [0, 1) with 53 significant bits
        return (self.next_u64() >> 11) * _U53

    def uniforms(self, n: int) -> np.ndarray:
        return (_mix_vec(self._counters(n)) >> np.uint64(11)).astype(np.float64) * _U53

    # -- normals ------------------------------------------------------------

    def normals(self, n: int) -> np.ndarray:
        """n standard normals; Box-Muller on consecutive uniform pairs.

        Pair i of uniforms yields normals (2i, 2i+1); for odd n the sine
        half of the last pair is dropped, so the call always consumes
        2*ceil(n/2) uniform draws.
        """
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        return _box_muller(u[0::2], u[1::2])[:n]

    def normal(self) -> float:
        return self.normals(1)[0]

    # -- structured blocks ---------------------------------------------------

    def uniform_normal_records(self, count: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Per record: one uniform, then n normals, in record order.

        Returns (uniforms of shape (count,), normals of shape (count, n)).
        The stream consumed is identical to calling `uniform()` followed by
        `normals(n)` once per record; the counter-based form just does it in
        one shot.
        """
        pairs = (n + 1) // 2
        per = 1 + 2 * pairs
        offsets = (np.arange(count, dtype=np.uint64)[:, None] * np.uint64(per)
                   + np.arange(1, per + 1, dtype=np.uint64)[None, :])
        raw = np.uint64(self.state) + np.uint64(_GOLDEN) * offsets
        self.state = (self.state + count * per * _GOLDEN) & _MASK64
        u = (_mix_vec(raw) >> np.uint64(11)).astype(np.float64) * _U53
        z = _box_muller(u[:, 1::2].ravel(), u[:, 2::2].ravel())
        return u[:, 0], z.reshape(count, 2 * pairs)[:, :n]

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): argsort of n uniform keys."""
        return np.argsort(self.uniforms(n), kind="stable")


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    # 1-u1 lies in (0, 1], keeping the log finite for every stream value
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    out = np.empty(2 * u1.shape[0])
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out
