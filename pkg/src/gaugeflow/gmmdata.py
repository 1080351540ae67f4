"""Gaussian-mixture benchmark data: mean construction, sampling, binary I/O.

Component means follow a three-step deterministic recipe (primary axis,
secondary axis, extra offset for component indices past the dimension), so
a (n_dim, k, spread) triple pins the mixture down exactly. Sampling uses
the package Prng, one uniform (component pick) plus n_dim normals per
sample, in sample order.

Dataset files are a fixed little-endian binary layout. No normalization is
applied anywhere: samples carry the raw mixture scale.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Prng

MAGIC = b"GFMD"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Bad magic, truncated payload, or inconsistent dataset header."""


@dataclass
class GmmSpec:
    """Equally weighted isotropic Gaussian mixture."""

    n_dim: int
    k: int
    spread: float = 25.0
    cov_scale: float = 0.5

    def __post_init__(self):
        if not 2 <= self.n_dim <= 64:
            raise ValueError(f"n_dim must be in [2, 64], got {self.n_dim}")
        if self.k < 1:
            raise ValueError(f"component count must be >= 1, got {self.k}")
        if self.cov_scale <= 0:
            raise ValueError(f"cov_scale must be positive, got {self.cov_scale}")

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.k, 1.0 / self.k)

    def means(self) -> np.ndarray:
        return build_means(self.n_dim, self.k, self.spread)

    def digest(self) -> str:
        key = f"gmm:{self.n_dim}:{self.k}:{self.spread!r}:{self.cov_scale!r}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass
class Dataset:
    n_dim: int
    points: np.ndarray  # (count, n_dim) f64
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != self.n_dim:
            raise ValueError(f"points must have shape (count, {self.n_dim}), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("dataset contains non-finite values")

    @property
    def count(self) -> int:
        return self.points.shape[0]


def build_means(n_dim: int, k: int, spread: float) -> np.ndarray:
    """Deterministic component means, one row per component.

    For component i: put (-1)^i * spread on axis i mod n_dim; put
    (-1)^(i+1) * spread/2 on axis (i + k//2) mod n_dim when that axis
    differs from the first; for i >= n_dim (and k > n_dim) accumulate an
    extra offset 0.1 * spread * (i // n_dim), signed +1 when i % 3 == 0 and
    -1 otherwise, onto axis (first_axis + i // n_dim) mod n_dim.
    """
    if n_dim < 2:
        raise ValueError(f"n_dim must be >= 2, got {n_dim}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    means = np.zeros((k, n_dim))
    half = k // 2
    for i in range(k):
        a1 = i % n_dim
        means[i, a1] = spread if i % 2 == 0 else -spread
        a2 = (i + half) % n_dim
        if a2 != a1:
            means[i, a2] = -0.5 * spread if i % 2 == 0 else 0.5 * spread
        if k > n_dim and i >= n_dim:
            b = (a1 + i // n_dim) % n_dim
            sign = 1.0 if i % 3 == 0 else -1.0
            means[i, b] += sign * 0.1 * spread * (i // n_dim)
    return means


def sample_dataset(spec: GmmSpec, count: int, seed: int, split: str = "") -> Dataset:
    """Draw count i.i.d. mixture samples.

    Per sample, in stream order: one uniform picks the component (weights
    are equal), then n_dim normals give x = mu_k + sqrt(cov_scale) * z.
    """
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    rng = Prng(seed)
    us, zs = rng.uniform_normal_records(count, spec.n_dim)
    ks = np.minimum((us * spec.k).astype(np.int64), spec.k - 1)
    points = spec.means()[ks] + np.sqrt(spec.cov_scale) * zs
    provenance = {"spec": spec.digest(), "seed": seed, "split": split}
    return Dataset(spec.n_dim, points, provenance)


def save_dataset(ds: Dataset, path) -> None:
    """Write magic | u32 version | u32 n_dim | u64 count | f64-LE row-major points."""
    header = MAGIC + struct.pack("<IIQ", FORMAT_VERSION, ds.n_dim, ds.count)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(ds.points, dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 20:
        raise DatasetFormatError(f"file too short to be a dataset ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise DatasetFormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, n_dim, count = struct.unpack("<IIQ", blob[4:20])
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    expected = 20 + count * n_dim * 8
    if len(blob) < expected:
        raise DatasetFormatError(f"truncated payload: {len(blob)} bytes, header promises {expected}")
    if len(blob) > expected:
        raise DatasetFormatError(f"trailing bytes: {len(blob)} bytes, header promises {expected}")
    points = np.frombuffer(blob, dtype="<f8", offset=20).reshape(count, n_dim).copy()
    if not np.all(np.isfinite(points)):
        raise DatasetFormatError("dataset payload contains non-finite values")
    return Dataset(n_dim, points)


def gmm_log_density(spec: GmmSpec, x: np.ndarray) -> float | np.ndarray:
    """log sum_k pi_k N(x; mu_k, cov_scale I), max-shifted for stability."""
    xa = np.asarray(x, dtype=np.float64)
    single = xa.ndim == 1
    if single:
        xa = xa[None, :]
    if xa.shape[1] != spec.n_dim:
        raise ValueError(f"points must have {spec.n_dim} coordinates, got {xa.shape[1]}")
    means = spec.means()
    sq = ((xa[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)  # (b, k)
    log_norm = -0.5 * spec.n_dim * np.log(2.0 * np.pi * spec.cov_scale)
    logs = np.log(1.0 / spec.k) + log_norm - 0.5 * sq / spec.cov_scale
    top = logs.max(axis=1, keepdims=True)
    out = top[:, 0] + np.log(np.exp(logs - top).sum(axis=1))
    return float(out[0]) if single else out
