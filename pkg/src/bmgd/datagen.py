"""Synthetic regression datasets and their on-disk binary format.

Randomness
----------
Every stream is a ``numpy.random.Philox`` counter-based generator keyed by a
``numpy.random.SeedSequence`` built from ``(seed, stream)``, with the stream
tags below. Normal variates come from the Box-Muller transform applied to the
generator's ``random()`` doubles, so a given seed yields the same dataset on
every platform running the same numpy bit-generator implementation.

File format (little-endian)
---------------------------
======  =====  ===============================================
offset  size   field
======  =====  ===============================================
0       4      magic ``b"BMGD"``
4       4      format version, u32 (currently 1)
8       8      N, u64
16      8      p, u64
24      1      kind, u8 (0 = linear, 1 = binary)
25      7      reserved, zero
32      8Np    X, row-major float64
32+8Np  8N     Y, float64
======  =====  ===============================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError

MAGIC = b"BMGD"
VERSION = 1
HEADER = struct.Struct("<4sIQQB7x")
KINDS = {"linear": 0, "binary": 1}

STREAM_THETA = 1
STREAM_DESIGN = 2
STREAM_NOISE = 3
STREAM_LABELS = 4


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown dataset kind {self.kind!r}")
        if self.X.ndim != 2 or self.Y.ndim != 1 or self.X.shape[0] != self.Y.shape[0]:
            raise DomainError(f"inconsistent shapes X{self.X.shape}, Y{self.Y.shape}")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def validate(self) -> None:
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise DomainError("dataset contains NaN or Inf")
        if self.kind == "binary" and not np.all((self.Y == 0) | (self.Y == 1)):
            raise DomainError("binary dataset responses must be 0 or 1")


@dataclass(frozen=True)
class GroundTruth:
    theta: np.ndarray
    noise_sd: float
    rho: float


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normals from pairs of uniforms."""
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:size]


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)


def _check_dims(N: int, p: int, rho: float) -> None:
    if N < 1 or p < 1:
        raise DomainError(f"need N >= 1 and p >= 1, got N={N}, p={p}")
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")


def gen_ar1_design(N: int, p: int, rho: float, seed: int) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) with Sigma_jk = rho^|j-k|, via the AR(1) recursion."""
    _check_dims(N, p, rho)
    Z = box_muller(_rng(seed, STREAM_DESIGN), N * p).reshape(N, p)
    X = np.empty((N, p))
    X[:, 0] = Z[:, 0]
    innovation = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + innovation * Z[:, j]
    return X


def draw_theta(p: int, rho: float, seed: int) -> np.ndarray:
    """Standard normal coefficients scaled so that theta' Sigma theta = 1."""
    theta = box_muller(_rng(seed, STREAM_THETA), p)
    quad = theta @ ar1_covariance(p, rho) @ theta
    return theta / np.sqrt(quad)


def gen_linear_dataset(
    N: int,
    p: int,
    rho: float,
    seed: int,
    *,
    noise_sd: float = 1.0,
    theta_seed: int | None = None,
    theta: np.ndarray | None = None,
) -> tuple[Dataset, GroundTruth]:
    """Y = X theta + noise.

    ``theta_seed`` defaults to ``seed``; replicates that share a coefficient
    vector pass the same ``theta_seed`` with different ``seed`` values.
    """
    _check_dims(N, p, rho)
    if noise_sd < 0:
        raise DomainError("noise_sd must be non-negative")
    if theta is None:
        theta = draw_theta(p, rho, seed if theta_seed is None else theta_seed)
    X = gen_ar1_design(N, p, rho, seed)
    Y = X @ theta
    if noise_sd > 0:
        Y = Y + noise_sd * box_muller(_rng(seed, STREAM_NOISE), N)
    return Dataset(X, Y, "linear"), GroundTruth(np.asarray(theta, float), float(noise_sd), float(rho))


def gen_logistic_dataset(
    N: int,
    p: int,
    rho: float,
    seed: int,
    *,
    theta_seed: int | None = None,
    theta: np.ndarray | None = None,
) -> tuple[Dataset, GroundTruth]:
    """Y ~ Bernoulli(sigmoid(X theta))."""
    _check_dims(N, p, rho)
    if theta is None:
        theta = draw_theta(p, rho, seed if theta_seed is None else theta_seed)
    X = gen_ar1_design(N, p, rho, seed)
    eta = X @ theta
    prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
    Y = (_rng(seed, STREAM_LABELS).random(N) < prob).astype(np.float64)
    return Dataset(X, Y, "binary"), GroundTruth(np.asarray(theta, float), 0.0, float(rho))


def write_dataset(path, ds: Dataset) -> None:
    ds.validate()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, ds.n_samples, ds.n_features, KINDS[ds.kind]))
        fh.write(np.ascontiguousarray(ds.X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.Y, dtype="<f8").tobytes())


def read_dataset(path, *, mmap: bool = True) -> Dataset:
    """Load a dataset file. With ``mmap`` the arrays stay on disk until indexed."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
    if len(head) < HEADER.size:
        raise FormatError("truncated header", len(head))
    magic, version, N, p, kind_code = HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if kind_code not in KINDS.values():
        raise FormatError(f"unknown kind code {kind_code}", 24)
    if head[25:32] != b"\x00" * 7:
        raise FormatError("reserved header bytes are not zero", 25)
    expected = HEADER.size + 8 * N * p + 8 * N
    if size != expected:
        raise FormatError(f"file is {size} bytes, header implies {expected}", min(size, expected))
    kind = next(k for k, v in KINDS.items() if v == kind_code)
    if mmap:
        X = np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size, shape=(N, p))
        Y = np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size + 8 * N * p, shape=(N,))
    else:
        raw = np.fromfile(path, dtype="<f8", offset=HEADER.size)
        X = raw[: N * p].reshape(N, p)
        Y = raw[N * p :]
    return Dataset(X, Y, kind)


def dataset_roundtrip(path, ds: Dataset) -> Dataset:
    write_dataset(path, ds)
    return read_dataset(path, mmap=False)
