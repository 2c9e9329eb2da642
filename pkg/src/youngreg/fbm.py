"""Exact sampling of fractional Brownian motion on dyadic grids.

Paths are drawn from the Cholesky factor of the fractional Gaussian noise
(increment) covariance and cumulated, so every sample is exact in law on the
grid.  Between grid points the path is interpolated linearly.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "HurstParams",
    "SampledPath",
    "CholeskyError",
    "fbm_covariance",
    "increment_autocovariance",
    "sample_path",
    "sample_paths",
    "local_nondeterminism_gap",
    "calibrate_nondeterminism_constant",
    "read_path_csv",
    "iter_path_seeds",
]

JITTER = 1e-12
MAX_DENSE_GRID = 2**13

_factor_cache: dict[tuple[float, int], tuple[str, np.ndarray]] = {}
_factor_lock = threading.Lock()


class CholeskyError(np.linalg.LinAlgError):
    """Increment covariance is not numerically positive definite."""

    def __init__(self, pivot: int, H: float, n_grid: int):
        super().__init__(
            f"Cholesky failed at pivot {pivot} for H={H}, n_grid={n_grid} "
            f"(after one {JITTER:g} jitter retry)"
        )
        self.pivot = pivot


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_hurst(H: float) -> None:
    if not (0.0 < H < 1.0):
        raise ValueError(f"Hurst exponent must lie in (0, 1), got {H}")


@dataclass(frozen=True)
class HurstParams:
    H: float
    d: int = 1
    n_grid: int = 1024
    seed: int = 0

    def __post_init__(self):
        _check_hurst(self.H)
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not _is_power_of_two(self.n_grid):
            raise ValueError(f"n_grid must be a power of two, got {self.n_grid}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def depth(self) -> int:
        return self.n_grid.bit_length() - 1


@dataclass(frozen=True)
class SampledPath:
    """A d-dimensional path on the uniform grid k/n_grid of [0, 1].

    ``values`` has shape (n_grid + 1, d).  The only supported interpolation
    between grid points is piecewise linear.
    """

    values: np.ndarray
    interpolation: str = "piecewise-linear"
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n = values.shape[0] - 1
        if not _is_power_of_two(n):
            raise ValueError(f"path needs 2^k + 1 grid points, got {values.shape[0]}")
        if self.interpolation != "piecewise-linear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        values.setflags(write=False)
        times = np.arange(n + 1) / n
        times.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @property
    def n_grid(self) -> int:
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.n_grid.bit_length() - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.n_grid

    def index(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        if not (0.0 <= t <= 1.0):
            raise ValueError(f"time {t} outside [0, 1]")
        k = round(t * self.n_grid)
        if abs(k - t * self.n_grid) > 1e-9:
            raise ValueError(f"time {t} is not on the grid of size {self.n_grid}")
        return k

    def __call__(self, t) -> np.ndarray:
        """Evaluate the linear interpolant at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.times, self.values[:, c]) for c in range(self.d)], axis=-1)
        return out

    def subsample(self, depth: int) -> "SampledPath":
        if depth > self.depth:
            raise ValueError("cannot subsample to a finer grid")
        return SampledPath(self.values[:: 2 ** (self.depth - depth)])

    def refine(self, depth: int) -> "SampledPath":
        """Same interpolant, represented on a finer dyadic grid."""
        if depth < self.depth:
            raise ValueError("cannot refine to a coarser grid")
        t = np.arange(2**depth + 1) / 2**depth
        return SampledPath(self(t))

    def __add__(self, other: "SampledPath") -> "SampledPath":
        if other.values.shape != self.values.shape:
            raise ValueError("paths must share grid and dimension")
        return SampledPath(self.values + other.values)

    def __sub__(self, other: "SampledPath") -> "SampledPath":
        if other.values.shape != self.values.shape:
            raise ValueError("paths must share grid and dimension")
        return SampledPath(self.values - other.values)

    def to_csv(self, fh, comment: str | None = None) -> None:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"w{c + 1}" for c in range(self.d)])
        for t, row in zip(self.times, self.values):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def read_path_csv(fh) -> SampledPath:
    rows = [line for line in fh if line.strip() and not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if header[0] != "t":
        raise ValueError("path CSV must start with a 't' column")
    data = np.array([[float(v) for v in r] for r in reader])
    return SampledPath(data[:, 1:])


def fbm_covariance(H: float, s, t):
    """Covariance (s^2H + t^2H - |t-s|^2H) / 2 of one scalar component."""
    _check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any((s < 0) | (s > 1)) or np.any((t < 0) | (t > 1)):
        raise ValueError("times must lie in [0, 1]")
    two_h = 2.0 * H
    out = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def increment_autocovariance(H: float, n_grid: int) -> np.ndarray:
    """Autocovariance of unit-lag fractional Gaussian noise on a grid of step 1/n_grid."""
    k = np.arange(n_grid, dtype=float)
    two_h = 2.0 * H
    gamma = 0.5 * (np.abs(k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)
    return gamma * n_grid ** (-two_h)


def _increment_factor(H: float, n_grid: int) -> tuple[str, np.ndarray]:
    key = (float(H), int(n_grid))
    with _factor_lock:
        hit = _factor_cache.get(key)
    if hit is not None:
        return hit
    acov = increment_autocovariance(H, n_grid)
    if np.all(acov[1:] == 0.0):
        # independent increments: the Cholesky factor is diagonal
        entry = ("diag", np.full(n_grid, math.sqrt(acov[0])))
    else:
        if n_grid > MAX_DENSE_GRID:
            raise MemoryError(
                f"dense Cholesky limited to n_grid <= {MAX_DENSE_GRID} (got {n_grid}) for H != 1/2"
            )
        idx = np.arange(n_grid)
        cov = acov[np.abs(idx[:, None] - idx[None, :])]
        factor, info = lapack.dpotrf(cov, lower=1, clean=1)
        if info > 0:
            factor, info = lapack.dpotrf(cov + JITTER * np.eye(n_grid), lower=1, clean=1)
            if info > 0:
                raise CholeskyError(int(info), H, n_grid)
        entry = ("dense", factor)
    with _factor_lock:
        _factor_cache.setdefault(key, entry)
    return entry


def _stream(seed: int, component: int) -> np.random.Generator:
    # 128-bit Philox key (seed, component): component streams never alias across seeds
    key = np.array([seed % 2**64, component], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _normals(seed: int, d: int, n: int) -> np.ndarray:
    return np.stack([_stream(seed, c).standard_normal(n) for c in range(d)], axis=1)


def sample_paths(H: float, d: int, n_grid: int, seeds: Sequence[int]) -> np.ndarray:
    """Draw one path per seed; returns an array of shape (len(seeds), n_grid + 1, d)."""
    HurstParams(H, d, n_grid, 0)
    kind, factor = _increment_factor(H, n_grid)
    z = np.stack([_normals(int(s), d, n_grid) for s in seeds])  # (P, n, d)
    if kind == "diag":
        incr = z * factor[None, :, None]
    else:
        incr = np.einsum("ij,pjc->pic", factor, z, optimize=True)
    out = np.zeros((len(seeds), n_grid + 1, d))
    np.cumsum(incr, axis=1, out=out[:, 1:, :])
    return out


def sample_path(params: HurstParams) -> SampledPath:
    """One exact-in-law fBm sample; bit-identical for identical params."""
    values = sample_paths(params.H, params.d, params.n_grid, [params.seed])[0]
    return SampledPath(values)


def _combination_variance(H: float, times: np.ndarray, u: np.ndarray) -> float:
    # Var(sum u_i (W_{t_i} - W_{t_{i-1}})) = u^T A C A^T u with C the covariance at `times`
    coeff = np.zeros(len(times))
    coeff[1:] += u
    coeff[:-1] -= u
    cov = fbm_covariance(H, times[:, None], times[None, :])
    return float(coeff @ cov @ coeff)


def local_nondeterminism_gap(H: float, times, u, K_H: float) -> float:
    """Exact Var(sum_i u_i dW_i) minus K_H * sum_i u_i^2 |dt_i|^{2H}."""
    _check_hurst(H)
    times = np.asarray(times, dtype=float)
    u = np.asarray(u, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly increasing array of length >= 2")
    if times[0] < 0 or times[-1] > 1:
        raise ValueError("times must lie in [0, 1]")
    if u.shape != (len(times) - 1,):
        raise ValueError("u needs one entry per increment")
    if K_H <= 0:
        raise ValueError("K_H must be positive")
    lower = K_H * float(np.sum(u**2 * np.diff(times) ** (2 * H)))
    return _combination_variance(H, times, u) - lower


def calibrate_nondeterminism_constant(
    H: float, n_trials: int = 200, max_points: int = 8, seed: int = 0
) -> float:
    """Smallest ratio Var / sum u_i^2 |dt_i|^{2H} over random configurations.

    The local nondeterminism constant is only asserted to exist, so it is
    estimated as the empirical minimum over a search set.
    """
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_trials):
        m = int(rng.integers(2, max_points + 1))
        times = np.sort(rng.uniform(0, 1, m))
        if np.any(np.diff(times) <= 1e-9):
            continue
        u = rng.standard_normal(m - 1)
        denom = float(np.sum(u**2 * np.diff(times) ** (2 * H)))
        best = min(best, _combination_variance(H, times, u) / denom)
    return float(best)


def iter_path_seeds(seed: int, n_paths: int) -> Iterable[int]:
    """Per-path seeds ``seed XOR path_index``."""
    return [(seed ^ i) % 2**64 for i in range(n_paths)]
