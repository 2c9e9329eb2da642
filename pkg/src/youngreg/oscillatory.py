"""Oscillatory integrals Y_{s,t}(omega, xi) = int_s^t exp(i xi.w_u + i omega u) du.

On a piecewise-linear path the phase is affine on every grid segment, so each
segment integral has a closed form and the result is exact for the
interpolant.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .fbm import SampledPath

__all__ = [
    "PHASE_TOL",
    "Frequency",
    "OscillatoryValue",
    "TableConfig",
    "DyadicYTable",
    "TableBudgetError",
    "segment_integrals",
    "eval_Y",
    "eval_Y_many",
    "z_integral",
    "lipschitz_gap",
    "build_dyadic_table",
    "build_table",
    "lattice_axis",
]

PHASE_TOL = 1e-6
DEFAULT_ENTRY_BUDGET = 2**24
_EPS = np.finfo(float).eps
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class Frequency:
    omega: float
    xi: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if not (np.isfinite(self.omega) and np.all(np.isfinite(xi))):
            raise ValueError("frequency entries must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "omega", float(self.omega))

    def __neg__(self) -> "Frequency":
        return Frequency(-self.omega, -self.xi)


@dataclass(frozen=True)
class OscillatoryValue:
    value: complex
    abs_error_bound: float = 0.0

    def __abs__(self) -> float:
        return abs(self.value)


def _phase_factor(delta: np.ndarray, tol: float = PHASE_TOL) -> np.ndarray:
    """(exp(i delta) - 1) / (i delta) for a phase increment delta across a segment."""
    # exp(i d/2) sin(d/2)/(d/2) equals the closed form without its cancellation
    out = np.exp(0.5j * delta) * np.sinc(delta / (2 * np.pi))
    small = np.abs(delta) <= tol
    if np.any(small):
        ds = delta[small]
        out[small] = 1.0 + 0.5j * ds - ds**2 / 6.0
    return out


def segment_integrals(
    path: SampledPath, omegas, xis, i0: int = 0, i1: int | None = None, tol: float = PHASE_TOL
) -> np.ndarray:
    """Exact integrals over grid segments [i, i+1] for i0 <= i < i1.

    ``omegas`` has shape (F,), ``xis`` shape (F, d); returns (i1 - i0, F).
    """
    i1 = path.n_grid if i1 is None else i1
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    xis = np.asarray(xis, dtype=float).reshape(len(omegas), path.d)
    w = path.values[i0 : i1 + 1]
    t = path.times[i0 : i1 + 1]
    dt = path.dt
    phase0 = w[:-1] @ xis.T + t[:-1, None] * omegas[None, :]
    delta = np.diff(w, axis=0) @ xis.T + dt * omegas[None, :]
    return dt * np.exp(1j * phase0) * _phase_factor(delta, tol)


def _span(path: SampledPath, s: float, t: float) -> tuple[int, int]:
    if not (0.0 <= s < t <= 1.0):
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    return path.index(s), path.index(t)


def eval_Y(path: SampledPath, s: float, t: float, freq: Frequency) -> OscillatoryValue:
    i0, i1 = _span(path, s, t)
    if freq.xi.shape != (path.d,):
        raise ValueError(f"xi must have {path.d} components")
    seg = segment_integrals(path, [freq.omega], freq.xi[None, :], i0, i1)[:, 0]
    # the interpolant is integrated exactly; only summation rounding remains
    bound = 2 * (i1 - i0) * _EPS * (t - s)
    return OscillatoryValue(complex(seg.sum()), bound)


def eval_Y_many(path: SampledPath, s: float, t: float, omegas, xis) -> np.ndarray:
    """Vectorised eval_Y over F frequencies; returns complex array (F,)."""
    i0, i1 = _span(path, s, t)
    return segment_integrals(path, omegas, xis, i0, i1).sum(axis=0)


def z_integral(path: SampledPath, s: float, t: float) -> float:
    """int_s^t |w_u| du on the interpolant (4-point Gauss-Legendre per smooth piece)."""
    i0, i1 = _span(path, s, t)
    a = path.values[i0:i1]
    b = np.diff(path.values[i0 : i1 + 1], axis=0)
    bb = np.einsum("ij,ij->i", b, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        u_star = np.where(bb > 0, -np.einsum("ij,ij->i", a, b) / bb, 0.0)
    # split at the point of minimal norm so each piece is smooth
    u_star = np.clip(u_star, 0.0, 1.0)
    total = np.zeros(len(a))
    for lo, hi in ((np.zeros_like(u_star), u_star), (u_star, np.ones_like(u_star))):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for x, wq in zip(_GL_NODES, _GL_WEIGHTS):
            u = mid + half * x
            total += wq * half * np.linalg.norm(a + u[:, None] * b, axis=1)
    return float(total.sum() * path.dt)


def lipschitz_gap(path: SampledPath, s: float, t: float, freq1: Frequency, freq2: Frequency) -> float:
    """Z|xi - xi'| + (t - s)|omega - omega'| - |Y(freq1) - Y(freq2)|."""
    y1 = eval_Y(path, s, t, freq1).value
    y2 = eval_Y(path, s, t, freq2).value
    dxi = float(np.linalg.norm(freq1.xi - freq2.xi))
    domega = abs(freq1.omega - freq2.omega)
    z = z_integral(path, s, t) if dxi > 0 else 0.0
    return z * dxi + (t - s) * domega - abs(y1 - y2)


def lattice_axis(m_max: int, radius: float) -> np.ndarray:
    """Points j 2^-m_max with |j 2^-m_max| <= radius."""
    jmax = int(np.floor(radius * 2**m_max + 1e-9))
    return np.arange(-jmax, jmax + 1) / 2**m_max


def _lattice_level(x: np.ndarray, m_max: int) -> np.ndarray:
    # smallest m with x in 2^-m Z (x already lies on the 2^-m_max lattice)
    j = np.rint(x * 2**m_max).astype(np.int64)
    level = np.full(j.shape, 0, dtype=np.int64)
    for m in range(m_max, 0, -1):
        on = (j % (2 ** (m_max - m + 1))) != 0
        level = np.where(on & (level == 0), m, level)
    return level


@dataclass(frozen=True)
class TableConfig:
    n_max: int = 8
    m_max: int = 2
    omega_max: float = 8.0
    xi_max: float = 8.0

    def doubled(self) -> "TableConfig":
        return TableConfig(self.n_max, self.m_max, 2 * self.omega_max, 2 * self.xi_max)


class TableBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class DyadicYTable:
    """Y over every dyadic interval [k 2^-n, (k+1) 2^-n], n <= n_max, on a frequency lattice.

    ``values[2**n - 1 + k, f]`` holds Y for interval (n, k) and frequency f.
    """

    n_max: int
    m_max: int
    omega_max: float
    xi_max: float
    omegas: np.ndarray
    xis: np.ndarray
    values: np.ndarray
    lattice_level: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.xis.shape[1]

    @property
    def n_freq(self) -> int:
        return len(self.omegas)

    @property
    def config(self) -> TableConfig:
        return TableConfig(self.n_max, self.m_max, self.omega_max, self.xi_max)

    def level(self, n: int) -> np.ndarray:
        """Entries of level n, shape (2^n, F)."""
        if not 0 <= n <= self.n_max:
            raise IndexError(n)
        return self.values[2**n - 1 : 2 ** (n + 1) - 1]

    def entry(self, n: int, k: int, f: int) -> complex:
        return complex(self.values[2**n - 1 + k, f])

    def truncation(self) -> dict:
        return {
            "n_max": self.n_max,
            "m_max": self.m_max,
            "omega_max": self.omega_max,
            "xi_max": self.xi_max,
        }

    def truncate(self, n_max: int) -> "DyadicYTable":
        """Same table restricted to dyadic levels <= n_max."""
        if not 0 <= n_max <= self.n_max:
            raise ValueError(f"cannot truncate a depth-{self.n_max} table to {n_max}")
        rows = self.values[: 2 ** (n_max + 1) - 1]
        return DyadicYTable(n_max, self.m_max, self.omega_max, self.xi_max, self.omegas, self.xis, rows, self.lattice_level)

    _MAGIC = b"YRTABLE1"

    def to_binary(self, fh) -> None:
        """Header (magic, n_max, m_max, d, n_freq, omega_max, xi_max), then
        little-endian float64 columns: omegas, xis (row-major), Re values, Im values."""
        fh.write(self._MAGIC)
        fh.write(struct.pack("<iiiqdd", self.n_max, self.m_max, self.d, self.n_freq, self.omega_max, self.xi_max))
        for arr in (self.omegas, self.xis, self.values.real, self.values.imag):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, fh) -> "DyadicYTable":
        if fh.read(8) != cls._MAGIC:
            raise ValueError("not a dyadic Y table file")
        n_max, m_max, d, n_freq, omega_max, xi_max = struct.unpack("<iiiqdd", fh.read(struct.calcsize("<iiiqdd")))
        n_rows = 2 ** (n_max + 1) - 1

        def read(count):
            return np.frombuffer(fh.read(8 * count), dtype="<f8").astype(float)

        omegas = read(n_freq)
        xis = read(n_freq * d).reshape(n_freq, d)
        re = read(n_rows * n_freq).reshape(n_rows, n_freq)
        im = read(n_rows * n_freq).reshape(n_rows, n_freq)
        level = np.maximum(_lattice_level(omegas, m_max), _lattice_level(xis, m_max).max(axis=1))
        return cls(n_max, m_max, omega_max, xi_max, omegas, xis, re + 1j * im, level)

    def to_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "k", "omega"] + [f"xi{c + 1}" for c in range(self.d)] + ["re", "im"])
        for n in range(self.n_max + 1):
            lev = self.level(n)
            for k in range(2**n):
                for f in range(self.n_freq):
                    v = lev[k, f]
                    writer.writerow(
                        [n, k, f"{self.omegas[f]:.17g}"]
                        + [f"{x:.17g}" for x in self.xis[f]]
                        + [f"{v.real:.17g}", f"{v.imag:.17g}"]
                    )


def build_dyadic_table(
    path: SampledPath,
    n_max: int = 8,
    m_max: int = 2,
    omega_max: float = 8.0,
    xi_max: float = 8.0,
    entry_budget: int = DEFAULT_ENTRY_BUDGET,
    chunk: int = 2**22,
) -> DyadicYTable:
    if n_max > path.depth:
        raise ValueError(f"n_max={n_max} exceeds grid depth {path.depth}")
    if n_max < 0 or m_max < 0 or omega_max < 0 or xi_max < 0:
        raise ValueError("table parameters must be nonnegative")
    om_axis = lattice_axis(m_max, omega_max)
    xi_axis = lattice_axis(m_max, xi_max)
    n_freq = len(om_axis) * len(xi_axis) ** path.d
    n_rows = 2 ** (n_max + 1) - 1
    if n_rows * n_freq > entry_budget:
        raise TableBudgetError(
            f"table needs {n_rows * n_freq} entries, budget is {entry_budget}"
        )
    grids = np.meshgrid(om_axis, *([xi_axis] * path.d), indexing="ij")
    omegas = grids[0].ravel()
    xis = np.stack([g.ravel() for g in grids[1:]], axis=1)
    level = np.maximum(_lattice_level(omegas, m_max), _lattice_level(xis, m_max).max(axis=1))

    values = np.empty((n_rows, n_freq), dtype=complex)
    per_leaf = path.n_grid // 2**n_max
    step = max(1, chunk // path.n_grid)
    for f0 in range(0, n_freq, step):
        f1 = min(n_freq, f0 + step)
        seg = segment_integrals(path, omegas[f0:f1], xis[f0:f1])
        cur = seg.reshape(2**n_max, per_leaf, f1 - f0).sum(axis=1)
        for n in range(n_max, -1, -1):
            values[2**n - 1 : 2 ** (n + 1) - 1, f0:f1] = cur
            if n:
                cur = cur[0::2] + cur[1::2]
    return DyadicYTable(n_max, m_max, float(omega_max), float(xi_max), omegas, xis, values, level)


def build_table(path: SampledPath, cfg: TableConfig, entry_budget: int = DEFAULT_ENTRY_BUDGET) -> DyadicYTable:
    """``build_dyadic_table`` driven by a TableConfig; n_max is capped at the grid depth."""
    return build_dyadic_table(
        path, min(cfg.n_max, path.depth), cfg.m_max, cfg.omega_max, cfg.xi_max, entry_budget=entry_budget
    )
