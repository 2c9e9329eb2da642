"""Nonlinear Young integrals int_s^t G_{du}(f_u) as dyadic Riemann sums.

Every Riemann sum uses left-endpoint evaluation G_{t_i, t_{i+1}}(f_{t_i}).  The
difference between two consecutive dyadic depths telescopes into the local
defects G_{m,r}(f_m) - G_{m,r}(f_l), whose sizes give an a-posteriori sewing
bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .averaging import FourierVectorField
from .fbm import SampledPath
from .oscillatory import segment_integrals

__all__ = [
    "ExponentError",
    "IncrementField",
    "FunctionIncrementField",
    "AveragedIncrementField",
    "TensorIncrementField",
    "YoungResult",
    "ContinuityReport",
    "riemann_sum",
    "young_integral",
    "chasles_defect",
    "holder_norm",
    "continuity_modulus",
    "sewing_constant",
]


class ExponentError(ValueError):
    """nu + vartheta * rho <= 1: the Riemann sums need not converge."""


class IncrementField:
    """G_{s,t}(x) = G_t(x) - G_s(x) evaluated on grid indices of a size-n_grid grid.

    Subclasses implement ``__call__(i0, i1, x)`` with integer arrays ``i0``,
    ``i1`` of shape (m,) and points ``x`` of shape (m, d); the result has shape
    (m, k).
    """

    n_grid: int
    nu: float
    vartheta: float
    norm_bound: float

    def __call__(self, i0: np.ndarray, i1: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: "IncrementField") -> "IncrementField":
        return _SumIncrementField(self, other)


class _SumIncrementField(IncrementField):
    def __init__(self, a: IncrementField, b: IncrementField):
        if a.n_grid != b.n_grid:
            raise ValueError("increment fields live on different grids")
        self.a, self.b = a, b
        self.n_grid = a.n_grid
        self.nu = min(a.nu, b.nu)
        self.vartheta = min(a.vartheta, b.vartheta)
        self.norm_bound = a.norm_bound + b.norm_bound

    def __call__(self, i0, i1, x):
        return self.a(i0, i1, x) + self.b(i0, i1, x)


class FunctionIncrementField(IncrementField):
    """Wrap ``func(s, t, x)`` taking time arrays (m,) and points (m, d)."""

    def __init__(self, func: Callable, n_grid: int, nu: float = 1.0, vartheta: float = 1.0, norm_bound: float = np.nan):
        self.func = func
        self.n_grid = n_grid
        self.nu = nu
        self.vartheta = vartheta
        self.norm_bound = norm_bound

    def __call__(self, i0, i1, x):
        s = np.asarray(i0) / self.n_grid
        t = np.asarray(i1) / self.n_grid
        out = np.asarray(self.func(s, t, x), dtype=float)
        return out.reshape(len(s), -1)


class TensorIncrementField(IncrementField):
    """G_t(x) = x (x) g_t for a path g: the classical Young integrand."""

    def __init__(self, g: SampledPath, nu: float = 0.5):
        self.g = g
        self.n_grid = g.n_grid
        self.nu = nu
        self.vartheta = 1.0
        self.norm_bound = holder_norm(g, nu, 0.0, 1.0)

    def __call__(self, i0, i1, x):
        dg = self.g.values[np.asarray(i1)] - self.g.values[np.asarray(i0)]
        return np.einsum("mi,mj->mij", np.atleast_2d(x), dg).reshape(len(dg), -1)


class AveragedIncrementField(IncrementField):
    """G_{s,t}(x) = (sigma^w_[s,t] f)(x) for a Fourier-atom field f."""

    def __init__(self, f: FourierVectorField, path: SampledPath, gamma: float = 0.5, norm_bound: float = np.nan):
        self.f = f
        self.path = path
        self.n_grid = path.n_grid
        self.nu = gamma
        self.vartheta = 1.0
        self.norm_bound = norm_bound
        if len(f):
            self.seg = segment_integrals(path, f.omegas, f.xis)
        else:
            self.seg = np.zeros((path.n_grid, 0), dtype=complex)
        self.cum = np.vstack([np.zeros((1, self.seg.shape[1]), dtype=complex), np.cumsum(self.seg, axis=0)])

    def y(self, i0, i1) -> np.ndarray:
        i0 = np.asarray(i0)
        i1 = np.asarray(i1)
        if np.all(i1 - i0 == 1):
            return self.seg[i0]
        return self.cum[i1] - self.cum[i0]

    def __call__(self, i0, i1, x):
        x = np.atleast_2d(x)
        if not len(self.f):
            return np.zeros((len(np.atleast_1d(i0)), self.path.d))
        phase = np.exp(1j * (x @ self.f.xis.T))
        return ((phase * self.y(i0, i1)) @ self.f.coeffs).real


def sewing_constant(nu: float, vartheta: float, rho: float) -> float:
    """2^-(vartheta rho + nu - 1) / (1 - 2^-(vartheta rho + nu - 1))."""
    r = 2.0 ** -(vartheta * rho + nu - 1.0)
    return r / (1.0 - r)


def _check_exponents(G: IncrementField, rho: float) -> float:
    excess = G.nu + G.vartheta * rho - 1.0
    if excess <= 0:
        raise ExponentError(f"nu + vartheta*rho = {G.nu + G.vartheta * rho:.4g} <= 1")
    return excess


def riemann_sum(G: IncrementField, theta: SampledPath, idx: np.ndarray) -> np.ndarray:
    """sum_i G_{idx_i, idx_{i+1}}(theta_{idx_i}) over an increasing index partition."""
    idx = np.asarray(idx)
    terms = G(idx[:-1], idx[1:], theta.values[idx[:-1]])
    return terms.sum(axis=0)


@dataclass
class YoungResult:
    value: np.ndarray
    sewing_bound: float
    refinement_levels: int
    depth_sums: dict[int, np.ndarray] = field(default_factory=dict)
    defect_sums: dict[int, float] = field(default_factory=dict)
    first_term: np.ndarray | None = None

    def convergence_report(self) -> dict[int, list[float]]:
        n = self.refinement_levels
        return {k: self.depth_sums[k].tolist() for k in range(max(0, n - 2), n + 1)}

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value.tolist(),
                "sewing_bound": self.sewing_bound,
                "refinement_levels": self.refinement_levels,
                "depth_sums": {str(k): v.tolist() for k, v in self.depth_sums.items()},
                "defect_sums": {str(k): v for k, v in self.defect_sums.items()},
            }
        )


def _dyadic_indices(theta: SampledPath, s: float, t: float, n_levels: int | None) -> tuple[int, int, int]:
    if not (0.0 <= s < t <= 1.0):
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    i0, i1 = theta.index(s), theta.index(t)
    span = i1 - i0
    max_levels = (span & -span).bit_length() - 1
    n_levels = max_levels if n_levels is None else n_levels
    if not 0 <= n_levels <= max_levels:
        raise ValueError(f"n_levels={n_levels} not supported by [{s}, {t}] on this grid (max {max_levels})")
    return i0, i1, n_levels


def young_integral(
    G: IncrementField, theta: SampledPath, s: float, t: float, n_levels: int | None = None, rho: float = 1.0
) -> YoungResult:
    """Dyadic Riemann sum of G along theta over [s, t] at depth ``n_levels``.

    ``rho`` is the declared Holder exponent of theta (piecewise-linear paths
    are Lipschitz, hence the default).  The sewing bound is the sum of the
    measured defect sums over depths 1..n plus a geometric tail with ratio
    2^-(nu + vartheta rho - 1).
    """
    if G.n_grid != theta.n_grid:
        raise ValueError("G and theta must share the grid")
    excess = _check_exponents(G, rho)
    i0, i1, n = _dyadic_indices(theta, s, t, n_levels)
    x = theta.values
    sums: dict[int, np.ndarray] = {}
    defects: dict[int, float] = {}
    first = G(np.array([i0]), np.array([i1]), x[[i0]])[0]
    sums[0] = first
    for k in range(1, n + 1):
        idx = i0 + ((i1 - i0) >> k) * np.arange(2**k + 1)
        left, mid, right = idx[0:-1:2], idx[1::2], idx[2::2]
        defect = G(mid, right, x[mid]) - G(mid, right, x[left])
        defects[k] = float(np.linalg.norm(defect, axis=1).sum())
        sums[k] = riemann_sum(G, theta, idx)
    r = 2.0**-excess
    tail = defects[n] * r / (1.0 - r) if n else 0.0
    bound = sum(defects.values()) + tail
    return YoungResult(sums[n], bound, n, sums, defects, first)


def chasles_defect(
    G: IncrementField,
    theta: SampledPath,
    s: float,
    u: float,
    t: float,
    n_levels: int,
    extra_levels: int = 0,
) -> float:
    """|I(s,t) - I(s,u) - I(u,t)| with step (t-s)/2^n on [s,t].

    The two pieces use step (t-s)/2^(n + extra_levels); extra_levels = 0 gives
    nested partitions.
    """
    if not s < u < t:
        raise ValueError("need s < u < t")
    i0, i1, n = _dyadic_indices(theta, s, t, n_levels)
    iu = theta.index(u)
    h = (i1 - i0) >> n
    h_fine = h >> extra_levels
    if h_fine < 1 or h_fine << extra_levels != h:
        raise ValueError("extra_levels exceeds the grid resolution")
    if (iu - i0) % h:
        raise ValueError("u is not a point of the depth-n partition")
    whole = riemann_sum(G, theta, np.arange(i0, i1 + 1, h))
    left = riemann_sum(G, theta, np.arange(i0, iu + 1, h_fine))
    right = riemann_sum(G, theta, np.arange(iu, i1 + 1, h_fine))
    return float(np.linalg.norm(whole - left - right))


def holder_norm(path: SampledPath, gamma: float, s: float = 0.0, t: float = 1.0) -> float:
    """max |path_v - path_u| / (v - u)^gamma over pairs with v - u = 2^j grid steps."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    i0, i1 = path.index(s), path.index(t)
    if i1 <= i0:
        raise ValueError("need s < t")
    seg = path.values[i0 : i1 + 1]
    best = 0.0
    lag = 1
    while lag <= i1 - i0:
        diff = np.linalg.norm(seg[lag:] - seg[:-lag], axis=1)
        best = max(best, float(diff.max()) / (lag * path.dt) ** gamma)
        lag *= 2
    return best


@dataclass
class ContinuityReport:
    difference: float
    bound: float
    ratio: float


def continuity_modulus(
    G: IncrementField,
    theta1: SampledPath,
    theta2: SampledPath,
    s: float,
    t: float,
    n_levels: int | None = None,
    rho: float = 1.0,
    C: float = 1.0,
) -> ContinuityReport:
    """Compare |I(theta1) - I(theta2)| with the displayed continuity modulus on [s, t]."""
    excess = _check_exponents(G, rho)
    a = young_integral(G, theta1, s, t, n_levels, rho).value
    b = young_integral(G, theta2, s, t, n_levels, rho).value
    diff = float(np.linalg.norm(a - b))
    i0, i1 = theta1.index(s), theta1.index(t)
    sup = float(np.linalg.norm(theta1.values[i0 : i1 + 1] - theta2.values[i0 : i1 + 1], axis=1).max())
    h1 = holder_norm(theta1, rho, s, t) ** G.vartheta
    h2 = holder_norm(theta2, rho, s, t) ** G.vartheta
    bound = (
        C
        * G.norm_bound
        * sup ** (excess / rho)
        * (t - s)
        * (h1 + h2) ** ((1 - G.nu) / (G.vartheta * rho))
    )
    ratio = diff / bound if bound > 0 else (0.0 if diff == 0 else np.inf)
    return ContinuityReport(diff, bound, ratio)
