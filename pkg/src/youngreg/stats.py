"""Path statistics R, S, Q, the K-vs-Q relation, and Monte-Carlo moment checks for Y.

Every exponential sum is accumulated with log-sum-exp.  Monte-Carlo reports
carry (mean, SE, n, seed) with standard errors from 10 batch means.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .averaging import estimate_averaging_constant
from .fbm import SampledPath, iter_path_seeds, sample_paths
from .oscillatory import DyadicYTable, TableConfig, _phase_factor, build_table

__all__ = [
    "PathStats",
    "MCReport",
    "MomentReport",
    "ScalingReport",
    "ExpMomentReport",
    "KQReport",
    "r_lambda",
    "log_r_lambda",
    "s_lambda",
    "log_s_lambda",
    "q_lambda",
    "q_from_logs",
    "path_stats",
    "batch_means",
    "calibrate_constant",
    "moment_check",
    "moment_scaling",
    "exp_moment_check",
    "k_vs_q_regression",
    "bm_second_moment",
    "resolve_workers",
]

N_BATCHES = 10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else YOUNGREG_WORKERS, else 1."""
    if workers is None:
        workers = int(os.environ.get("YOUNGREG_WORKERS", "1"))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _ordered_map(fn: Callable, items: Sequence, workers: int | None) -> list:
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- path statistics -------------------------------------------------------


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")


def log_r_lambda(path: SampledPath, lam: float) -> float:
    """log R = (1/lambda) log int_0^1 exp(lambda |w_u|^2) du, Gauss-Legendre per segment."""
    _check_lambda(lam)
    w0 = path.values[:-1]
    dw = np.diff(path.values, axis=0)
    u = 0.5 * (_GL_X + 1.0)  # nodes on [0, 1]
    pts = w0[:, None, :] + u[None, :, None] * dw[:, None, :]
    expo = lam * np.sum(pts**2, axis=-1)
    logw = np.log(0.5 * _GL_W * path.dt)
    return float(logsumexp(expo + logw[None, :])) / lam


def r_lambda(path: SampledPath, lam: float) -> float:
    return math.exp(log_r_lambda(path, lam))


def _check_table(path: SampledPath, table: DyadicYTable) -> None:
    if table.d != path.d:
        raise ValueError("table was built for a different dimension")


def log_s_lambda(path: SampledPath, lam: float, table: DyadicYTable, H: float) -> float:
    """log of the truncated S over n <= n_max, m <= m_max and lattice points inside the radii.

    A frequency first appearing on the 2^-l lattice is counted once for every
    m in [l, m_max], contributing sum_m 2^-m to its weight.
    """
    _check_lambda(lam)
    _check_table(path, table)
    d = table.d
    xi_norm = np.linalg.norm(table.xis, axis=1)
    lvl = table.lattice_level
    m_mass = np.log(2.0 ** (1 - lvl) - 2.0 ** (-table.m_max))  # log sum_{m=l}^{m_max} 2^-m
    base = m_mass - 2 * np.log1p(np.abs(table.omegas)) - (d + 1) * np.log1p(xi_norm)
    amp = (1.0 + xi_norm) ** (1.0 / H)
    parts = []
    for n in range(table.n_max + 1):
        expo = lam * 2.0**n * amp[None, :] * np.abs(table.level(n)) ** 2
        parts.append(logsumexp(expo, axis=0) + base - 2 * n * math.log(2.0))
    return float(logsumexp(np.concatenate(parts))) / lam


def s_lambda(path: SampledPath, lam: float, table: DyadicYTable, H: float) -> float:
    return math.exp(log_s_lambda(path, lam, table, H))


def q_from_logs(log_r: float, log_s: float) -> float:
    """sqrt(max(log S, 0)) + sqrt(log R)."""
    if log_r < 0:
        raise ValueError("log R must be nonnegative")
    return math.sqrt(max(log_s, 0.0)) + math.sqrt(log_r)


def q_lambda(R: float, S: float) -> float:
    if R < 1:
        raise ValueError("R must be >= 1")
    if S <= 0:
        raise ValueError("S must be positive")
    return q_from_logs(math.log(R), math.log(S))


@dataclass(frozen=True)
class PathStats:
    lam: float
    R: float
    S: float
    Q: float
    log_R: float
    log_S: float
    truncation: dict

    def to_row(self) -> dict:
        return {"lambda": self.lam, "R": self.R, "S": self.S, "Q": self.Q, **self.truncation}


def path_stats(path: SampledPath, lam: float, table: DyadicYTable, H: float) -> PathStats:
    lr = log_r_lambda(path, lam)
    ls = log_s_lambda(path, lam, table, H)
    # exp may overflow to inf on extreme paths; Q stays finite through the logs
    with np.errstate(over="ignore"):
        R, S = float(np.exp(lr)), float(np.exp(ls))
    return PathStats(lam, R, S, q_from_logs(lr, ls), lr, ls, table.truncation())


# --- Monte-Carlo helpers ---------------------------------------------------


def batch_means(samples: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error (samples split in order into equal batches)."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < n_batches:
        raise ValueError("need at least one sample per batch")
    usable = len(samples) - len(samples) % n_batches
    means = samples[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(samples.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def calibrate_constant(train_ratios, sigmas: float = 3.0) -> float:
    """Constant C with ratio <= C expected on fresh draws.

    The larger of the training maximum and a log-normal upper quantile
    exp(mean + sigmas * sd) of the log-ratios; a bare training maximum of 20
    draws is exceeded by a fresh draw with probability 1/21.
    """
    r = np.asarray(train_ratios, dtype=float)
    r = r[np.isfinite(r) & (r > 0)]
    if not len(r):
        return 0.0
    logs = np.log(r)
    spread = logs.std(ddof=1) if len(r) > 1 else 0.0
    return float(max(r.max(), math.exp(logs.mean() + sigmas * spread)))


@dataclass(frozen=True)
class MCReport:
    mean: float
    se: float
    n: int
    seed: int


def bm_second_moment(kappa: float, tau: float) -> float:
    """E|Y_[s,t](0, xi)|^2 for Brownian w, kappa = |xi|^2/2, tau = t - s."""
    x = kappa * tau
    if x < 1e-4:
        # series of 2(x - 1 + e^-x)/kappa^2 avoids cancellation
        return tau**2 * (1 - x / 3 + x**2 / 12)
    return 2.0 * (x - 1.0 + math.exp(-x)) / kappa**2


def _batch_Y(values: np.ndarray, omega: float, xi: np.ndarray, i0: int, i1: int) -> np.ndarray:
    """Y_[t_i0, t_i1](omega, xi) for every path in a batch (P, n+1, d)."""
    n = values.shape[1] - 1
    dt = 1.0 / n
    w = values[:, i0 : i1 + 1] @ xi
    t = np.arange(i0, i1 + 1) * dt
    phase = w + omega * t[None, :]
    delta = np.diff(phase, axis=1)
    return dt * np.sum(np.exp(1j * phase[:, :-1]) * _phase_factor(delta), axis=1)


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def _sample_Y(
    H: float, d: int, depth: int, seeds: Sequence[int], specs, workers: int | None, chunk: int = 256
) -> np.ndarray:
    """|Y|^2-ready values: array (len(specs), len(seeds)) of complex Y for (omega, xi, s, t) specs."""
    n = 2**depth
    idx = [(om, np.asarray(xi, dtype=float).reshape(d), round(s * n), round(t * n)) for om, xi, s, t in specs]

    def work(span):
        vals = sample_paths(H, d, n, seeds[span[0] : span[1]])
        return np.stack([_batch_Y(vals, om, xi, a, b) for om, xi, a, b in idx])

    parts = _ordered_map(work, _chunks(len(seeds), chunk), workers)
    return np.concatenate(parts, axis=1)


def _check_interval(s: float, t: float, depth: int) -> None:
    n = 2**depth
    if not 0 <= s < t <= 1:
        raise ValueError("need 0 <= s < t <= 1")
    for v in (s, t):
        if abs(v * n - round(v * n)) > 1e-9:
            raise ValueError(f"time {v} is not on the depth-{depth} grid")


@dataclass
class MomentReport:
    mean: float
    se: float
    n: int
    seed: int
    p: int
    exact: float | None
    trivial_bound: float
    z_exact: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def moment_check(
    H: float,
    d: int,
    omega: float,
    xi,
    s: float,
    t: float,
    p: int,
    n_samples: int,
    seed: int,
    depth: int = 10,
    workers: int | None = None,
) -> MomentReport:
    """Monte-Carlo E|Y_[s,t](omega, xi)|^{2p} over fBm paths on the depth grid.

    For H = 1/2, p = 1 and omega = 0 the report also carries the exact value
    2(kappa tau - 1 + e^{-kappa tau})/kappa^2 and the z-score against it.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (d,):
        raise ValueError(f"xi must have {d} components")
    if not np.linalg.norm(xi) > 0:
        raise ValueError("|xi| must be positive")
    _check_interval(s, t, depth)
    seeds = iter_path_seeds(seed, n_samples)
    y = _sample_Y(H, d, depth, seeds, [(omega, xi, s, t)], workers)[0]
    mean, se = batch_means(np.abs(y) ** (2 * p))
    exact = z = None
    if H == 0.5 and p == 1 and omega == 0:
        exact = bm_second_moment(0.5 * float(xi @ xi), t - s)
        z = (mean - exact) / se if se > 0 else math.inf
    return MomentReport(mean, se, n_samples, seed, p, exact, (t - s) ** (2 * p), z)


@dataclass
class ScalingReport:
    H: float
    slope: float
    intercept: float
    x: list[float]
    moments: list[float]
    ses: list[float]
    design: list[tuple[float, float]]

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def scaling_design(H: float, depth: int, z_min: float = 8.0, points_per_corr: float = 4.0, n_xi: int = 4):
    """(tau, |xi|) pairs with tau |xi|^{1/H} >= z_min and correlation time >= points_per_corr grid steps.

    tau runs over dyadic interval lengths; the correlation time |xi|^{-1/H} is
    spread log-uniformly between its admissible extremes.
    """
    dt = 2.0**-depth
    corr_min = points_per_corr * dt
    design = []
    tau = 1.0
    while tau >= z_min * corr_min:
        corr_max = tau / z_min
        for c in np.geomspace(corr_min, corr_max, n_xi if corr_max > corr_min else 1):
            design.append((tau, float(c ** (-H))))
        tau /= 2
    return design


def moment_scaling(
    H: float,
    n_samples: int = 400,
    seed: int = 0,
    depth: int = 12,
    design: Sequence[tuple[float, float]] | None = None,
    workers: int | None = None,
) -> ScalingReport:
    """Regress log E|Y|^2 on log(tau / |xi|^{1/H}) (d = 1, omega = 0) over a design of (tau, |xi|)."""
    design = list(design) if design is not None else scaling_design(H, depth)
    specs = [(0.0, [xi], 0.0, tau) for tau, xi in design]
    for _, _, s, t in specs:
        _check_interval(s, t, depth)
    y = _sample_Y(H, 1, depth, iter_path_seeds(seed, n_samples), specs, workers)
    stats = [batch_means(np.abs(row) ** 2) for row in y]
    m = np.array([v[0] for v in stats])
    x = np.array([tau / xi ** (1.0 / H) for tau, xi in design])
    slope, intercept = np.polyfit(np.log(x), np.log(m), 1)
    return ScalingReport(H, float(slope), float(intercept), x.tolist(), m.tolist(), [v[1] for v in stats], design)


@dataclass
class ExpMomentReport:
    lam: float
    estimates: list[MCReport]
    stability: list[float]
    min_sample: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def exp_moment_check(
    H: float,
    d: int,
    omega: float,
    xi,
    s: float,
    t: float,
    lam: float,
    n_samples_list: Sequence[int] = (2000, 8000),
    seed: int = 0,
    depth: int = 10,
    workers: int | None = None,
) -> ExpMomentReport:
    """E exp(lambda |xi|^{1/H} |Y|^2 / (t - s)) at each sample count, on independent path sets.

    ``stability[i]`` is |mean_{i+1} - mean_i| in units of the joint SE.
    """
    if not 0.0 < lam < 0.25:
        raise ValueError("lambda must lie in (0, 1/4)")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (d,):
        raise ValueError(f"xi must have {d} components")
    _check_interval(s, t, depth)
    scale = lam * np.linalg.norm(xi) ** (1.0 / H) / (t - s)
    reports = []
    lowest = math.inf
    for i, n in enumerate(n_samples_list):
        # disjoint seed blocks keep the sample sets independent
        block = (seed + (i << 40)) % 2**64
        y = _sample_Y(H, d, depth, iter_path_seeds(block, n), [(omega, xi, s, t)], workers)[0]
        vals = np.exp(scale * np.abs(y) ** 2)
        lowest = min(lowest, float(vals.min()))
        mean, se = batch_means(vals)
        reports.append(MCReport(mean, se, int(n), int(block)))
    stab = [
        abs(b.mean - a.mean) / math.hypot(a.se, b.se) if math.hypot(a.se, b.se) > 0 else 0.0
        for a, b in zip(reports, reports[1:])
    ]
    return ExpMomentReport(lam, reports, stab, lowest)


# --- K versus Q -------------------------------------------------------------


@dataclass
class KQReport:
    H: float
    alpha: float
    gamma: float
    lam: float
    n_max_list: list[int]
    K: dict[int, list[float]]
    Q: dict[int, list[float]]
    C: dict[int, float]
    violation_fraction: dict[int, float]
    C_relative_change: float
    n_train: int
    rows: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def to_csv(self, fh) -> None:
        keys = list(self.rows[0]) if self.rows else []
        fh.write(",".join(keys) + "\n")
        for r in self.rows:
            fh.write(",".join(f"{r[k]:.17g}" if isinstance(r[k], float) else str(r[k]) for k in keys) + "\n")


def k_vs_q_regression(
    H: float,
    alpha: float,
    gamma: float | None = None,
    n_train: int = 20,
    n_test: int = 30,
    depth: int = 10,
    lattice: TableConfig = TableConfig(n_max=10, m_max=1, omega_max=8.0, xi_max=8.0),
    n_max_list: Sequence[int] = (8, 10),
    lam: float = 0.2,
    seed: int = 0,
    d: int = 1,
    workers: int | None = None,
) -> KQReport:
    """Per-path (K_est, Q) with C calibrated on the first n_train paths and audited on the rest.

    One table is built per path at the largest n_max and truncated for the
    smaller ones, so both refinements see identical entries.
    """
    if alpha <= -1.0 / (2 * H):
        raise ValueError("alpha must exceed -1/(2H)")
    gamma = 5.0 / 8.0 + H * alpha / 4.0 if gamma is None else gamma
    levels = sorted(n_max_list)
    if levels[-1] > depth:
        raise ValueError("n_max cannot exceed the path depth")
    cfg = TableConfig(levels[-1], lattice.m_max, lattice.omega_max, lattice.xi_max)
    seeds = iter_path_seeds(seed, n_train + n_test)

    def one(path_seed):
        path = SampledPath(sample_paths(H, d, 2**depth, [path_seed])[0])
        full = build_table(path, cfg)
        out = []
        for n in levels:
            tab = full.truncate(n)
            k = estimate_averaging_constant(path, alpha, gamma, tab)
            st = path_stats(path, lam, tab, H)
            out.append((k, st))
        return out

    per_path = _ordered_map(one, seeds, workers)
    K = {n: [p[i][0] for p in per_path] for i, n in enumerate(levels)}
    Q = {n: [p[i][1].Q for p in per_path] for i, n in enumerate(levels)}
    C, viol = {}, {}
    for n in levels:
        ratio = np.array(K[n]) / (1.0 + np.array(Q[n]))
        C[n] = calibrate_constant(ratio[:n_train])
        viol[n] = float(np.mean(ratio[n_train:] > C[n])) if n_test else 0.0
    change = abs(C[levels[-1]] - C[levels[0]]) / C[levels[0]] if C[levels[0]] > 0 else math.inf
    rows = []
    for j, p in enumerate(per_path):
        for i, n in enumerate(levels):
            k, st = p[i]
            rows.append({"path_id": j, "n_max": n, "K": k, "Q": st.Q, "R": st.R, "S": st.S, "lambda": lam})
    return KQReport(H, alpha, gamma, lam, levels, K, Q, C, viol, change, n_train, rows)
