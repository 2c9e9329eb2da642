"""Fourier-atom vector fields and averaging along a path.

A field is a finite sum b(t, x) = sum_j c_j exp(i (omega_j t + xi_j . x)) with
complex coefficient vectors c_j.  Averaging along w over [s, t] acts on each
atom through the oscillatory integral Y_{s,t}(omega_j, xi_j).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fbm import SampledPath
from .oscillatory import DyadicYTable, eval_Y_many

__all__ = [
    "FourierVectorField",
    "AveragedFieldValue",
    "RealityError",
    "frequency_weight",
    "n_alpha_norm",
    "averaged_field",
    "averaged_field_many",
    "translate",
    "four_point_norm",
    "four_point_rhs",
    "mollify",
    "estimate_averaging_constant",
    "random_field",
    "bundled_field",
    "two_point_ratio",
    "four_point_ratio",
]


class RealityError(ValueError):
    """Atom list is not closed under (omega, xi, c) -> (-omega, -xi, conj c)."""


def _key(omega: float, xi: np.ndarray) -> tuple:
    # +0.0 folds -0.0 into 0.0 so the binary keys of twins match
    return (float(omega) + 0.0,) + tuple(float(x) + 0.0 for x in xi)


class FourierVectorField:
    """Immutable finite list of Fourier atoms (omega, xi, c).

    Atoms sharing an (omega, xi) key are merged by adding coefficients.
    """

    __slots__ = ("omegas", "xis", "coeffs")

    def __init__(self, omegas, xis, coeffs, check_reality: bool = True):
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        xis = np.asarray(xis, dtype=float)
        coeffs = np.asarray(coeffs, dtype=complex)
        if len(omegas) or xis.ndim != 2:
            xis = xis.reshape(len(omegas), -1)
            coeffs = coeffs.reshape(len(omegas), -1)
        merged: dict[tuple, np.ndarray] = {}
        for om, xi, c in zip(omegas, xis, coeffs):
            k = _key(om, xi)
            merged[k] = merged[k] + c if k in merged else c.copy()
        keys = list(merged)
        d = xis.shape[1] if xis.ndim == 2 else 1
        k_out = coeffs.shape[1] if coeffs.ndim == 2 else d
        self.omegas = np.array([k[0] for k in keys], dtype=float)
        self.xis = np.array([k[1:] for k in keys], dtype=float).reshape(len(keys), d)
        self.coeffs = np.array([merged[k] for k in keys], dtype=complex).reshape(len(keys), k_out)
        for arr in (self.omegas, self.xis, self.coeffs):
            arr.setflags(write=False)
        if check_reality:
            self.check_reality()

    @classmethod
    def from_atoms(cls, atoms, check_reality: bool = True) -> "FourierVectorField":
        """Build from an iterable of (omega, xi, c) triples."""
        atoms = list(atoms)
        return cls(
            [a[0] for a in atoms],
            [np.atleast_1d(a[1]) for a in atoms],
            [np.atleast_1d(a[2]) for a in atoms],
            check_reality,
        )

    @classmethod
    def real_closure(cls, atoms) -> "FourierVectorField":
        """Add the conjugate twin of every atom, halving so that the sum stays the same real part."""
        full = []
        for om, xi, c in atoms:
            xi = np.atleast_1d(np.asarray(xi, dtype=float))
            c = np.atleast_1d(np.asarray(c, dtype=complex))
            if om == 0 and not np.any(xi):
                full.append((om, xi, c.real.astype(complex)))
            else:
                full.append((om, xi, c / 2))
                full.append((-om, -xi, np.conj(c) / 2))
        return cls.from_atoms(full)

    @classmethod
    def zero(cls, d: int) -> "FourierVectorField":
        return cls(np.zeros(0), np.zeros((0, d)), np.zeros((0, d)))

    @property
    def d(self) -> int:
        return self.xis.shape[1]

    def __len__(self) -> int:
        return len(self.omegas)

    def check_reality(self, rtol: float = 1e-12) -> None:
        index = {_key(om, xi): j for j, (om, xi) in enumerate(zip(self.omegas, self.xis))}
        scale = max(1.0, float(np.abs(self.coeffs).sum()))
        for j, (om, xi) in enumerate(zip(self.omegas, self.xis)):
            twin = index.get(_key(-om, -xi))
            if twin is None:
                raise RealityError(f"atom (omega={om}, xi={xi.tolist()}) has no conjugate twin")
            if np.max(np.abs(self.coeffs[twin] - np.conj(self.coeffs[j])), initial=0.0) > rtol * scale:
                raise RealityError(f"atom (omega={om}, xi={xi.tolist()}) twin is not conjugate")

    def abs_coeffs(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    def __call__(self, t, x) -> np.ndarray:
        """Pointwise b(t, x); ``t`` scalar or (m,), ``x`` shape (m, d) or (d,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        phase = t[:, None] * self.omegas[None, :] + x @ self.xis.T
        out = (np.exp(1j * phase) @ self.coeffs).real
        return out[0] if single else out

    def _combine(self, other: "FourierVectorField", sign: float) -> "FourierVectorField":
        if not len(other):
            return self
        if not len(self):
            return other.scale(sign)
        if other.d != self.d:
            raise ValueError("fields must share the dimension")
        return FourierVectorField(
            np.concatenate([self.omegas, other.omegas]),
            np.concatenate([self.xis, other.xis]),
            np.concatenate([self.coeffs, sign * other.coeffs]),
            check_reality=False,
        )

    def __add__(self, other: "FourierVectorField") -> "FourierVectorField":
        return self._combine(other, 1.0)

    def __sub__(self, other: "FourierVectorField") -> "FourierVectorField":
        return self._combine(other, -1.0)

    def scale(self, factor) -> "FourierVectorField":
        """Multiply atom j by factor[j] (or a scalar)."""
        factor = np.broadcast_to(np.asarray(factor), (len(self),))
        return FourierVectorField(self.omegas, self.xis, self.coeffs * factor[:, None], check_reality=False)

    def to_json(self) -> list[dict]:
        return [
            {
                "omega": float(om),
                "xi": [float(v) for v in xi],
                "c_re": [float(v) for v in c.real],
                "c_im": [float(v) for v in c.imag],
            }
            for om, xi, c in zip(self.omegas, self.xis, self.coeffs)
        ]

    def dump(self, fh) -> None:
        json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, data) -> "FourierVectorField":
        if isinstance(data, dict):
            data = data["atoms"]
        atoms = [
            (a["omega"], a["xi"], np.asarray(a["c_re"], dtype=float) + 1j * np.asarray(a["c_im"], dtype=float))
            for a in data
        ]
        return cls.from_atoms(atoms, check_reality=True)

    @classmethod
    def load(cls, fh) -> "FourierVectorField":
        return cls.from_json(json.load(fh))

    def __repr__(self) -> str:
        return f"FourierVectorField(n_atoms={len(self)}, d={self.d})"


@dataclass(frozen=True)
class AveragedFieldValue:
    value: np.ndarray
    imag_residual: float


def frequency_weight(omegas, xis, alpha: float) -> np.ndarray:
    """(1 + |xi|)^alpha (1 + log^{1/2}(1 + |omega|))."""
    xi_norm = np.linalg.norm(np.atleast_2d(xis), axis=-1)
    return (1.0 + xi_norm) ** alpha * (1.0 + np.sqrt(np.log1p(np.abs(omegas))))


def n_alpha_norm(f: FourierVectorField, alpha: float) -> float:
    if not len(f):
        return 0.0
    return float(np.sum(f.abs_coeffs() * frequency_weight(f.omegas, f.xis, alpha)))


def averaged_field_many(f: FourierVectorField, path: SampledPath, s: float, t: float, x) -> tuple[np.ndarray, np.ndarray]:
    """sigma_[s,t] f at points x of shape (m, d); returns (values (m, d), imag residual (m,))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not len(f):
        return np.zeros_like(x), np.zeros(len(x))
    y = eval_Y_many(path, s, t, f.omegas, f.xis)
    raw = (np.exp(1j * (x @ f.xis.T)) * y[None, :]) @ f.coeffs
    return raw.real, np.linalg.norm(raw.imag, axis=1)


def averaged_field(f: FourierVectorField, path: SampledPath, s: float, t: float, x) -> AveragedFieldValue:
    """(sigma^w_[s,t] f)(x) = int_s^t f(u, w_u + x) du via the atom representation."""
    vals, resid = averaged_field_many(f, path, s, t, np.asarray(x, dtype=float)[None, :])
    return AveragedFieldValue(vals[0], float(resid[0]))


def translate(f: FourierVectorField, x) -> FourierVectorField:
    """tau_x f(z) = f(x + z): atom c -> c exp(i xi.x)."""
    x = np.asarray(x, dtype=float)
    return f.scale(np.exp(1j * (f.xis @ x)))


def four_point_norm(f: FourierVectorField, x1, y1, x2, y2, alpha: float) -> float:
    """N_alpha(tau_x1 f - tau_y1 f - tau_x2 f + tau_y2 f), computed atomwise."""
    phases = [np.exp(1j * (f.xis @ np.asarray(p, dtype=float))) for p in (x1, y1, x2, y2)]
    mult = phases[0] - phases[1] - phases[2] + phases[3]
    return float(np.sum(np.abs(mult) * f.abs_coeffs() * frequency_weight(f.omegas, f.xis, alpha)))


def four_point_rhs(f: FourierVectorField, x1, y1, x2, y2, alpha: float) -> float:
    """N_{alpha+2}(f) [|(x1-y1)-(x2-y2)|(1+|y1-y2|+|x2-y2|) + |y1-y2||x2-y2|]."""
    x1, y1, x2, y2 = (np.asarray(p, dtype=float) for p in (x1, y1, x2, y2))
    a = np.linalg.norm((x1 - y1) - (x2 - y2))
    b = np.linalg.norm(y1 - y2)
    c = np.linalg.norm(x2 - y2)
    return n_alpha_norm(f, alpha + 2) * (a * (1 + b + c) + b * c)


def mollify(f: FourierVectorField, n: int, scheme: str = "exp", alpha: float = 0.0) -> FourierVectorField:
    """Damp high spatial frequencies: (n/(n+|xi|))^{1-alpha} or exp(-|xi|/n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xi_norm = np.linalg.norm(f.xis, axis=1)
    if scheme == "power":
        if alpha >= 1:
            raise ValueError("power mollifier needs alpha < 1")
        mult = (n / (n + xi_norm)) ** (1 - alpha)
    elif scheme == "exp":
        mult = np.exp(-xi_norm / n)
    else:
        raise ValueError(f"unknown mollification scheme {scheme!r}")
    return f.scale(mult)


def estimate_averaging_constant(path: SampledPath, alpha: float, gamma: float, table: DyadicYTable) -> float:
    """Largest normalised |Y| over the table: a lower estimate of K^w_{alpha,gamma}."""
    if table.d != path.d:
        raise ValueError("table was built for a different dimension")
    inv_weight = 1.0 / frequency_weight(table.omegas, table.xis, alpha)
    best = 0.0
    for n in range(table.n_max + 1):
        lev = np.abs(table.level(n)).max(axis=0)
        best = max(best, float(np.max(lev * inv_weight)) * 2.0 ** (n * gamma))
    return best


def random_field(
    rng: np.random.Generator, n_pairs: int, d: int, xi_scale: float = 2.0, omega_scale: float = 2.0, amp: float = 1.0
) -> FourierVectorField:
    """Reality-closed field with ``n_pairs`` random atom pairs."""
    atoms = []
    for _ in range(n_pairs):
        om = rng.uniform(-omega_scale, omega_scale)
        xi = rng.uniform(-xi_scale, xi_scale, d)
        c = amp * (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2 * d)
        atoms.append((om, xi, c))
    return FourierVectorField.real_closure(atoms)


BUNDLED_FIELDS = ("smooth_4pair", "mollify_6atom")


def bundled_field(name: str) -> FourierVectorField:
    """Load one of the example fields shipped in youngreg/data."""
    from importlib.resources import files

    if name not in BUNDLED_FIELDS:
        raise ValueError(f"unknown bundled field {name!r}; choose from {BUNDLED_FIELDS}")
    with (files("youngreg") / "data" / f"{name}.json").open() as fh:
        return FourierVectorField.load(fh)


def two_point_ratio(f: FourierVectorField, path: SampledPath, s: float, t: float, x, y, alpha: float, gamma: float, theta: float, k_est: float) -> float:
    """|sigma f(x) - sigma f(y)| / (K N_{alpha+theta}(f) (t-s)^gamma |x-y|^theta)."""
    vals, _ = averaged_field_many(f, path, s, t, np.stack([np.asarray(x, float), np.asarray(y, float)]))
    lhs = float(np.linalg.norm(vals[0] - vals[1]))
    rhs = k_est * n_alpha_norm(f, alpha + theta) * (t - s) ** gamma * float(np.linalg.norm(np.subtract(x, y))) ** theta
    return lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)


def four_point_ratio(f: FourierVectorField, path: SampledPath, s: float, t: float, x1, y1, x2, y2, alpha: float, gamma: float, k_est: float) -> float:
    """|sigma(tau_x1 f - tau_y1 f - tau_x2 f + tau_y2 f)(0)| over K (t-s)^gamma times the four-point right side."""
    vals, _ = averaged_field_many(f, path, s, t, np.stack([np.asarray(p, float) for p in (x1, y1, x2, y2)]))
    lhs = float(np.linalg.norm(vals[0] - vals[1] - vals[2] + vals[3]))
    rhs = k_est * (t - s) ** gamma * four_point_rhs(f, x1, y1, x2, y2, alpha)
    return lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
