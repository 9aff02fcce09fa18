"""Time-dependent generator families H(t) on [a, b] and their integrals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ConsistencyError, DimensionError, DomainError
from .linalg import DEFAULT_DISSIPATIVITY_TOL, as_matrix, dissipativity, yosida
from .quadrature import QuadratureSpec, adaptive_quadrature, loglog_slope

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_CLASSIFY_GRID = 10
_COMMUTATOR_TOL = 1e-10


@dataclass(frozen=True)
class GeneratorFamily:
    """A map t -> H(t) on [a, b] with commutativity and dissipativity labels.

    `evaluate_batch` takes a time array (m,) and returns a stack (m, d, d);
    evaluators must be pure so concurrent sampling is safe.
    """

    a: float
    b: float
    dim: int
    evaluate_batch: Callable[[np.ndarray], np.ndarray]
    commutativity_class: str = "general"
    dissipative: bool = False
    name: str = "custom"

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError(f"need a < b, got [{self.a}, {self.b}]")
        if self.commutativity_class not in ("constant", "commuting", "general"):
            raise ConfigError(
                f"unknown commutativity class {self.commutativity_class!r}")

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate_batch(np.array([float(t)]))[0]

    @property
    def interval(self):
        return (self.a, self.b)


def _batch_from_scalar(evaluate: Callable[[float], np.ndarray]):
    def batch(ts: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(evaluate(float(t)), dtype=complex)
                         for t in np.atleast_1d(ts)])
    return batch


def classify_evaluator(batch, a: float, b: float) -> str:
    """Sampled commutator classification on a 10x10 grid."""
    ts = np.linspace(a, b, _CLASSIFY_GRID)
    H = batch(ts)
    if max(np.linalg.norm(H[i] - H[0], 2) for i in range(1, len(ts))) <= 1e-12:
        return "constant"
    comms = H[:, None] @ H[None, :] - H[None, :] @ H[:, None]
    if np.max(np.abs(comms)) <= _COMMUTATOR_TOL:
        return "commuting"
    return "general"


def _sampled_dissipative(batch, a: float, b: float,
                         tol: float = DEFAULT_DISSIPATIVITY_TOL) -> bool:
    ts = np.linspace(a, b, _CLASSIFY_GRID)
    return all(dissipativity(H, tol).is_dissipative for H in batch(ts))


def family_from_evaluator(evaluate, interval=(0.0, 1.0), name: str = "custom",
                          batch=None) -> GeneratorFamily:
    """Wrap a scalar evaluator, classifying commutativity and dissipativity."""
    a, b = float(interval[0]), float(interval[1])
    if batch is None:
        batch = _batch_from_scalar(evaluate)
    dim = batch(np.array([a])).shape[-1]
    return GeneratorFamily(
        a=a, b=b, dim=dim, evaluate_batch=batch,
        commutativity_class=classify_evaluator(batch, a, b),
        dissipative=_sampled_dissipative(batch, a, b), name=name)


def family_from_matrix(H, interval=(0.0, 1.0), name: str = "constant") -> GeneratorFamily:
    """Constant family t -> H."""
    A = as_matrix(H, "H")

    def batch(ts):
        return np.broadcast_to(A, (len(np.atleast_1d(ts)),) + A.shape).copy()

    a, b = float(interval[0]), float(interval[1])
    return GeneratorFamily(
        a=a, b=b, dim=A.shape[0], evaluate_batch=batch,
        commutativity_class="constant",
        dissipative=dissipativity(A).is_dissipative, name=name)


def builtin_family(name: str, params: Sequence[float] = (),
                   interval=(0.0, 1.0)) -> GeneratorFamily:
    """Named test fixtures.

    constant:         -i * p0 * sigma_z                        (default p0=1)
    scalar_commuting: (p0 + p1 t) * (-i sigma_z)               (default 0, 1)
    two_level_driven: -i (p0 sigma_z + p1 sin(p2 t) sigma_x)   (default 1,1,1)
    damped_two_level: two_level_driven - p3 * I                (default gamma 0.5)
    random_smooth:    -i A(t) - p2 I, A(t) a trig polynomial with Hermitian
                      random coefficients; p0 seed, p1 dim     (default 0, 3, 0.2)
    """
    p = list(params)
    a, b = float(interval[0]), float(interval[1])
    if name == "constant":
        delta = p[0] if p else 1.0
        return family_from_matrix(-1j * delta * SIGMA_Z, (a, b), name=name)
    if name == "scalar_commuting":
        c0 = p[0] if len(p) > 0 else 0.0
        c1 = p[1] if len(p) > 1 else 1.0
        H0 = -1j * SIGMA_Z

        def batch(ts):
            ts = np.atleast_1d(ts)
            return (c0 + c1 * ts)[:, None, None] * H0

        return GeneratorFamily(a=a, b=b, dim=2, evaluate_batch=batch,
                               commutativity_class="commuting",
                               dissipative=True, name=name)
    if name == "two_level_driven" or name == "damped_two_level":
        delta = p[0] if len(p) > 0 else 1.0
        amp = p[1] if len(p) > 1 else 1.0
        freq = p[2] if len(p) > 2 else 1.0
        gamma = (p[3] if len(p) > 3 else 0.5) if name == "damped_two_level" else 0.0

        def batch(ts):
            ts = np.atleast_1d(ts)
            drive = amp * np.sin(freq * ts)
            out = (-1j) * (delta * SIGMA_Z[None] +
                           drive[:, None, None] * SIGMA_X[None])
            if gamma:
                out = out - gamma * np.eye(2)[None]
            return out

        return GeneratorFamily(a=a, b=b, dim=2, evaluate_batch=batch,
                               commutativity_class="general",
                               dissipative=True, name=name)
    if name == "random_smooth":
        seed = int(p[0]) if len(p) > 0 else 0
        dim = int(p[1]) if len(p) > 1 else 3
        gamma = p[2] if len(p) > 2 else 0.2
        rng = np.random.default_rng(seed)

        def herm():
            X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            X = 0.5 * (X + X.conj().T)
            return X / max(np.linalg.norm(X, 2), 1e-12)

        A0, A1, A2 = herm(), herm(), herm()

        def batch(ts):
            ts = np.atleast_1d(ts)
            A = (A0[None] + np.sin(ts)[:, None, None] * A1[None]
                 + np.cos(ts)[:, None, None] * A2[None])
            return -1j * A - gamma * np.eye(dim)[None]

        return GeneratorFamily(a=a, b=b, dim=dim, evaluate_batch=batch,
                               commutativity_class="general",
                               dissipative=True, name=name)
    raise ConfigError(f"unknown builtin family {name!r}")


def family_from_csv(path, name: str = "tabulated") -> GeneratorFamily:
    """Tabulated family with linear interpolation.

    Columns: t, re(h_11), im(h_11), ... in row-major entry order; header
    row required.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 3:
        raise ConfigError(f"{path}: need a header and at least two data rows")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    ncols = data.shape[1] - 1
    dim = int(round(np.sqrt(ncols / 2)))
    if 2 * dim * dim != ncols:
        raise ConfigError(f"{path}: {ncols} value columns is not 2*d^2")
    ts = data[:, 0]
    if not np.all(np.diff(ts) > 0):
        raise ConfigError(f"{path}: time column must be strictly increasing")
    flat = data[:, 1::2] + 1j * data[:, 2::2]

    def batch(query):
        query = np.atleast_1d(query)
        out = np.empty((len(query), dim * dim), dtype=complex)
        for k in range(dim * dim):
            out[:, k] = (np.interp(query, ts, flat[:, k].real)
                         + 1j * np.interp(query, ts, flat[:, k].imag))
        return out.reshape(len(query), dim, dim)

    return family_from_evaluator(None, (ts[0], ts[-1]), name=name, batch=batch)


def yosida_stack(H: np.ndarray, z: float) -> np.ndarray:
    """Yosida approximants z H (zI-H)^{-1} over a stack (m, d, d)."""
    if not z > 0:
        raise DomainError(f"yosida requires z > 0, got z={z}")
    d = H.shape[-1]
    R = np.linalg.solve(z * np.eye(d)[None] - H, np.broadcast_to(
        np.eye(d, dtype=complex), H.shape))
    return z * (H @ R)


def yosida_family(f: GeneratorFamily, z: float) -> GeneratorFamily:
    """The family t -> H_z(t); same labels (rational functions of H(t))."""
    def batch(ts):
        return yosida_stack(f.evaluate_batch(np.atleast_1d(ts)), z)

    return GeneratorFamily(a=f.a, b=f.b, dim=f.dim, evaluate_batch=batch,
                           commutativity_class=f.commutativity_class,
                           dissipative=f.dissipative,
                           name=f"{f.name}_yosida{z:g}")


def _check_interval(f: GeneratorFamily, s: float, t: float):
    if s > t:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    if s < f.a - 1e-12 or t > f.b + 1e-12:
        raise DomainError(
            f"[{s}, {t}] not contained in the family interval [{f.a}, {f.b}]")


def integrate_family_with_estimate(f: GeneratorFamily, s: float, t: float,
                                   spec: QuadratureSpec = QuadratureSpec()):
    """Q[t, s] = int_s^t H(u) du with a panel-doubling error estimate."""
    _check_interval(f, s, t)
    Q, est, panels = adaptive_quadrature(f.evaluate_batch, s, t, spec)
    if f.dissipative:
        margin = dissipativity(Q).margin
        if margin > max(1e-9, 100 * est) * max(1.0, t - s):
            raise ConsistencyError(
                f"integral of a dissipative family has margin {margin:.3e}")
    return Q, est, panels


def integrate_family(f: GeneratorFamily, s: float, t: float,
                     spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return integrate_family_with_estimate(f, s, t, spec)[0]


def variance_integral(f: GeneratorFamily, z: float, e: np.ndarray, t: float,
                      spec: QuadratureSpec = QuadratureSpec()) -> float:
    """int_a^t ( ||H_z(s)e||^2 - |<H_z(s)e, e>|^2 ) ds for a unit vector e.

    The integrand is a variance, nonnegative by Cauchy-Schwarz; the
    modulus-squared form keeps it real for non-Hermitian H_z.
    """
    e = np.asarray(e, dtype=complex)
    if e.shape != (f.dim,):
        raise DimensionError(f"e must have shape ({f.dim},), got {e.shape}")
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise DomainError("e must be a unit vector")

    def integrand(ts):
        Hz = yosida_stack(f.evaluate_batch(np.atleast_1d(ts)), z)
        v = Hz @ e
        return (np.sum(np.abs(v) ** 2, axis=-1)
                - np.abs(np.einsum("mi,i->m", v, e.conj())) ** 2)

    value, _, _ = adaptive_quadrature(integrand, f.a, t, spec)
    return float(value)


def derivative_probe(f: GeneratorFamily, t: float, h_list: Sequence[float],
                     spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Observed order of (Q[t+h,a] - Q[t,a])/h -> H(t).

    Returns the log-log slope of the residual versus h; +inf when the
    residual vanishes at every h (constant families).
    """
    h_list = list(h_list)
    if not all(h > 0 for h in h_list):
        raise DomainError("h_list entries must be positive")
    if not (f.a < t < f.b) or t + max(h_list) > f.b:
        raise DomainError(f"t={t} with max h={max(h_list)} leaves [{f.a}, {f.b}]")
    Qt = integrate_family(f, f.a, t, spec)
    Ht = f(t)
    residuals = []
    for h in h_list:
        Qth = integrate_family(f, f.a, t + h, spec)
        residuals.append(np.linalg.norm((Qth - Qt) / h - Ht, 2))
    if max(residuals) <= 1e-12:
        return float("inf")
    return loglog_slope(h_list, residuals)
