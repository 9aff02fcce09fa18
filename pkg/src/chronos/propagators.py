"""Evolution operators and series machinery.

Product-integral oracle, exp{wQ} propagators, time-ordered iterated
integrals, exact Taylor remainders and asymptotic-order probes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConsistencyError, ConvergenceError, DomainError
from .families import (GeneratorFamily, builtin_family, integrate_family,
                       integrate_family_with_estimate, yosida_family)
from .linalg import as_matrix, expm_stack, matrix_exp, operator_norm
from .quadrature import (QuadratureSpec, cumulative_simpson_uniform,
                         loglog_slope, panel_nodes)

MAX_HALVINGS = 24


@dataclass(frozen=True)
class PropagatorResult:
    """An evolution operator plus diagnostics."""

    U: np.ndarray
    Q: Optional[np.ndarray] = None
    w: float = 1.0
    step_count: int = 0
    error_estimate: float = 0.0
    contraction_margin: float = 0.0
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DysonExpansion:
    """Time-ordered iterated integrals T_0..T_n, optionally with a remainder."""

    terms: List[np.ndarray]
    order: int
    remainder: Optional[np.ndarray] = None
    calibration: Optional[dict] = None

    def partial_sum(self, w: float = 1.0) -> np.ndarray:
        return sum((w ** k) * T for k, T in enumerate(self.terms))


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """mats[m-1] @ ... @ mats[0] by log-depth pairwise multiplication."""
    P = np.asarray(mats)
    if P.shape[0] == 0:
        return np.eye(P.shape[-1], dtype=complex)
    while P.shape[0] > 1:
        k = P.shape[0] // 2
        Q = P[1:2 * k:2] @ P[0:2 * k:2]
        if P.shape[0] % 2:
            Q = np.concatenate([Q, P[-1:]])
        P = Q
    return P[0]


def _result(U, Q=None, w=1.0, steps=0, err=0.0, **extras) -> PropagatorResult:
    return PropagatorResult(U=U, Q=Q, w=w, step_count=steps, error_estimate=err,
                            contraction_margin=operator_norm(U) - 1.0,
                            extras=extras)


def product_integral(f: GeneratorFamily, s: float, t: float,
                     tol: float = 1e-10) -> PropagatorResult:
    """Ground-truth time-ordered propagator U[t, s].

    Limit of ordered products of midpoint-step exponentials under step
    halving, stopped when successive levels differ by <= tol.
    """
    if s > t:
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    if s == t:
        return _result(np.eye(f.dim, dtype=complex), w=1.0)
    steps = 16
    U_prev = _oracle_level(f, s, t, steps)
    prev_diff = np.inf
    for _ in range(MAX_HALVINGS):
        steps *= 2
        U = _oracle_level(f, s, t, steps)
        diff = np.linalg.norm(U - U_prev, 2)
        U_prev = U
        if diff <= tol:
            return _result(U, w=1.0, steps=steps, err=diff)
        # Roundoff accumulates like steps * eps; once halving stops helping
        # the requested tolerance is unreachable at this precision.
        if diff >= prev_diff or steps >= 1 << 22:
            raise ConvergenceError(
                f"product integral stalled at diff={diff:.3e} "
                f"({steps} steps); tol={tol:g} is below the roundoff floor")
        prev_diff = diff
    raise ConvergenceError(
        f"product integral did not reach tol={tol:g} within {MAX_HALVINGS} halvings")


def _oracle_level(f: GeneratorFamily, s: float, t: float, steps: int) -> np.ndarray:
    h = (t - s) / steps
    mids = s + h * (np.arange(steps) + 0.5)
    E = expm_stack(h * f.evaluate_batch(mids))
    return ordered_product(E)


def propagator_on_grid(f: GeneratorFamily, a: float, ts: np.ndarray,
                       w: float = 1.0) -> np.ndarray:
    """U_w[ts_j, a] along a uniform grid, fourth order per step.

    Each cell uses a two-node Gauss commutator (Magnus-style) exponential,
    so the grid itself controls the accuracy.
    """
    m = len(ts) - 1
    h = ts[1] - ts[0]
    c = np.sqrt(3.0) / 6.0
    n1 = ts[:-1] + h * (0.5 - c)
    n2 = ts[:-1] + h * (0.5 + c)
    A1 = w * f.evaluate_batch(n1)
    A2 = w * f.evaluate_batch(n2)
    omega = 0.5 * h * (A1 + A2) + (h * h * np.sqrt(3.0) / 12.0) * (A2 @ A1 - A1 @ A2)
    E = expm_stack(omega)
    out = np.empty((m + 1, f.dim, f.dim), dtype=complex)
    out[0] = np.eye(f.dim)
    for j in range(m):
        out[j + 1] = E[j] @ out[j]
    return out


def exp_propagator(Q, w: float) -> PropagatorResult:
    """Second-exponential-formula propagator exp(w Q)."""
    Q = as_matrix(Q, "Q")
    return _result(matrix_exp(w * Q), Q=Q, w=w)


def dyson_terms(f: GeneratorFamily, a: float, t: float, n: int,
                grid: int = 1024) -> DysonExpansion:
    """Iterated time-ordered integrals T_0..T_n via forward recursion.

    T_k(t) = int_a^t H(s) T_{k-1}(s) ds, accumulated with cumulative
    Simpson on a uniform grid.
    """
    if n < 0:
        raise DomainError(f"order must be >= 0, got {n}")
    if grid < 64:
        raise DomainError(f"grid must be >= 64, got {grid}")
    ts = np.linspace(a, t, grid + 1)
    h = (t - a) / grid
    Hs = f.evaluate_batch(ts)
    Tk = np.broadcast_to(np.eye(f.dim, dtype=complex), Hs.shape).copy()
    terms = [np.eye(f.dim, dtype=complex)]
    for _ in range(n):
        Tk = cumulative_simpson_uniform(Hs @ Tk, h)
        terms.append(Tk[-1].copy())
    return DysonExpansion(terms=terms, order=n)


def taylor_partial_sum(Q: np.ndarray, n: int, w: float) -> np.ndarray:
    """sum_{k=0}^n (wQ)^k / k!"""
    d = Q.shape[0]
    term = np.eye(d, dtype=complex)
    total = term.copy()
    for k in range(1, n + 1):
        term = (w / k) * (Q @ term)
        total += term
    return total


def remainder_310(Q, n: int, w: float, xi_panels: int = 32) -> np.ndarray:
    """Exact Taylor remainder of exp(wQ) after order n.

    R = (1/n!) int_0^w (w - xi)^n Q^{n+1} exp(xi Q) dxi, so that
    sum_{k<=n} (wQ)^k/k! + R = exp(wQ) for any square Q.
    """
    Q = as_matrix(Q, "Q")
    if w < 0:
        raise DomainError(f"need w >= 0, got {w}")
    if n < 0:
        raise DomainError(f"order must be >= 0, got {n}")
    if w == 0:
        return np.zeros_like(Q)
    xi, wts = panel_nodes(0.0, w, xi_panels, "gauss5")
    E = expm_stack(xi[:, None, None] * Q)
    Qp = np.linalg.matrix_power(Q, n + 1)
    weight = wts * (w - xi) ** n / math.factorial(n)
    return np.tensordot(weight, Qp[None] @ E, axes=(0, 0))


_CALIBRATION_CACHE: dict = {}


def _iterated_remainder_xi(f, a, t, n, w, grid, xi_panels):
    """Remainder candidate with exp(xi Q[s,a]) inside the nested integral."""
    ts = np.linspace(a, t, grid + 1)
    h = (t - a) / grid
    Hs = f.evaluate_batch(ts)
    Qs = cumulative_simpson_uniform(Hs, h)
    xi, wts = panel_nodes(0.0, w, xi_panels, "gauss5")
    total = np.zeros((f.dim, f.dim), dtype=complex)
    for x, wt in zip(xi, wts):
        V = expm_stack(x * Qs)
        for _ in range(n + 1):
            V = cumulative_simpson_uniform(Hs @ V, h)
        total += wt * (w - x) ** n * V[-1]
    return total


def _iterated_remainder_ie(f, a, t, n, w, grid, xi_panels):
    """Remainder from the iterated integral equation.

    R = w^{n+1} K^{n+1}[U_w](t) with (K g)(s) = int_a^s H(u) g(u) du and
    U_w the propagator of w H(t); closes the series for any family.
    """
    ts = np.linspace(a, t, grid + 1)
    h = (t - a) / grid
    Hs = f.evaluate_batch(ts)
    V = propagator_on_grid(f, a, ts, w=w)
    for _ in range(n + 1):
        V = cumulative_simpson_uniform(Hs @ V, h)
    return (w ** (n + 1)) * V[-1]


_REMAINDER_STRUCTURES = {
    "taylor_xi": _iterated_remainder_xi,
    "integral_equation": _iterated_remainder_ie,
}


def _calibrate_remainder(n: int, tol: float = 1e-8):
    """Pick the remainder structure and prefactor that close the series.

    Candidates are checked on a commuting probe family, where the target
    exp(wQ) equals the physical propagator; the first (structure, c) pair
    whose partial sum + c * remainder matches to `tol` wins.
    """
    if n in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[n]
    probe = builtin_family("scalar_commuting", (0.3, 1.0))
    a, t, w, grid, xi_panels = probe.a, probe.b, 0.7, 512, 16
    Q = integrate_family(probe, a, t)
    target = matrix_exp(w * Q)
    partial = dyson_terms(probe, a, t, n, grid).partial_sum(w)
    constants = (1.0, float(n + 1), float(n + 1) / math.factorial(n))
    for structure, builder in _REMAINDER_STRUCTURES.items():
        raw = builder(probe, a, t, n, w, grid, xi_panels)
        for c in constants:
            residual = np.linalg.norm(partial + c * raw - target, 2)
            if residual <= tol:
                choice = {"structure": structure, "constant": c,
                          "probe_residual": float(residual)}
                _CALIBRATION_CACHE[n] = choice
                return choice
    raise ConsistencyError(
        f"no remainder structure/constant closes the order-{n} series on the probe")


def remainder_42(f: GeneratorFamily, a: float, t: float, n: int, w: float,
                 grid: int = 1024, xi_panels: int = 32) -> np.ndarray:
    """Calibrated remainder of the time-ordered series after order n.

    Returns R such that sum_{k<=n} w^k T_k + R reproduces the propagator
    of w H(t) (equal to exp(wQ) for commuting families).  The prefactor
    and inner structure are fixed once per order by `_calibrate_remainder`.
    """
    if n < 0:
        raise DomainError(f"order must be >= 0, got {n}")
    if w < 0:
        raise DomainError(f"need w >= 0, got {w}")
    if w == 0:
        return np.zeros((f.dim, f.dim), dtype=complex)
    choice = _calibrate_remainder(n)
    raw = _REMAINDER_STRUCTURES[choice["structure"]](f, a, t, n, w, grid, xi_panels)
    return choice["constant"] * raw


def dyson_expansion(f: GeneratorFamily, a: float, t: float, n: int, w: float = 1.0,
                    grid: int = 1024, xi_panels: int = 32) -> DysonExpansion:
    """Terms plus calibrated remainder in one structure."""
    exp_terms = dyson_terms(f, a, t, n, grid)
    R = remainder_42(f, a, t, n, w, grid, xi_panels)
    return DysonExpansion(terms=exp_terms.terms, order=n, remainder=R,
                          calibration=dict(_calibrate_remainder(n)))


def asymptotic_probe(Q, n: int, w_list: Sequence[float]):
    """Poincare-asymptotics probe for the truncated exponential series.

    Returns (observed_order, limit_matrix): the log-log slope of
    ||exp(wQ) - sum_{k<=n}(wQ)^k/k!|| versus w (expected n+1) and the
    scaled residual w^{-(n+1)} * (exp(wQ) - partial) at the smallest
    usable w (expected Q^{n+1}/(n+1)!).
    """
    Q = as_matrix(Q, "Q")
    w_list = list(w_list)
    if len(w_list) < 4 or any(np.diff(w_list) >= 0) or min(w_list) <= 0:
        raise DomainError("w_list must be >= 4 positive decreasing entries")
    residuals, norms = [], []
    for w in w_list:
        Rm = matrix_exp(w * Q) - taylor_partial_sum(Q, n, w)
        residuals.append(Rm)
        norms.append(np.linalg.norm(Rm, 2))
    keep = [k for k, r in enumerate(norms) if r >= 1e-13]
    if len(keep) < len(w_list):
        warnings.warn("cancellation below 1e-13; w_list truncated", RuntimeWarning)
    if not keep:
        return float("inf"), np.zeros_like(Q)
    ws = [w_list[k] for k in keep]
    order = loglog_slope(ws, [norms[k] for k in keep])
    w_min = ws[-1]
    limit = residuals[keep[-1]] / (w_min ** (n + 1))
    return order, limit


def propagator_derivative_check(f: GeneratorFamily, a: float, t: float,
                                h_list: Sequence[float],
                                oracle_tol: float = 1e-10) -> float:
    """Observed order of the central difference of U[.,a] against H(t)U[t,a]."""
    h_list = list(h_list)
    hmax = max(h_list)
    if not (f.a < t - hmax and t + hmax < f.b):
        raise DomainError(f"t={t} +/- {hmax} leaves ({f.a}, {f.b})")
    U_t = product_integral(f, a, t, oracle_tol).U
    target = f(t) @ U_t
    residuals = []
    for h in h_list:
        Up = product_integral(f, a, t + h, oracle_tol).U
        Um = product_integral(f, a, t - h, oracle_tol).U
        residuals.append(np.linalg.norm((Up - Um) / (2 * h) - target, 2))
    if max(residuals) <= 1e-12:
        return float("inf")
    return loglog_slope(h_list, residuals)


def yosida_propagator_convergence(f: GeneratorFamily, a: float, t: float,
                                  z_list: Sequence[float],
                                  spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Convergence order of exp(Q_z[t,a]) -> exp(Q[t,a]) as z grows.

    For dissipative families each z is also checked against the bound
    ||exp(Q_z) - exp(Q)|| <= ||Q_z - Q|| + 1e-10.
    """
    z_list = list(z_list)
    if any(np.diff(z_list) <= 0):
        raise DomainError("z_list must be increasing")
    Q = integrate_family(f, a, t, spec)
    expQ = matrix_exp(Q)
    errs = []
    for z in z_list:
        Qz = integrate_family(yosida_family(f, z), a, t, spec)
        gap = np.linalg.norm(matrix_exp(Qz) - expQ, 2)
        if f.dissipative and gap > np.linalg.norm(Qz - Q, 2) + 1e-10:
            raise ConsistencyError(
                f"contraction bound violated at z={z}: {gap:.3e}")
        errs.append(gap)
    if max(errs) <= 1e-13:
        return float("-inf")
    return loglog_slope(z_list, errs)
