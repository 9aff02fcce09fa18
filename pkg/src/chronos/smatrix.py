"""Toy-model scattering in the interaction picture.

Interaction-picture generator families, the Poisson-weighted experimental
scattering operator, the bubble-rate energy-shift identity, fixed
minimal-time-step regularization and the exact-order expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .families import GeneratorFamily, classify_evaluator, integrate_family
from .film import midpoint_edges
from .linalg import as_matrix, expm_stack, matrix_exp, operator_norm
from .path_sum import PartitionScheme, U_n, poisson_truncation, _cell_generators
from .propagators import (DysonExpansion, PropagatorResult, dyson_terms,
                          ordered_product, product_integral, remainder_42,
                          _calibrate_remainder)


@dataclass(frozen=True)
class SMatrixConfig:
    """Free Hamiltonian, interaction, window and switching envelope."""

    H0: np.ndarray
    V: np.ndarray
    T: float
    hbar: float = 1.0
    lam: float = 1.0
    envelope: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        H0 = as_matrix(self.H0, "H0")
        V = as_matrix(self.V, "V")
        if H0.shape != V.shape:
            raise ConfigError(f"H0 {H0.shape} and V {V.shape} differ in shape")
        if np.linalg.norm(H0 - H0.conj().T, 2) > 1e-12:
            raise ConfigError("H0 must be Hermitian to 1e-12")
        if not self.T > 0:
            raise ConfigError(f"half-window T must be > 0, got {self.T}")
        if not self.hbar > 0:
            raise ConfigError(f"hbar must be > 0, got {self.hbar}")
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "V", V)

    def envelope_values(self, ts: np.ndarray) -> np.ndarray:
        if self.envelope is None:
            # Smooth integrable switching; width T/2 damps the window edges.
            return np.exp(-((ts / (0.5 * self.T)) ** 2))
        return np.asarray(self.envelope(ts), dtype=float)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]


def interaction_generator(cfg: SMatrixConfig) -> GeneratorFamily:
    """G(t) = (-i/hbar) envelope(t) e^{i H0 t/hbar} V e^{-i H0 t/hbar} on [-T, T]."""
    evals, W = np.linalg.eigh(cfg.H0)
    Vr = W.conj().T @ cfg.V @ W

    def batch(ts):
        ts = np.atleast_1d(ts)
        phase = np.exp(1j * np.outer(ts / cfg.hbar, evals))
        inner = phase[:, :, None] * Vr[None] * phase.conj()[:, None, :]
        HI = np.einsum("ab,mbc,dc->mad", W, inner, W.conj())
        return (-1j / cfg.hbar) * cfg.envelope_values(ts)[:, None, None] * HI

    a, b = -cfg.T, cfg.T
    return GeneratorFamily(
        a=a, b=b, dim=cfg.dim, evaluate_batch=batch,
        commutativity_class=classify_evaluator(batch, a, b),
        dissipative=bool(np.linalg.norm(cfg.V - cfg.V.conj().T, 2) <= 1e-12),
        name="interaction")


def _window_partition(cfg: SMatrixConfig, n: int) -> PartitionScheme:
    centers = -cfg.T + 2.0 * cfg.T * np.arange(1, n + 1) / n
    return PartitionScheme(centers=centers,
                           edges=midpoint_edges(-cfg.T, cfg.T, centers))


def oracle_S(cfg: SMatrixConfig, tol: float = 1e-10) -> PropagatorResult:
    """Ground-truth scattering operator from the product-integral oracle."""
    return product_integral(interaction_generator(cfg), -cfg.T, cfg.T, tol)


def S_n_experimental(cfg: SMatrixConfig, n: int) -> np.ndarray:
    """n-bubble scattering operator; n = 0 is the identity (blank film)."""
    if n < 0:
        raise DomainError(f"need n >= 0, got {n}")
    if n == 0:
        return np.eye(cfg.dim, dtype=complex)
    return U_n(interaction_generator(cfg), _window_partition(cfg, n)).U


def S_lambda(cfg: SMatrixConfig, tail_tol: float = 1e-10) -> PropagatorResult:
    """Poisson(2 lambda T)-weighted sum of the S_n operators."""
    if not 0 < tail_tol < 1:
        raise ConfigError(f"tail_tol must be in (0, 1), got {tail_tol}")
    mean = 2.0 * cfg.lam * cfg.T
    n_max = poisson_truncation(mean, tail_tol)
    counts = np.arange(n_max + 1)
    weights = stats.poisson.pmf(counts, mean)
    cutoff = tail_tol / (n_max + 1)
    fam = interaction_generator(cfg)
    raw = np.zeros((cfg.dim, cfg.dim), dtype=complex)
    captured = 0.0
    for n, w in zip(counts, weights):
        if w < cutoff:
            continue
        if n == 0:
            # Zero bubbles carry no time resolution: the whole window is a
            # single unresolved exposure, so the commuting collapse stays
            # exact at every rate.
            Sn = matrix_exp(integrate_family(fam, -cfg.T, cfg.T))
        else:
            Sn = U_n(fam, _window_partition(cfg, int(n))).U
        raw += w * Sn
        captured += w
    normalized = raw / captured
    return PropagatorResult(
        U=normalized, w=1.0, step_count=int(n_max),
        error_estimate=float(stats.poisson.sf(n_max, mean)),
        contraction_margin=operator_norm(normalized) - 1.0,
        extras={"raw": raw, "captured_mass": captured, "n_max": int(n_max)})


def energy_shift_identity(cfg: SMatrixConfig, n: int) -> float:
    """Residual of the bubble-rate shift rewrite of the n-th Poisson term.

    Adding -i lambda hbar I to the concentrated generator of every cell
    multiplies each cell exponential by e^{-lambda dt}, so the product
    carries the full Poisson factor e^{-2 lambda T}; both forms of the
    term must agree to machine precision.
    """
    if n < 0:
        raise DomainError(f"need n >= 0, got {n}")
    two_lam_T = 2.0 * cfg.lam * cfg.T
    eye = np.eye(cfg.dim, dtype=complex)
    if n == 0:
        shifted = matrix_exp(-cfg.lam * 2.0 * cfg.T * eye)
        return float(np.linalg.norm(np.exp(-two_lam_T) * eye - shifted, 2))
    fam = interaction_generator(cfg)
    p = _window_partition(cfg, n)
    A = _cell_generators(fam, p.edges)
    plain = ordered_product(expm_stack(A))
    shifted_cells = A - cfg.lam * p.widths[:, None, None] * eye[None]
    shifted = ordered_product(expm_stack(shifted_cells))
    return float(np.linalg.norm(np.exp(-two_lam_T) * plain - shifted, 2))


def fixed_dt_S(cfg: SMatrixConfig) -> np.ndarray:
    """Scattering operator with a fixed minimal time step 1/lambda.

    The window [-T, T] must hold an integer number of width-1/lambda
    cells; each cell's integrated generator is exponentiated and the
    exponentials are time-ordered.
    """
    m_float = 2.0 * cfg.T * cfg.lam
    m = int(round(m_float))
    if m < 1 or abs(m_float - m) > 1e-9:
        raise ConfigError(
            f"2*T*lambda = {m_float} must be a positive integer for fixed-step cells")
    fam = interaction_generator(cfg)
    edges = np.linspace(-cfg.T, cfg.T, m + 1)
    A = _cell_generators(fam, edges)
    return ordered_product(expm_stack(A))


def dyson_S_expansion(cfg: SMatrixConfig, n: int, grid: int = 1024,
                      xi_panels: int = 32) -> DysonExpansion:
    """Order-n expansion of S with the calibrated exact remainder.

    The interaction generator already carries (-i/hbar)^k into the k-th
    term; partial sum plus remainder reproduces the oracle S.
    """
    fam = interaction_generator(cfg)
    terms = dyson_terms(fam, -cfg.T, cfg.T, n, grid).terms
    R = remainder_42(fam, -cfg.T, cfg.T, n, 1.0, grid, xi_panels)
    return DysonExpansion(terms=terms, order=n, remainder=R,
                          calibration=dict(_calibrate_remainder(n)))
