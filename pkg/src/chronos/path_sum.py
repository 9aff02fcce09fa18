"""Poisson sum over paths.

Midpoint partitions from bubble centers, per-cell concentrated generators,
the Poisson-weighted experimental evolution operator, its Stieltjes form,
and Monte Carlo bubble sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError, ResourceError
from .families import GeneratorFamily, integrate_family
from .film import midpoint_edges
from .linalg import expm_stack, matrix_exp, operator_norm
from .propagators import PropagatorResult, ordered_product
from .quadrature import QuadratureSpec, _GAUSS5_NODES, _GAUSS5_WEIGHTS

MAX_POISSON_TERMS = 10 ** 6


@dataclass(frozen=True)
class PathSumConfig:
    """Bubble rate, horizon, truncation and Monte Carlo controls."""

    lam: float
    t: float
    tail_tol: float = 1e-10
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if not self.t > 0:
            raise ConfigError(f"horizon must be > 0, got {self.t}")
        if not 0 < self.tail_tol < 1:
            raise ConfigError(f"tail_tol must be in (0, 1), got {self.tail_tol}")


@dataclass(frozen=True)
class PartitionScheme:
    """Bubble centers with their midpoint cells partitioning [0, t]."""

    centers: np.ndarray
    edges: np.ndarray

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def make_partition(t: float, n: int) -> PartitionScheme:
    """Equally spaced centers j t / n with midpoint cell edges."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    if not t > 0:
        raise DomainError(f"need t > 0, got {t}")
    centers = t * np.arange(1, n + 1) / n
    return PartitionScheme(centers=centers, edges=midpoint_edges(0.0, t, centers))


def partition_from_centers(t: float, centers: Sequence[float]) -> PartitionScheme:
    centers = np.asarray(centers, dtype=float)
    return PartitionScheme(centers=centers, edges=midpoint_edges(0.0, t, centers))


def cell_generator(f: GeneratorFamily, p: PartitionScheme, j: int,
                   spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """A_j = integral of H over cell j, concentrated at its bubble time."""
    if not 1 <= j <= p.n:
        raise DomainError(f"cell index {j} outside 1..{p.n}")
    return integrate_family(f, p.edges[j - 1], p.edges[j], spec)


def _cell_generators(f: GeneratorFamily, edges: np.ndarray,
                     min_nodes: int = 80) -> np.ndarray:
    """All per-cell integrals at once, composite Gauss-5 per cell."""
    n = len(edges) - 1
    panels = max(1, -(-min_nodes // (5 * n)))
    sub = np.linspace(0.0, 1.0, panels + 1)
    lo = edges[:-1, None] + np.diff(edges)[:, None] * sub[None, :-1]
    width = np.diff(edges)[:, None] * (1.0 / panels)
    mid = lo + 0.5 * width
    nodes = (mid[..., None] + 0.5 * width[..., None] * _GAUSS5_NODES).reshape(-1)
    H = f.evaluate_batch(nodes).reshape(n, panels, 5, f.dim, f.dim)
    w = 0.5 * width[..., None] * _GAUSS5_WEIGHTS
    return np.einsum("cpq,cpqij->cij", w, H)


def U_n(f: GeneratorFamily, p: PartitionScheme) -> PropagatorResult:
    """Ordered product of per-cell exponentials exp(A_n) ... exp(A_1)."""
    A = _cell_generators(f, p.edges)
    U = ordered_product(expm_stack(A))
    return PropagatorResult(U=U, w=1.0, step_count=p.n,
                            contraction_margin=operator_norm(U) - 1.0)


def _U_for_count(f: GeneratorFamily, t: float, n: int) -> np.ndarray:
    # n = 0 carries no time resolution: the whole window is one cell, so
    # U_0 = exp(Q[t,0]) = U_1 and commuting families collapse exactly.
    if n == 0:
        return matrix_exp(integrate_family(f, 0.0, t))
    return U_n(f, make_partition(t, n)).U


def poisson_weight(t: float, s: float, lam: float) -> float:
    """P[t; s, lambda]: Poisson(lambda t) mass on counts <= floor(lambda s).

    Zero for s <= 0; a right-continuous nondecreasing step function of s
    with jumps exactly at s = k / lambda.
    """
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    if s <= 0:
        return 0.0
    return float(stats.poisson.cdf(math.floor(lam * s), lam * t))


def poisson_truncation(lam_t: float, tail_tol: float) -> int:
    """Smallest N with Poisson(lam_t) tail mass beyond N below tail_tol."""
    n = int(stats.poisson.ppf(1.0 - tail_tol, lam_t))
    while stats.poisson.sf(n, lam_t) >= tail_tol:
        n += 1
        if n > MAX_POISSON_TERMS:
            raise ResourceError(f"Poisson truncation exceeds {MAX_POISSON_TERMS}")
    while n > 0 and stats.poisson.sf(n - 1, lam_t) < tail_tol:
        n -= 1
    return n


def U_lambda(f: GeneratorFamily, cfg: PathSumConfig) -> PropagatorResult:
    """Poisson-weighted sum of the discretized-path propagators.

    The returned U is the mass-normalized sum (divided by the captured
    probability); the raw truncated sum and bookkeeping are in extras.
    Terms whose weight cannot move the sum beyond tail_tol are skipped.
    """
    lam_t = cfg.lam * cfg.t
    n_max = poisson_truncation(lam_t, cfg.tail_tol)
    counts = np.arange(n_max + 1)
    weights = stats.poisson.pmf(counts, lam_t)
    cutoff = cfg.tail_tol / (n_max + 1)
    raw = np.zeros((f.dim, f.dim), dtype=complex)
    captured = 0.0
    used = 0
    for n, w in zip(counts, weights):
        if w < cutoff:
            continue
        raw += w * _U_for_count(f, cfg.t, int(n))
        captured += w
        used += 1
    normalized = raw / captured
    return PropagatorResult(
        U=normalized, w=1.0, step_count=used,
        error_estimate=float(stats.poisson.sf(n_max, lam_t)),
        contraction_margin=operator_norm(normalized) - 1.0,
        extras={"raw": raw, "captured_mass": captured, "n_max": int(n_max)})


def stieltjes_form(f: GeneratorFamily, cfg: PathSumConfig,
                   oracle_U: Optional[np.ndarray] = None) -> PropagatorResult:
    """Stieltjes sum over the jump set s = k / lambda.

    Each jump carries mass e^{-lam t}(lam t)^k / k! and the propagator
    U_k[k / lambda, 0]; diagnostics report the distance to the
    Poisson-weighted form (and to an oracle, when given).
    """
    lam_t = cfg.lam * cfg.t
    n_max = poisson_truncation(lam_t, cfg.tail_tol)
    counts = np.arange(n_max + 1)
    weights = stats.poisson.pmf(counts, lam_t)
    cutoff = cfg.tail_tol / (n_max + 1)
    raw = np.zeros((f.dim, f.dim), dtype=complex)
    captured = 0.0
    for k, w in zip(counts, weights):
        if w < cutoff:
            continue
        if k == 0:
            Uk = np.eye(f.dim, dtype=complex)
        else:
            Uk = U_n(f, make_partition(k / cfg.lam, int(k))).U
        raw += w * Uk
        captured += w
    normalized = raw / captured
    lam_form = U_lambda(f, cfg)
    extras = {"raw": raw, "captured_mass": captured, "n_max": int(n_max),
              "distance_to_U_lambda": float(np.linalg.norm(
                  normalized - lam_form.U, 2))}
    if oracle_U is not None:
        extras["distance_to_oracle"] = float(np.linalg.norm(
            normalized - oracle_U, 2))
    return PropagatorResult(
        U=normalized, w=1.0, step_count=int(n_max),
        contraction_margin=operator_norm(normalized) - 1.0, extras=extras)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based splittable per-trial stream (Philox keyed by trial)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(trial,))))


def sample_bubbles(cfg: PathSumConfig, rng: np.random.Generator) -> np.ndarray:
    """Arrival times on [0, t]: cumulative i.i.d. exponential(lambda) gaps."""
    arrivals = []
    s = 0.0
    mean_gap = 1.0 / cfg.lam
    while True:
        s += rng.exponential(mean_gap)
        if s > cfg.t:
            return np.array(arrivals)
        arrivals.append(s)


def monte_carlo_U(f: GeneratorFamily, cfg: PathSumConfig) -> PropagatorResult:
    """Sample mean of U over random bubble partitions.

    Entrywise standard errors of the mean are reported in extras; trials
    use independent counter-based streams so results are reproducible and
    order-independent.
    """
    if cfg.trials < 100:
        raise ConfigError(f"need trials >= 100, got {cfg.trials}")
    d = f.dim
    samples = np.empty((cfg.trials, d, d), dtype=complex)
    counts = np.empty(cfg.trials, dtype=int)
    for trial in range(cfg.trials):
        rng = trial_rng(cfg.seed, trial)
        arrivals = sample_bubbles(cfg, rng)
        counts[trial] = len(arrivals)
        if len(arrivals) == 0:
            samples[trial] = _U_for_count(f, cfg.t, 0)
        else:
            samples[trial] = U_n(f, partition_from_centers(cfg.t, arrivals)).U
    mean = samples.mean(axis=0)
    se = np.sqrt(
        (np.var(samples.real, axis=0) + np.var(samples.imag, axis=0))
        / max(cfg.trials - 1, 1))
    return PropagatorResult(
        U=mean, w=1.0, step_count=cfg.trials,
        error_estimate=float(np.max(se)),
        contraction_margin=operator_norm(mean) - 1.0,
        extras={"stderr": se, "counts": counts, "seed": cfg.seed})


def conditional_single_bubble_check(f: GeneratorFamily, cfg: PathSumConfig):
    """Compare the count==1 conditional sample mean to its 1-D quadrature.

    With midpoint cells a single bubble always yields the one-cell
    propagator, so the quadrature average over the bubble position equals
    exp(Q[t,0]); returns (mc_mean, quadrature_mean, stderr, n_used).
    """
    mc = monte_carlo_U(f, cfg)
    mask = mc.extras["counts"] == 1
    if mask.sum() == 0:
        raise ConfigError("no trials with exactly one bubble; raise trials")
    # Recompute the conditional subset from the same streams.
    sel = []
    for trial in np.nonzero(mask)[0]:
        rng = trial_rng(cfg.seed, int(trial))
        arrivals = sample_bubbles(cfg, rng)
        sel.append(U_n(f, partition_from_centers(cfg.t, arrivals)).U)
    sel = np.array(sel)
    cond_mean = sel.mean(axis=0)
    stderr = np.sqrt(
        (np.var(sel.real, axis=0) + np.var(sel.imag, axis=0))
        / max(len(sel) - 1, 1))
    nodes, wts = np.polynomial.legendre.leggauss(16)
    taus = 0.5 * cfg.t * (nodes + 1.0)
    quad = np.zeros((f.dim, f.dim), dtype=complex)
    for tau, w in zip(taus, wts):
        quad += (0.5 * w) * U_n(f, partition_from_centers(cfg.t, [tau])).U
    return cond_mean, quad, stderr, int(mask.sum())
