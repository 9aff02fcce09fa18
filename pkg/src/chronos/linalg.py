"""Dense complex matrix primitives.

Norms, the matrix exponential, resolvents, dissipativity certification and
Yosida approximants.  Everything here is a pure function of immutable numpy
arrays; all other modules build on these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, RangeError, SingularityError

DEFAULT_DISSIPATIVITY_TOL = 1e-10

# Diagonal Pade coefficients and backward-error thresholds (Higham 2005).
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate and return a square complex matrix with finite entries."""
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not (np.all(np.isfinite(A.real)) and np.all(np.isfinite(A.imag))):
        raise DimensionError(f"{name} contains non-finite entries")
    return A


def hermitian_part(H) -> np.ndarray:
    A = as_matrix(H, "H")
    return 0.5 * (A + A.conj().T)


def operator_norm(M, rtol: float = 1e-10, max_iter: int = 10000) -> float:
    """Spectral norm (largest singular value) of a square matrix.

    Power iteration on M^H M with a deterministic start vector; falls back to
    a full Hermitian eigendecomposition if the iteration stagnates.
    """
    A = as_matrix(M)
    d = A.shape[0]
    B = A.conj().T @ A
    scale = np.max(np.abs(B))
    if scale == 0.0:
        return 0.0
    # Ramp start breaks symmetry deterministically (no RNG involved).
    v = 1.0 + 0.25 * np.arange(d) / max(d - 1, 1)
    v = v.astype(complex)
    v /= np.linalg.norm(v)
    prev = 0.0
    stagnant = 0
    for _ in range(max_iter):
        w = B @ v
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        if lam > 0 and abs(lam - prev) <= 0.1 * rtol * lam:
            stagnant += 1
            if stagnant >= 3:
                return float(np.sqrt(lam))
        else:
            stagnant = 0
        prev = lam
    # Stagnation or slow convergence (clustered singular values): exact path.
    ev = np.linalg.eigvalsh(B)
    return float(np.sqrt(max(ev[-1], 0.0)))


@dataclass(frozen=True)
class DissipativityReport:
    """Largest eigenvalue of the Hermitian part, and the resulting verdict."""

    margin: float
    is_dissipative: bool
    tol: float


def dissipativity(H, tol: float = DEFAULT_DISSIPATIVITY_TOL) -> DissipativityReport:
    """Certify Re<Hx,x> <= tol for all unit x via the Hermitian part."""
    S = hermitian_part(H)
    margin = float(np.linalg.eigvalsh(S)[-1])
    return DissipativityReport(margin=margin, is_dissipative=margin <= tol, tol=tol)


def resolvent(H, z: float) -> np.ndarray:
    """(zI - H)^{-1} for real z > 0."""
    A = as_matrix(H, "H")
    if not z > 0:
        raise DomainError(f"resolvent requires z > 0, got z={z}")
    d = A.shape[0]
    M = z * np.eye(d) - A
    I = np.eye(d)
    try:
        R = np.linalg.solve(M, I)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"zI - H is singular at z={z}") from exc
    # One step of iterative refinement keeps the residual near machine level.
    R = R + np.linalg.solve(M, I - M @ R)
    residual = np.linalg.norm(M @ R - I, 2)
    if not residual <= 1e-10 * max(1.0, np.linalg.norm(R, 2)):
        raise SingularityError(
            f"zI - H is numerically singular at z={z} (residual {residual:.3e})")
    return R


def yosida(H, z: float) -> np.ndarray:
    """Bounded approximant z H (zI - H)^{-1} = z^2 R(z,H) - z I."""
    A = as_matrix(H, "H")
    return z * (A @ resolvent(A, z))


def matrix_exp(M) -> np.ndarray:
    """Matrix exponential of a single square matrix."""
    A = as_matrix(M)
    return expm_stack(A[np.newaxis])[0]


def expm_stack(A: np.ndarray) -> np.ndarray:
    """exp(A) over a stack of square matrices, shape (..., d, d).

    Scaling-and-squaring with a diagonal Pade approximant; the degree is
    chosen from backward-error thresholds, the squaring count from the
    largest 1-norm in the stack.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expm_stack needs (..., d, d), got {A.shape}")
    d = A.shape[-1]
    eye = np.broadcast_to(np.eye(d, dtype=complex), A.shape)
    norm1 = float(np.max(np.sum(np.abs(A), axis=-2))) if A.size else 0.0
    if norm1 == 0.0:
        return eye.copy()

    s = 0
    degree = 13
    for m in (3, 5, 7, 9):
        if norm1 <= _PADE_THETA[m]:
            degree = m
            break
    if degree == 13 and norm1 > _PADE_THETA[13]:
        s = int(np.ceil(np.log2(norm1 / _PADE_THETA[13])))
        A = A * (0.5 ** s)

    b = _PADE_COEFFS[degree]
    A2 = A @ A
    if degree == 13:
        A4 = A2 @ A2
        A6 = A2 @ A4
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    else:
        powers = [eye, A2]
        for _ in range((degree - 1) // 2 - 1):
            powers.append(powers[-1] @ A2)
        U = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
        U = A @ U
        V = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    if not (np.all(np.isfinite(E.real)) and np.all(np.isfinite(E.imag))):
        raise RangeError("matrix exponential overflowed")
    return E


def random_dissipative(rng: np.random.Generator, dim: int,
                       margin: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """Random matrix whose Hermitian part is <= -margin (dissipative).

    Built as a skew-Hermitian part plus a negative-semidefinite Hermitian
    part, each with entries of order `scale`.
    """
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    skew = 0.5 * (X - X.conj().T)
    Y = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    neg = -(Y @ Y.conj().T) / dim
    return scale * (skew + neg) - margin * np.eye(dim)
