"""Dense complex-matrix and quantum-information primitives.

Operators are plain ``numpy`` arrays of dtype ``complex128``; kets are 1-D
arrays. Tensor products always put the left factor's indices first, so an
operator on ``C ⊗ V`` is indexed ``[(c, v), (c', v')]`` with ``c`` major.

Tolerances used across the package:

``TAU_CHK``
    Operator-norm tolerance for the structural predicates (Hermitian,
    unitary, PSD, ...).
``TAU_FIX``
    Inputs whose marginal constraints are off by less than this are
    repaired (Hermitised, clipped, renormalised) instead of rejected.
``eig_cutoff(w)``
    Spectral cutoff ``1e-10 * max|w|`` used for ranks, pseudo-inverses and
    positive eigenspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

TAU_CHK = 1e-8
TAU_FIX = 1e-6
EIG_REL_CUTOFF = 1e-10

FactorNames = Union[str, Iterable[str]]


def eig_cutoff(eigenvalues: np.ndarray) -> float:
    """Spectral cutoff relative to the largest eigenvalue magnitude."""
    if eigenvalues.size == 0:
        return 0.0
    return EIG_REL_CUTOFF * float(np.max(np.abs(eigenvalues)))


def dag(M: np.ndarray) -> np.ndarray:
    return M.conj().T


def ket_to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# Register bookkeeping


@dataclass(frozen=True)
class SpaceShape:
    """Ordered named tensor factors, e.g. ``SpaceShape.of(C=2, V=2)``."""

    factors: tuple

    def __post_init__(self):
        factors = tuple((str(name), int(dim)) for name, dim in self.factors)
        names = [name for name, _ in factors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor names in {names}")
        for name, dim in factors:
            if dim < 1:
                raise ValueError(f"factor {name!r} has dimension {dim} < 1")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, **dims: int) -> "SpaceShape":
        return cls(tuple(dims.items()))

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(dim for _, dim in self.factors)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims, dtype=int))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown factor {name!r}; shape has {self.names}") from None

    def dim(self, name: str) -> int:
        return self.dims[self.index(name)]

    def select(self, names: FactorNames) -> list:
        """Sorted positional indices of the given factor name(s)."""
        if isinstance(names, str):
            names = [names]
        return sorted({self.index(n) for n in names})

    def without(self, names: FactorNames) -> "SpaceShape":
        drop = set(self.select(names))
        return SpaceShape(tuple(f for i, f in enumerate(self.factors) if i not in drop))


# ---------------------------------------------------------------------------
# Predicates


def _opnorm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _opnorm_within(M: np.ndarray, tol: float) -> bool:
    """``||M||_op <= tol``; the Frobenius norm bounds it from above and is cheap."""
    if M.size == 0 or np.linalg.norm(M) <= tol:
        return True
    return _opnorm(M) <= tol


def is_square(M: np.ndarray) -> bool:
    return M.ndim == 2 and M.shape[0] == M.shape[1]


def is_hermitian(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    return is_square(M) and _opnorm_within(M - dag(M), tol)


def is_unitary(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    return is_square(M) and _opnorm_within(dag(M) @ M - np.eye(M.shape[0]), tol)


def is_psd(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    if not is_hermitian(M, tol):
        return False
    return bool(np.linalg.eigvalsh(_herm(M)).min(initial=0.0) >= -tol)


def is_projector(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    return is_hermitian(M, tol) and _opnorm_within(M @ M - M, tol)


def is_density(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    return is_psd(M, tol) and abs(np.trace(M) - 1.0) <= tol


def is_measurement(M: np.ndarray, tol: float = TAU_CHK) -> bool:
    if not is_hermitian(M, tol):
        return False
    w = np.linalg.eigvalsh(_herm(M))
    return bool(w.min(initial=0.0) >= -tol and w.max(initial=0.0) <= 1.0 + tol)


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + dag(M))


def clean_density(rho: np.ndarray) -> np.ndarray:
    """Hermitise, clip negative eigenvalues and renormalise the trace."""
    w, U = np.linalg.eigh(_herm(rho))
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise ValueError("operator has no positive part; cannot renormalise to a density")
    return (U * (w / total)) @ dag(U)


def require_density(rho: np.ndarray, what: str = "rho") -> np.ndarray:
    """Return a cleaned copy of ``rho``; raise if it is not a density within TAU_FIX."""
    rho = np.asarray(rho, dtype=complex)
    if not is_density(rho, TAU_FIX):
        raise ValueError(f"{what} is not a density operator (tolerance {TAU_FIX:g})")
    return clean_density(rho)


# ---------------------------------------------------------------------------
# Linear algebra


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Tensor product with A's indices major."""
    return np.kron(np.asarray(A, dtype=complex), np.asarray(B, dtype=complex))


def partial_trace(M: np.ndarray, shape: SpaceShape, traced: FactorNames) -> np.ndarray:
    """Trace out the named factor(s) of ``M``; the rest keep their order."""
    M = np.asarray(M, dtype=complex)
    n = shape.total
    if M.shape != (n, n):
        raise ValueError(f"matrix of shape {M.shape} does not match space dimension {n}")
    drop = shape.select(traced)
    keep = [i for i in range(len(shape.dims)) if i not in drop]
    k = len(shape.dims)
    T = M.reshape(shape.dims + shape.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:k])
    col = list(letters[k : 2 * k])
    for i in drop:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    R = np.einsum("".join(row) + "".join(col) + "->" + out, T)
    d = int(np.prod([shape.dims[i] for i in keep], dtype=int))
    return R.reshape(d, d)


def permute_factors(M: np.ndarray, shape: SpaceShape, order: Sequence[str]) -> np.ndarray:
    """Reorder the tensor factors of an operator (or a ket) to ``order``."""
    perm = [shape.index(name) for name in order]
    if sorted(perm) != list(range(len(shape.dims))):
        raise ValueError(f"order {order} is not a permutation of {shape.names}")
    dims = shape.dims
    if M.ndim == 1:
        return M.reshape(dims).transpose(perm).reshape(-1)
    k = len(dims)
    T = M.reshape(dims + dims).transpose(perm + [p + k for p in perm])
    return T.reshape(M.shape)


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(_herm(M))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ dag(U)


def hermitian_exp(H: np.ndarray) -> np.ndarray:
    """Matrix exponential of a Hermitian matrix via its spectral decomposition."""
    H = np.asarray(H, dtype=complex)
    if not is_square(H) or _opnorm(H - dag(H)) > TAU_CHK * max(1.0, _opnorm(H)):
        raise ValueError("hermitian_exp requires a Hermitian matrix")
    w, U = np.linalg.eigh(_herm(H))
    return (U * np.exp(w)) @ dag(U)


def trace_norm(M: np.ndarray) -> float:
    """Sum of singular values."""
    M = np.asarray(M, dtype=complex)
    if not is_square(M):
        raise ValueError("trace_norm expects a square matrix")
    return float(np.linalg.svd(M, compute_uv=False).sum())


def trace_distance(rho: np.ndarray, xi: np.ndarray) -> float:
    """Half the trace norm of ``rho - xi`` for Hermitian arguments."""
    return 0.5 * float(np.abs(np.linalg.eigvalsh(_herm(rho - xi))).sum())


def fidelity(rho: np.ndarray, xi: np.ndarray) -> float:
    """Root fidelity ``tr sqrt(sqrt(rho) xi sqrt(rho))``.

    Evaluated as the trace norm of ``sqrt(rho) sqrt(xi)``, which is the same
    quantity and avoids a nested square root.
    """
    rho = require_density(rho, "rho")
    xi = require_density(xi, "xi")
    if rho.shape != xi.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {xi.shape}")
    F = np.linalg.svd(psd_sqrt(rho) @ psd_sqrt(xi), compute_uv=False).sum()
    return float(min(max(F, 0.0), 1.0))


def bures_angle(rho: np.ndarray, xi: np.ndarray) -> float:
    return float(np.arccos(np.clip(fidelity(rho, xi), -1.0, 1.0)))


def positive_eigenprojector(H: np.ndarray) -> np.ndarray:
    """Projector onto the span of eigenvectors with eigenvalue above the cutoff."""
    H = np.asarray(H, dtype=complex)
    if not is_square(H) or _opnorm(H - dag(H)) > TAU_CHK * max(1.0, _opnorm(H)):
        raise ValueError("positive_eigenprojector requires a Hermitian matrix")
    return _posproj(_herm(H))


def _posproj(H: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(H)
    Up = U[:, w > eig_cutoff(w)]
    return Up @ dag(Up)


# ---------------------------------------------------------------------------
# Purifications


def _canonical_eig(rho: np.ndarray):
    """Eigenpairs in descending order with the deterministic phase convention."""
    w, U = np.linalg.eigh(_herm(rho))
    w = np.clip(w, 0.0, None)
    cols = []
    for j in range(U.shape[1]):
        v = U[:, j]
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if nz.size:
            v = v * (np.abs(v[nz[0]]) / v[nz[0]])
        cols.append(v)

    def key(j):
        v = np.round(cols[j], 10)
        return (-round(float(w[j]), 12), tuple(np.column_stack([v.real, v.imag]).ravel()))

    order = sorted(range(len(cols)), key=key)
    return w[order], np.column_stack([cols[j] for j in order]) if cols else U


def purify(rho: np.ndarray, purifier_dim: int) -> np.ndarray:
    """Canonical purification ``sum_k sqrt(l_k) |v_k>|e_k>`` on system ⊗ purifier."""
    rho = require_density(rho)
    d = rho.shape[0]
    w, U = _canonical_eig(rho)
    rank = int(np.sum(w > eig_cutoff(w)))
    if rank > purifier_dim:
        raise ValueError(f"purifier dimension {purifier_dim} is smaller than rank {rank}")
    k = min(purifier_dim, d)
    amp = np.zeros((d, purifier_dim), dtype=complex)
    amp[:, :k] = U[:, :k] * np.sqrt(w[:k])
    alpha = amp.reshape(-1)
    return alpha / np.linalg.norm(alpha)


def _split(psi: np.ndarray, shape: SpaceShape, moved: FactorNames):
    idx = shape.select(moved)
    names = [shape.names[i] for i in idx]
    rest = [n for n in shape.names if n not in names]
    d_m = int(np.prod([shape.dims[i] for i in idx], dtype=int))
    A = permute_factors(np.asarray(psi, dtype=complex), shape, names + rest)
    return A.reshape(d_m, -1)


def purification_transfer(
    alpha: np.ndarray, beta: np.ndarray, shape: SpaceShape, moved: FactorNames
) -> np.ndarray:
    """Unitary U on the ``moved`` factors with ``(U ⊗ I_rest)|alpha> = |beta>``.

    Both kets must have the same marginal on the remaining factors. U is the
    polar factor of ``B A^*`` where A, B are the kets reshaped across the
    (moved | rest) cut; it coincides with matching the two Schmidt
    decompositions and is the least-squares optimal choice when the
    marginals agree only approximately.
    """
    A = _split(alpha, shape, moved)
    B = _split(beta, shape, moved)
    # marginals on the rest, as A^T conj(A)
    gap = 0.5 * trace_norm((A.T @ A.conj()) - (B.T @ B.conj()))
    if gap > TAU_FIX:
        raise ValueError(f"marginals on the unmoved factors differ by {gap:.3g} > {TAU_FIX:g}")
    W, _, Zh = np.linalg.svd(B @ dag(A))
    return W @ Zh


def fidelity_completion(
    sigma: np.ndarray,
    sigma_p: np.ndarray,
    rho: np.ndarray,
    shape: SpaceShape,
    hidden: FactorNames,
) -> np.ndarray:
    """Extend a marginal change ``sigma -> sigma_p`` to the full state ``rho``.

    Returns ``rho_p`` with ``tr_hidden(rho_p) = sigma_p`` and
    ``F(rho, rho_p) = F(sigma, sigma_p)``.

    A purification ``X = sqrt(sigma) K`` of ``rho`` (viewed as a purification
    of ``sigma`` with ``K K^* = I``) is rotated to ``Y = sqrt(sigma_p) W^* K``
    where W is the polar factor of ``sqrt(sigma) sqrt(sigma_p)``; the overlap
    ``tr(X^* Y)`` then equals ``F(sigma, sigma_p)`` and tracing out the
    purifier gives ``rho_p``.
    """
    rho = np.asarray(rho, dtype=complex)
    if not is_density(rho, TAU_FIX):
        raise ValueError("rho is not a density operator")
    rho = clean_density(rho)
    hid = shape.select(hidden)
    hid_names = [shape.names[i] for i in hid]
    vis_names = [n for n in shape.names if n not in hid_names]
    d_h = int(np.prod([shape.dims[i] for i in hid], dtype=int))
    d_v = shape.total // d_h

    marg = partial_trace(rho, shape, hid_names)
    if np.asarray(sigma).shape != (d_v, d_v) or np.asarray(sigma_p).shape != (d_v, d_v):
        raise ValueError(f"sigma and sigma_p must be {d_v}x{d_v}")
    mismatch = trace_distance(marg, np.asarray(sigma, dtype=complex))
    if mismatch > TAU_FIX:
        raise ValueError(f"tr_hidden(rho) differs from sigma by {mismatch:.3g} > {TAU_FIX:g}")
    sigma_p = require_density(sigma_p, "sigma_p")

    order = hid_names + vis_names
    rho_hv = permute_factors(rho, shape, order)
    d = shape.total
    phi = purify(rho_hv, d).reshape(d_h, d_v, d)
    X = phi.transpose(1, 0, 2).reshape(d_v, d_h * d)

    Ux, s, Vh = np.linalg.svd(X, full_matrices=True)
    K = Ux @ Vh[:d_v]
    sqrt_sigma = (Ux * s) @ dag(Ux)
    sqrt_sp = psd_sqrt(sigma_p)
    Ua, _, Vah = np.linalg.svd(sqrt_sigma @ sqrt_sp)
    W = Ua @ Vah
    Y = (sqrt_sp @ dag(W) @ K).reshape(d_v, d_h, d)

    out = np.einsum("vhp,wkp->hvkw", Y, Y.conj()).reshape(d, d)
    out = clean_density(out)
    hv_shape = SpaceShape(tuple((n, shape.dim(n)) for n in order))
    return permute_factors(out, hv_shape, shape.names)


# ---------------------------------------------------------------------------
# Random instances


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed unitary via QR of a Ginibre matrix with phases fixed."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_ket(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    G = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = G @ dag(G)
    return rho / np.trace(rho).real


def random_measurement(rng: np.random.Generator, d: int) -> np.ndarray:
    U = haar_unitary(rng, d)
    return (U * rng.uniform(0.0, 1.0, d)) @ dag(U)


def random_projector(rng: np.random.Generator, d: int, rank: int) -> np.ndarray:
    U = haar_unitary(rng, d)[:, :rank]
    return U @ dag(U)
