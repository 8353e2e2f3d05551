"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects. The helpers here add the
validation and tolerance handling that the channel and perturbation code
relies on: Hermitian eigendecompositions, PSD square roots, trace norms,
tensor products and partial traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERM_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-9
RECON_TOL = 1e-9
JACOBI_MAX_SWEEPS = 100


class NotPSDError(ValueError):
    """Raised when an operand expected to be PSD has a clearly negative eigenvalue."""


class ConvergenceError(RuntimeError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dag(a)), initial=0.0) <= tol


def as_hermitian(a, tol: float = HERM_TOL) -> np.ndarray:
    """Validate ``a`` as Hermitian and return its exactly symmetrised form."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if np.max(np.abs(m - dag(m)), initial=0.0) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return 0.5 * (m + dag(m))


def herm_eig(a, tol: float = HERM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with real eigenvalues ``w`` sorted in descending order
    and orthonormal eigenvectors in the columns of ``v``. Directions inside a
    degenerate eigenspace are arbitrary; only spectral projectors are stable.
    """
    h = as_hermitian(a, tol)
    w, v = np.linalg.eigh(h)
    return w[::-1].copy(), v[:, ::-1].copy()


def jacobi_eig(a, tol: float = HERM_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic complex Jacobi eigensolver for Hermitian matrices.

    Same contract as :func:`herm_eig`. Deterministic and dependency free
    beyond numpy array arithmetic; slower than LAPACK, so ``herm_eig`` is the
    default path and this solver serves as an independent cross-check.
    """
    h = as_hermitian(a, tol).copy()
    n = h.shape[0]
    v = np.eye(n, dtype=complex)
    norm = np.linalg.norm(h)
    if n < 2 or norm == 0.0:
        return _sorted_desc(np.real(np.diag(h)), v)
    target = 1e-15 * norm
    for _ in range(max_sweeps):
        off = np.linalg.norm(h - np.diag(np.diag(h)))
        if off <= target:
            return _sorted_desc(np.real(np.diag(h)), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                mag = abs(h[p, q])
                if mag <= 1e-300:
                    continue
                j = _jacobi_rotation(h[p, p].real, h[q, q].real, h[p, q])
                h[:, [p, q]] = h[:, [p, q]] @ j
                h[[p, q], :] = dag(j) @ h[[p, q], :]
                h[p, q] = h[q, p] = 0.0
                v[:, [p, q]] = v[:, [p, q]] @ j
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def _jacobi_rotation(app: float, aqq: float, apq: complex) -> np.ndarray:
    # phase-strip the off-diagonal entry, then a real Givens rotation
    mag = abs(apq)
    phase = apq / mag
    theta = 0.5 * np.arctan2(2.0 * mag, aqq - app)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)


def _sorted_desc(w: np.ndarray, v: np.ndarray):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def clamp_psd_eigs(w: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.any(w < -tol * scale):
        raise NotPSDError(f"eigenvalue {w.min():.3e} below -{tol:g}")
    return np.clip(w, 0.0, None)


def psd_factor(a, tol: float = PSD_TOL, rel_cut: float = 1e-14) -> np.ndarray:
    """Return ``B`` with ``a = B B^dagger``, keeping only significant eigenvalues.

    Eigenvalues below ``rel_cut`` times the largest one are treated as zero,
    which removes eigensolver noise from exactly rank-deficient operands.
    """
    w, v = herm_eig(a)
    w = clamp_psd_eigs(w, tol)
    keep = w > rel_cut * max(w[0] if w.size else 0.0, 1e-300)
    return v[:, keep] * np.sqrt(w[keep])


def psd_sqrt(a, tol: float = PSD_TOL) -> np.ndarray:
    w, v = herm_eig(a)
    w = clamp_psd_eigs(w, tol)
    r = (v * np.sqrt(w)) @ dag(v)
    return 0.5 * (r + dag(r))


def trace_sqrt(a, tol: float = PSD_TOL) -> float:
    """``Tr sqrt(a)`` for a PSD matrix ``a``."""
    w, _ = herm_eig(a)
    return float(np.sum(np.sqrt(clamp_psd_eigs(w, tol))))


def nuclear_norm(a) -> float:
    """Sum of singular values.

    ``trace_sqrt(Y Y^dagger) == nuclear_norm(Y)``; working with the factor
    avoids the square-root blow-up of eigensolver noise near zero.
    """
    return float(np.sum(np.linalg.svd(np.asarray(a), compute_uv=False)))


def kron(*mats) -> np.ndarray:
    return reduce(np.kron, [np.asarray(m) for m in mats])


def partial_trace(x, dims: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    """Trace out the tensor factors listed in ``traced`` (0-based indices)."""
    x = np.asarray(x)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if x.shape != (total, total):
        raise ValueError(f"shape {x.shape} inconsistent with dims {dims}")
    traced = sorted(set(traced))
    if any(t < 0 or t >= len(dims) for t in traced):
        raise ValueError(f"traced indices {traced} out of range for {len(dims)} factors")
    t = x.reshape(dims + dims)
    # trace highest index first so earlier axis numbers stay valid
    for k in reversed(traced):
        t = np.trace(t, axis1=k, axis2=k + t.ndim // 2)
    kept = [d for i, d in enumerate(dims) if i not in traced]
    size = int(np.prod(kept)) if kept else 1
    return t.reshape(size, size)


def embed(op, site: int, dims: Sequence[int]) -> np.ndarray:
    """Place a single-factor operator on tensor factor ``site``."""
    mats = [np.eye(d, dtype=complex) for d in dims]
    op = np.asarray(op, dtype=complex)
    if op.shape != (dims[site], dims[site]):
        raise ValueError(f"operator shape {op.shape} does not fit factor {site} of dims {list(dims)}")
    mats[site] = op
    return kron(*mats)


def as_density(rho, tol: float = TRACE_TOL) -> np.ndarray:
    r = as_hermitian(rho)
    w = np.linalg.eigvalsh(r)
    if w.size and w[0] < -PSD_TOL * max(1.0, abs(w[-1])):
        raise NotPSDError(f"density has negative eigenvalue {w[0]:.3e}")
    if abs(np.trace(r).real - 1.0) > tol:
        raise ValueError(f"density trace {np.trace(r).real!r} is not 1")
    return r


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class CodeProjector:
    """A code subspace given by an orthonormal logical basis (columns of ``basis``)."""

    basis: np.ndarray
    projector: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.ndim != 2 or b.shape[1] == 0:
            raise ValueError("code needs at least one basis vector")
        gram = dag(b) @ b
        if np.max(np.abs(gram - np.eye(b.shape[1]))) > 1e-9:
            raise ValueError("code basis is not orthonormal")
        object.__setattr__(self, "basis", b)
        p = b @ dag(b)
        object.__setattr__(self, "projector", 0.5 * (p + dag(p)))

    @classmethod
    def from_vectors(cls, vectors) -> "CodeProjector":
        return cls(np.column_stack([np.asarray(v, dtype=complex) for v in vectors]))

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def complement(self) -> np.ndarray:
        return np.eye(self.ambient_dim) - self.projector

    def maximally_mixed(self) -> np.ndarray:
        return self.projector / self.rank

    def lift(self, logical_state) -> np.ndarray:
        """Map a logical density matrix (rank x rank) into the ambient space."""
        s = np.asarray(logical_state, dtype=complex)
        if s.ndim == 1:
            v = self.basis @ s
            return proj(v)
        return self.basis @ s @ dag(self.basis)


def support_projector(rho, rel_tol: float = 1e-10) -> tuple[np.ndarray, int]:
    w, v = herm_eig(rho)
    keep = w > rel_tol * max(w[0], 1e-300)
    vs = v[:, keep]
    return vs @ dag(vs), int(keep.sum())


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Hilbert-Schmidt (Ginibre) random density matrix of the given rank."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    r = g @ dag(g)
    r = 0.5 * (r + dag(r))
    return r / np.trace(r).real


def random_pure(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_complex(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
