"""Quantum channels at a fixed value of the noise parameter.

A :class:`Channel` is a list of Kraus matrices. Fidelities are computed from
factorisations (``X = Z Z^dagger``) rather than matrix square roots, which
keeps values such as ``1 - F ~ 1e-12`` resolvable in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .matcore import (
    CodeProjector,
    dag,
    herm_eig,
    clamp_psd_eigs,
    nuclear_norm,
    psd_factor,
)

TP_TOL = 1e-10
KRAUS_RANK_TOL = 1e-12


class TracePreservationError(ValueError):
    pass


@dataclass(frozen=True)
class Channel:
    """Kraus representation ``rho -> sum_k K_k rho K_k^dagger``.

    ``kraus`` has shape ``(n_kraus, dim_out, dim_in)``. Truncated power
    series give channels that are only approximately trace preserving; the
    deviation is available as :attr:`tp_defect`.
    """

    kraus: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] == 0:
            raise ValueError(f"Kraus array must have shape (n, out, in), got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ValueError("Kraus operators have non-finite entries")
        object.__setattr__(self, "kraus", k)

    @classmethod
    def from_kraus(cls, ops, strict: bool = False, tol: float = TP_TOL) -> "Channel":
        ch = cls(np.stack([np.asarray(o, dtype=complex) for o in ops]))
        if strict and ch.tp_defect > tol:
            raise TracePreservationError(f"sum K^dag K deviates from identity by {ch.tp_defect:.3e}")
        return ch

    @classmethod
    def identity(cls, dim: int) -> "Channel":
        return cls(np.eye(dim, dtype=complex)[None])

    @classmethod
    def unitary(cls, u) -> "Channel":
        return cls(np.asarray(u, dtype=complex)[None])

    @property
    def dim_in(self) -> int:
        return self.kraus.shape[2]

    @property
    def dim_out(self) -> int:
        return self.kraus.shape[1]

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    @property
    def tp_defect(self) -> float:
        s = np.einsum("kai,kaj->ij", self.kraus.conj(), self.kraus)
        return float(np.max(np.abs(s - np.eye(self.dim_in))))

    def __call__(self, rho) -> np.ndarray:
        return apply(self, rho)

    def compose(self, first: "Channel") -> "Channel":
        """``self o first``: apply ``first``, then ``self``."""
        if first.dim_out != self.dim_in:
            raise ValueError("dimension mismatch in composition")
        k = np.einsum("aij,bjk->abik", self.kraus, first.kraus)
        return Channel(k.reshape(-1, self.dim_out, first.dim_in))

    def tensor(self, other: "Channel") -> "Channel":
        k = np.einsum("aij,bkl->abikjl", self.kraus, other.kraus)
        return Channel(k.reshape(self.n_kraus * other.n_kraus,
                                 self.dim_out * other.dim_out,
                                 self.dim_in * other.dim_in))

    def post_unitary(self, u) -> "Channel":
        return Channel(np.einsum("ij,kjl->kil", np.asarray(u, dtype=complex), self.kraus))


def tensor_power(ch: Channel, n: int) -> Channel:
    out = ch
    for _ in range(n - 1):
        out = out.tensor(ch)
    return out


def constant_channel(omega, dim_in: int) -> Channel:
    """The replacement channel ``rho -> omega * Tr(rho)``."""
    b = psd_factor(np.asarray(omega, dtype=complex), rel_cut=0.0)
    ops = [np.outer(b[:, k], np.eye(dim_in)[j]) for k in range(b.shape[1]) for j in range(dim_in)]
    if not ops:
        ops = [np.zeros((b.shape[0], dim_in))]
    return Channel(np.stack(ops))


def _check_input(n: Channel, rho: np.ndarray):
    if rho.shape != (n.dim_in, n.dim_in):
        raise ValueError(f"state of shape {rho.shape} does not match channel input dim {n.dim_in}")


def apply(n: Channel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    _check_input(n, rho)
    out = np.einsum("kij,jl,kml->im", n.kraus, rho, n.kraus.conj())
    return 0.5 * (out + dag(out))


def complementary(n: Channel, rho) -> np.ndarray:
    """Environment output: entry ``(i, j)`` is ``Tr(K_i rho K_j^dagger)``."""
    rho = np.asarray(rho, dtype=complex)
    _check_input(n, rho)
    out = np.einsum("iab,bc,jac->ij", n.kraus, rho, n.kraus.conj())
    return 0.5 * (out + dag(out))


def complementary_channel(n: Channel) -> Channel:
    """Kraus form of the complementary channel, ``R_a = sum_i |i><a| K_i``."""
    # R_a[i, :] = K_i[a, :]
    return Channel(np.transpose(n.kraus, (1, 0, 2)))


def choi(n: Channel) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) N(|i><j|)`` ordered input (x) output."""
    vecs = np.transpose(n.kraus, (0, 2, 1)).reshape(n.n_kraus, -1)
    c = vecs.T @ vecs.conj()
    return 0.5 * (c + dag(c))


def canonical_kraus(c, dim_in: int, dim_out: int | None = None,
                    rank_tol: float = KRAUS_RANK_TOL) -> Channel:
    """Kraus operators from the eigenvectors of a Choi matrix.

    The result satisfies ``Tr(M_i^dagger M_j) = 0`` for ``i != j``. Choi
    eigenvalues below ``rank_tol * Tr(c)`` are dropped; pass ``rank_tol=0``
    to keep every non-negative eigenvalue.
    """
    c = np.asarray(c, dtype=complex)
    if dim_out is None:
        dim_out = c.shape[0] // dim_in
    if c.shape != (dim_in * dim_out, dim_in * dim_out):
        raise ValueError(f"Choi shape {c.shape} does not match dims ({dim_in}, {dim_out})")
    w, v = herm_eig(c)
    w = clamp_psd_eigs(w, tol=1e-9)
    cut = rank_tol * max(np.trace(c).real, 0.0)
    keep = w > cut if rank_tol > 0 else w > 0
    if not np.any(keep):
        return Channel(np.zeros((1, dim_out, dim_in)))
    ops = [np.sqrt(w[k]) * v[:, k].reshape(dim_in, dim_out).T for k in np.flatnonzero(keep)]
    return Channel(np.stack(ops))


def choi_distance(a: Channel, b: Channel) -> float:
    return float(np.linalg.norm(choi(a) - choi(b)))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``Tr sqrt(sqrt(rho) sigma sqrt(rho))`` (not squared)."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError("fidelity of states with different dimensions")
    a = psd_factor(rho)
    b = psd_factor(sigma)
    if a.shape[1] == 0 or b.shape[1] == 0:
        return 0.0
    return nuclear_norm(dag(a) @ b)


def purification_factor(rho) -> np.ndarray:
    """``Psi`` with ``|psi> = sum_i sqrt(p_i) |i>|i>`` as a (dim x rank) matrix."""
    w, v = herm_eig(rho)
    w = clamp_psd_eigs(w)
    keep = w > 1e-14 * max(w[0], 1e-300)
    return v[:, keep] * np.sqrt(w[keep])


def output_factor(n: Channel, psi: np.ndarray) -> np.ndarray:
    """Columns ``vec(K_k Psi)``: ``(N (x) id)(psi) = Z Z^dagger``."""
    kp = np.einsum("kij,jr->kir", n.kraus, psi)
    return kp.reshape(n.n_kraus, -1).T


def ent_fidelity(n: Channel, m: Channel, rho, psi: np.ndarray | None = None) -> float:
    """Entanglement fidelity ``f((N (x) id) psi_rho, (M (x) id) psi_rho)``.

    ``psi`` optionally supplies a purification factor (any ``Psi`` with
    ``Psi Psi^dagger = rho``); by default the eigenbasis one is used.
    """
    rho = np.asarray(rho, dtype=complex)
    if n.dim_in != m.dim_in or rho.shape != (n.dim_in, n.dim_in):
        raise ValueError("channels and state must share the input dimension")
    if n.dim_out != m.dim_out:
        raise ValueError("channels must share the output dimension")
    if psi is None:
        psi = purification_factor(rho)
    return nuclear_norm(dag(output_factor(n, psi)) @ output_factor(m, psi))


def ent_fidelity_identity(n: Channel, rho, psi: np.ndarray | None = None) -> float:
    """``F_rho(N, id)``; since the reference output is pure this is a plain overlap."""
    if psi is None:
        psi = purification_factor(np.asarray(rho, dtype=complex))
    overlaps = np.einsum("ir,kij,jr->k", psi.conj(), n.kraus, psi)
    return float(np.sqrt(np.sum(np.abs(overlaps) ** 2)))


def ent_infidelity_identity(n: Channel, rho, psi: np.ndarray | None = None) -> float:
    """``1 - F_rho(N, id)`` without cancellation for ``F`` close to one."""
    f = ent_fidelity_identity(n, rho, psi)
    f2 = f * f
    return (1.0 - f2) / (1.0 + f)


@dataclass(frozen=True)
class WorstCase:
    value: float
    state: np.ndarray  # logical density matrix (rank x rank) of the minimiser
    certified: bool = False


def _factor_fidelity(n: Channel, m: Channel, psi: np.ndarray) -> float:
    return nuclear_norm(dag(output_factor(n, psi)) @ output_factor(m, psi))


def worst_case_fidelity(n: Channel, m: Channel, p: CodeProjector, starts: int = 32,
                        seed: int = 0, objective=None) -> WorstCase:
    """Best-found minimum of ``F_rho(N, M)`` over all states supported on the code.

    States are parametrised as ``rho = A A^dag / Tr(A A^dag)`` with a square
    logical matrix ``A``; the ambient ``B A / |A|_F`` (``B`` the code basis)
    is then a purification factor. Local searches start from the logical basis
    states, the maximally mixed state and ``starts`` random states. The value
    is an upper bound on the true minimum and is not certified. ``objective``
    may replace the fidelity by any function of the ambient purification
    factor.
    """
    k = p.rank
    if objective is None:
        objective = lambda psi: _factor_fidelity(n, m, psi)
    if k == 1:
        return WorstCase(float(objective(p.basis)), np.ones((1, 1), dtype=complex), certified=True)

    def unpack(x):
        a = (x[: k * k] + 1j * x[k * k:]).reshape(k, k)
        nrm = np.linalg.norm(a)
        return a / nrm if nrm > 0 else np.eye(k) / np.sqrt(k)

    def f(x):
        return objective(p.basis @ unpack(x))

    rng = np.random.default_rng(seed)
    seeds = [np.outer(np.eye(k)[i], np.eye(k)[i]).astype(complex) for i in range(k)]
    seeds.append(np.eye(k, dtype=complex) / np.sqrt(k))
    seeds += [rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k)) for _ in range(starts)]
    best_val, best_a = np.inf, None
    for a0 in seeds:
        x0 = np.concatenate([a0.real.ravel(), a0.imag.ravel()])
        res = minimize(f, x0, method="L-BFGS-B", options={"maxiter": 200})
        a = unpack(res.x)
        val = float(objective(p.basis @ a))
        # strict < keeps the earliest start on ties
        if val < best_val:
            best_val, best_a = val, a
    return WorstCase(best_val, best_a @ dag(best_a))


def depolarizing(p: float, dim: int = 2) -> Channel:
    """Qubit depolarising channel with Kraus weights ``1 - 3p/4, p/4, p/4, p/4``."""
    if dim != 2:
        raise ValueError("only the qubit depolarising channel is provided")
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]])
    z = np.diag([1.0, -1.0]).astype(complex)
    ops = [np.sqrt(1 - 3 * p / 4) * np.eye(2), np.sqrt(p / 4) * x, np.sqrt(p / 4) * y, np.sqrt(p / 4) * z]
    return Channel(np.stack(ops))


def amplitude_damping(eps: float) -> Channel:
    """Single-qubit amplitude damping with decay probability ``eps**2``."""
    n0 = np.diag([1.0, np.sqrt(1.0 - eps * eps)]).astype(complex)
    n1 = np.array([[0.0, eps], [0.0, 0.0]], dtype=complex)
    return Channel(np.stack([n0, n1]))


def dephasing(p: float) -> Channel:
    z = np.diag([1.0, -1.0]).astype(complex)
    return Channel(np.stack([np.sqrt(1 - p) * np.eye(2), np.sqrt(p) * z]))


def tp_normalized(n: Channel) -> Channel:
    """Right-multiply the Kraus operators by ``(sum K^dag K)^(-1/2)`` to make ``n`` trace preserving."""
    s = np.einsum("kji,kjl->il", n.kraus.conj(), n.kraus)
    w, v = herm_eig(s)
    if w[-1] <= 0:
        raise ValueError("sum of K^dagger K is singular")
    return Channel(np.einsum("kij,jl->kil", n.kraus, (v / np.sqrt(w)) @ dag(v)))
