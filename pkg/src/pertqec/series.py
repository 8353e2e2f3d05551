"""Kraus operators as power series in a small noise parameter.

``KrausSeries.coeffs[i, k]`` is the order-``k`` coefficient of the Kraus
operator ``N_i``; op 0 carries the identity at order zero and every other op
starts at order one. Constructors cover Lindblad generators, weak
system-environment interactions, independent parallel copies and amplitude
damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import binom

from .channels import Channel, canonical_kraus, choi
from .matcore import as_hermitian, dag, herm_eig, kron, ket, random_complex

SERIES_TOL = 1e-10


@dataclass(frozen=True)
class KrausSeries:
    """Kraus operators ``N_i = delta_{0i} 1 + eps E_i + eps^2 F_i + ...``."""

    coeffs: np.ndarray  # shape (n_ops, max_order + 1, dim, dim)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 4 or c.shape[2] != c.shape[3]:
            raise ValueError(f"coefficients must have shape (ops, orders, d, d), got {c.shape}")
        if c.shape[1] < 2:
            raise ValueError("a series needs at least orders 0 and 1")
        d = c.shape[2]
        if np.max(np.abs(c[0, 0] - np.eye(d))) > SERIES_TOL:
            raise ValueError("op 0 must start with the identity")
        if c.shape[0] > 1 and np.max(np.abs(c[1:, 0])) > SERIES_TOL:
            raise ValueError("error ops must vanish at order zero")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_lists(cls, ops: Sequence[Sequence]) -> "KrausSeries":
        """Build from ``ops[i] = [order0, order1, ...]``; ragged lists are zero padded."""
        orders = max(len(o) for o in ops)
        d = np.asarray(ops[0][0]).shape[0]
        c = np.zeros((len(ops), orders, d, d), dtype=complex)
        for i, o in enumerate(ops):
            for k, m in enumerate(o):
                c[i, k] = np.asarray(m, dtype=complex)
        return cls(c)

    @classmethod
    def identity(cls, dim: int, max_order: int = 1) -> "KrausSeries":
        c = np.zeros((1, max_order + 1, dim, dim), dtype=complex)
        c[0, 0] = np.eye(dim)
        return cls(c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def max_order(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def n_ops(self) -> int:
        return self.coeffs.shape[0]

    def order(self, k: int) -> np.ndarray:
        """All coefficients of order ``k`` (zeros beyond ``max_order``)."""
        if k > self.max_order:
            return np.zeros((self.n_ops, self.dim, self.dim), dtype=complex)
        return self.coeffs[:, k]

    @property
    def e0(self) -> np.ndarray:
        return self.coeffs[0, 1]

    def error_ops(self) -> list[np.ndarray]:
        """First-order coefficients ``E_1..E_m`` (``E_0`` excluded)."""
        return [self.coeffs[i, 1] for i in range(1, self.n_ops)]

    def padded(self, max_order: int) -> "KrausSeries":
        if max_order <= self.max_order:
            return self
        c = np.zeros((self.n_ops, max_order + 1, self.dim, self.dim), dtype=complex)
        c[:, : self.max_order + 1] = self.coeffs
        return KrausSeries(c)

    def truncated(self, max_order: int) -> "KrausSeries":
        return KrausSeries(self.coeffs[:, : max_order + 1])


@dataclass(frozen=True)
class TPReport:
    residuals: list[float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals)


def tp_residual_orders(coeffs: np.ndarray) -> np.ndarray:
    """Order-by-order coefficients of ``sum_i N_i^dagger N_i - 1``."""
    n_ord = coeffs.shape[1]
    d = coeffs.shape[2]
    out = np.zeros((n_ord, d, d), dtype=complex)
    for k in range(n_ord):
        for a in range(k + 1):
            out[k] += np.einsum("iba,ibc->ac", coeffs[:, a].conj(), coeffs[:, k - a])
    out[0] -= np.eye(d)
    return out


def validate(series: KrausSeries, tol: float = SERIES_TOL) -> TPReport:
    res = tp_residual_orders(series.coeffs)
    return TPReport([float(np.linalg.norm(r)) for r in res], tol)


def complete_tp(coeffs: np.ndarray) -> np.ndarray:
    """Fix the Hermitian part of op 0 at every order so the series is TP.

    The anti-Hermitian part of each op-0 coefficient is kept as given.
    """
    c = np.array(coeffs, dtype=complex)
    for k in range(1, c.shape[1]):
        rest = np.zeros(c.shape[2:], dtype=complex)
        for a in range(1, k):
            rest += np.einsum("iba,ibc->ac", c[:, a].conj(), c[:, k - a])
        anti = 0.5 * (c[0, k] - dag(c[0, k]))
        c[0, k] = anti - 0.5 * rest
    return c


def evaluate(series: KrausSeries, eps: float) -> Channel:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    powers = eps ** np.arange(series.max_order + 1)
    return Channel(np.einsum("k,ikab->iab", powers, series.coeffs))


def multiply_left(u_coeffs: np.ndarray, series: KrausSeries) -> KrausSeries:
    """Series of ``U(eps) N_i(eps)`` truncated at the series' max order."""
    n = series.max_order
    c = np.zeros_like(series.coeffs)
    for k in range(n + 1):
        for a in range(min(k, len(u_coeffs) - 1) + 1):
            c[:, k] += np.einsum("ab,ibc->iac", u_coeffs[a], series.coeffs[:, k - a])
    return KrausSeries(c)


def gauge_eliminate_e0(series: KrausSeries) -> KrausSeries:
    """Post-compose with the unitary ``exp(-eps E_0)`` so the new ``E_0`` is zero.

    Error operators ``E_i`` (i >= 1) are untouched; higher orders pick up the
    corresponding corrections.
    """
    e0 = series.e0
    if np.max(np.abs(e0), initial=0.0) == 0.0:
        return series
    u = [np.linalg.matrix_power(-e0, k) / math.factorial(k) for k in range(series.max_order + 1)]
    out = multiply_left(np.stack(u), series)
    c = out.coeffs.copy()
    c[0, 1] = 0.0  # exact cancellation, up to rounding
    return KrausSeries(c)


# -- Lindblad generators ------------------------------------------------------


@dataclass(frozen=True)
class LindbladData:
    hamiltonian: np.ndarray
    lindblad_ops: list = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "hamiltonian", as_hermitian(self.hamiltonian))
        object.__setattr__(self, "lindblad_ops", [np.asarray(l, dtype=complex) for l in self.lindblad_ops])

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def generator(self, rho) -> np.ndarray:
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for l in self.lindblad_ops:
            ll = dag(l) @ l
            out += l @ rho @ dag(l) - 0.5 * (ll @ rho + rho @ ll)
        return out

    def superoperator(self) -> np.ndarray:
        """Matrix of the generator on row-major vectorised operators."""
        d = self.dim
        one = np.eye(d)
        h = self.hamiltonian
        s = -1j * (np.kron(h, one) - np.kron(one, h.T))
        for l in self.lindblad_ops:
            ll = dag(l) @ l
            s += np.kron(l, l.conj()) - 0.5 * (np.kron(ll, one) + np.kron(one, ll.T))
        return s


def lindblad_to_series(l: LindbladData, max_order: int = 2) -> KrausSeries:
    """Kraus series in ``eps = sqrt(t)``: ``E_0 = 0``, ``E_i = L_i`` and
    ``F_0 = -iH - 1/2 sum L_i^dagger L_i``."""
    d = l.dim
    c = np.zeros((1 + len(l.lindblad_ops), max(max_order, 2) + 1, d, d), dtype=complex)
    c[0, 0] = np.eye(d)
    c[0, 2] = -1j * l.hamiltonian - 0.5 * sum((dag(x) @ x for x in l.lindblad_ops), np.zeros((d, d)))
    for i, op in enumerate(l.lindblad_ops, start=1):
        c[i, 1] = op
    return KrausSeries(c)


def superop_to_choi(s: np.ndarray, d: int) -> np.ndarray:
    return s.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)


def lindblad_channel(l: LindbladData, t: float) -> Channel:
    """Exact channel ``exp(t L)`` via the matrix exponential of the superoperator."""
    d = l.dim
    c = superop_to_choi(expm(t * l.superoperator()), d)
    return canonical_kraus(0.5 * (c + dag(c)), d, d, rank_tol=0.0)


class LindbladExtractionError(ValueError):
    pass


def decompose_generator_choi(x: np.ndarray, d: int, rank_tol: float = 1e-7) -> LindbladData:
    """Split the Choi matrix of a generator into ``H`` and traceless ``L_i``."""
    x = 0.5 * (x + dag(x))
    vec1 = np.eye(d).reshape(-1).astype(complex)
    phi = vec1 / np.sqrt(d)
    q = np.eye(d * d) - np.outer(phi, phi.conj())
    w, v = herm_eig(q @ x @ q)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.any(w < -rank_tol * scale):
        raise LindbladExtractionError(
            f"dissipative part has eigenvalue {w.min():.3e}; not a Lindblad generator or step too large")
    keep = w > rank_tol * scale
    ops = [np.sqrt(w[k]) * v[:, k].reshape(d, d).T for k in np.flatnonzero(keep)]
    rest = x.copy()
    for op in ops:
        vo = op.T.reshape(-1)
        rest -= np.outer(vo, vo.conj())
    tr_k = (vec1.conj() @ rest @ vec1).real / (2 * d)
    vec_k = (rest @ vec1 - vec1 * tr_k) / d
    k = vec_k.reshape(d, d).T
    h = 0.5j * (k - dag(k))
    return LindbladData(0.5 * (h + dag(h)), ops)


def lindblad_extract(family: Callable[[float], Channel], step: float = 1e-5,
                     rank_tol: float = 1e-7) -> LindbladData:
    """Recover ``H`` and ``L_i`` from a channel family ``t -> N_t`` near ``t = 0``.

    Uses a one-sided difference of the Choi matrix with one Richardson step
    (steps ``h`` and ``h/2``), so the generator is accurate to ``O(h^2)``.
    ``H`` is returned traceless and the ``L_i`` traceless; the set is
    determined up to unitary mixing.
    """
    c0_ch = family(0.0)
    d = c0_ch.dim_in
    c0 = choi(c0_ch)
    ident = choi(Channel.identity(d))
    if np.max(np.abs(c0 - ident)) > 1e-9:
        raise LindbladExtractionError("family(0) is not the identity channel")

    def diff(h):
        return (choi(family(h)) - c0) / h

    x = 2.0 * diff(step / 2) - diff(step)
    return decompose_generator_choi(x, d, rank_tol)


# -- weak interaction with an environment -------------------------------------


def complete_basis(v0: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) whose first row is ``v0``; Gram-Schmidt over
    the standard vectors in index order."""
    v0 = np.asarray(v0, dtype=complex)
    v0 = v0 / np.linalg.norm(v0)
    d = v0.size
    rows = [v0]
    for j in range(d):
        if len(rows) == d:
            break
        w = ket(j, d)
        for r in rows:
            w = w - r * np.vdot(r, w)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            rows.append(w / nrm)
    return np.stack(rows)


@dataclass(frozen=True)
class InteractionModel:
    """``H = lam * sum_j J_j (x) K_j`` with the environment starting in ``env_state``.

    ``env_state`` is a vector (pure) or a density matrix (mixed, see
    :func:`purify_env`). ``env_basis`` rows are an orthonormal basis with
    the initial state first; by default it is completed by Gram-Schmidt.
    """

    lam: float
    terms: list
    env_state: np.ndarray
    env_basis: np.ndarray | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("interaction strength must be positive")
        terms = [(as_hermitian(j), as_hermitian(k)) for j, k in self.terms]
        if not terms:
            raise ValueError("interaction needs at least one term")
        object.__setattr__(self, "terms", terms)
        st = np.asarray(self.env_state, dtype=complex)
        object.__setattr__(self, "env_state", st)
        if self.env_basis is not None:
            b = np.asarray(self.env_basis, dtype=complex)
            if np.max(np.abs(b @ dag(b) - np.eye(b.shape[0]))) > 1e-9 or b.shape[0] != b.shape[1]:
                raise ValueError("environment basis is not orthonormal")
            if st.ndim == 1 and abs(abs(np.vdot(b[0], st)) - np.linalg.norm(st)) > 1e-9:
                raise ValueError("environment basis must start with the initial state")
            object.__setattr__(self, "env_basis", b)

    @property
    def is_pure(self) -> bool:
        return self.env_state.ndim == 1

    @property
    def sys_dim(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def env_dim(self) -> int:
        return self.terms[0][1].shape[0]

    def coupling(self) -> np.ndarray:
        """``sum_j J_j (x) K_j`` (without the strength ``lam``)."""
        return sum(np.kron(j, k) for j, k in self.terms)

    def basis(self) -> np.ndarray:
        if not self.is_pure:
            raise ValueError("purify the environment first")
        if self.env_basis is not None:
            return self.env_basis
        return complete_basis(self.env_state)


def purify_env(model: InteractionModel) -> InteractionModel:
    """Replace a mixed environment state by ``sum_k sqrt(p_k) |psi_k>|k>`` on an
    ancilla of dimension ``rank``, with ``K_j -> K_j (x) 1``."""
    if model.is_pure:
        return model
    w, v = herm_eig(model.env_state)
    w, v = w[::-1], v[:, ::-1]  # ascending, so a diagonal state keeps its labels
    keep = w > 1e-12
    r = int(keep.sum())
    vec = sum(np.sqrt(w[i]) * np.kron(v[:, i], ket(a, r)) for a, i in enumerate(np.flatnonzero(keep)))
    terms = [(j, np.kron(k, np.eye(r))) for j, k in model.terms]
    return InteractionModel(model.lam, terms, vec)


def _env_slices(u: np.ndarray, d: int, basis: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """``<i| U |0>`` on the system for every environment basis row ``i``."""
    de = basis.shape[1]
    t = u.reshape(d, de, d, de)
    right = np.einsum("aibj,j->aib", t, v0)
    return np.einsum("ni,aib->nab", basis.conj(), right)


def from_interaction(model: InteractionModel, max_order: int = 3) -> KrausSeries:
    """Kraus series in ``eps = t * lam`` for ``U = exp(i t H)``.

    Order ``k`` coefficient of ``N_i`` is ``i^k / k! <i| (sum J (x) K)^k |0>``,
    giving ``E_i = i sum_j J_j <i|K_j|0>``. Every order is trace preserving
    because the series truncates a unitary.
    """
    model = purify_env(model)
    d = model.sys_dim
    basis = model.basis()
    v0 = basis[0]
    h = model.coupling()
    power = np.eye(h.shape[0], dtype=complex)
    coeffs = np.zeros((basis.shape[0], max_order + 1, d, d), dtype=complex)
    for k in range(max_order + 1):
        coeffs[:, k] = (1j ** k / math.factorial(k)) * _env_slices(power, d, basis, v0)
        power = power @ h
    coeffs[0, 0] = np.eye(d)
    coeffs[1:, 0] = 0.0
    return KrausSeries(coeffs)


def exact_interaction_channel(model: InteractionModel, t: float) -> Channel:
    """Kraus operators ``<i| exp(i t H) |0>`` over the environment basis."""
    if t < 0:
        raise ValueError("t must be non-negative")
    model = purify_env(model)
    basis = model.basis()
    w, v = herm_eig(model.lam * model.coupling())
    u = (v * np.exp(1j * t * w)) @ dag(v)
    return Channel(_env_slices(u, model.sys_dim, basis, basis[0]))


def mixed_env_channel_choi(model: InteractionModel, t: float) -> np.ndarray:
    """Choi matrix of ``rho -> Tr_E[U (rho (x) rho_E) U^dagger]`` by ensemble averaging."""
    w, v = herm_eig(model.env_state)
    total = 0
    for p, vec in zip(w, v.T):
        if p <= 1e-14:
            continue
        pure = InteractionModel(model.lam, model.terms, vec)
        total = total + p * choi(exact_interaction_channel(pure, t))
    return total


# -- composition and examples ---------------------------------------------------


def _on_site(op: np.ndarray, site: int, n: int) -> np.ndarray:
    d = op.shape[0]
    mats = [np.eye(d, dtype=complex) for _ in range(n)]
    mats[site] = op
    return kron(*mats)


def parallel_first_order(series: KrausSeries, n: int) -> KrausSeries:
    """First-order series for ``n`` independent copies.

    ``M_0 = 1 + eps sum_k E_0^(k)`` and ``M_kj = eps E_j^(k)``; all
    operators of order ``eps^2`` are dropped, so ``max_order`` is 1.
    """
    if n < 1:
        raise ValueError("need at least one copy")
    if n == 1:
        return series
    d = series.dim
    big = d ** n
    m = series.n_ops - 1
    c = np.zeros((1 + n * m, 2, big, big), dtype=complex)
    c[0, 0] = np.eye(big)
    c[0, 1] = sum(_on_site(series.e0, k, n) for k in range(n))
    idx = 1
    for k in range(n):
        for j in range(1, series.n_ops):
            c[idx, 1] = _on_site(series.coeffs[j, 1], k, n)
            idx += 1
    return KrausSeries(c)


def tensor_series(a: KrausSeries, b: KrausSeries) -> KrausSeries:
    """Series of ``N_i (x) M_j`` truncated at the smaller max order."""
    order = min(a.max_order, b.max_order)
    da, db = a.dim, b.dim
    c = np.zeros((a.n_ops * b.n_ops, order + 1, da * db, da * db), dtype=complex)
    for k in range(order + 1):
        for p in range(k + 1):
            c[:, k] += np.einsum("iab,jcd->ijacbd", a.coeffs[:, p], b.coeffs[:, k - p]).reshape(
                a.n_ops * b.n_ops, da * db, da * db)
    return KrausSeries(c)


def tensor_power_series(series: KrausSeries, n: int) -> KrausSeries:
    """All ``(m+1)^n`` product Kraus operators of ``n`` copies, every order kept."""
    out = series
    for _ in range(n - 1):
        out = tensor_series(out, series)
    return out


def amplitude_damping_series(n_qubits: int = 1, max_order: int = 3, full: bool = False) -> KrausSeries:
    """Amplitude damping ``N_0 = diag(1, sqrt(1 - eps^2))``, ``N_1 = eps |0><1|``.

    Several qubits use :func:`parallel_first_order` by default, or the full
    tensor power when ``full`` is set.
    """
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    c = np.zeros((2, max_order + 1, 2, 2), dtype=complex)
    c[0, 0] = np.eye(2)
    for k in range(1, max_order // 2 + 1):
        c[0, 2 * k, 1, 1] = binom(0.5, k) * (-1) ** k
    c[1, 1, 0, 1] = 1.0
    single = KrausSeries(c)
    if n_qubits == 1:
        return single
    return tensor_power_series(single, n_qubits) if full else parallel_first_order(single, n_qubits)


def random_series(dim: int, n_errors: int, max_order: int, rng: np.random.Generator,
                  scale: float = 0.5) -> KrausSeries:
    """Random trace-preserving series; op-0 Hermitian parts solved order by order."""
    c = scale * random_complex((n_errors + 1, max_order + 1, dim, dim), rng) / np.sqrt(dim)
    c[0, 0] = np.eye(dim)
    c[1:, 0] = 0.0
    return KrausSeries(complete_tp(c))


def is_normal(op, tol: float = 1e-10) -> bool:
    op = np.asarray(op)
    return float(np.linalg.norm(dag(op) @ op - op @ dag(op))) <= tol
