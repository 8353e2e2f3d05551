"""Degenerate perturbation theory for the operator under the square root of Delta.

``S(eps) = sum_ij N_i rho^2 N_j^dag Tr(sigma N_i^dag N_j)`` is expanded as
``S_0 + eps S_1 + ... + eps^4 S_4``. Support eigenvalues ``p_i^2`` shift at
order ``eps^2``; kernel eigenvalues first appear at order ``eps^4`` as the
spectrum of ``P_perp K_4 P_perp``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correctability import code_support, leakage_term
from .matcore import dag, herm_eig
from .series import KrausSeries

S_ORDERS = 4
ZERO_TOL = 1e-8
CLUSTER_GAP = 1e-8
LAMBDA4_CLAMP = 1e-12


class SeriesOrderError(ValueError):
    pass


class StructuralZeroError(RuntimeError):
    """A block that must vanish for a trace-preserving series does not."""


@dataclass(frozen=True)
class SOperatorSeries:
    """Coefficients ``S_0..S_n`` of ``S(eps)``.

    Coefficients with order above the series' ``max_order`` are taken as zero,
    so the terms are those of ``S`` built from the polynomial Kraus operators.
    ``exact_orders`` is the highest ``n`` for which ``S_n`` does not depend
    on coefficients beyond ``max_order``.
    """

    terms: list
    exact_orders: int

    def __getitem__(self, n: int) -> np.ndarray:
        return self.terms[n]

    def __len__(self) -> int:
        return len(self.terms)

    def evaluate(self, eps: float) -> np.ndarray:
        return sum(eps ** n * s for n, s in enumerate(self.terms))


def _s_coeff(c: np.ndarray, t: np.ndarray, rho2: np.ndarray, n: int) -> np.ndarray:
    orders = c.shape[1]
    d = c.shape[2]
    out = np.zeros((d, d), dtype=complex)
    # (a, b) = orders of the left and right Kraus factors, (e, f) inside the trace
    for a in range(min(n, orders - 1) + 1):
        for b in range(min(n - a, orders - 1) + 1):
            for e in range(min(n - a - b, orders - 1) + 1):
                f = n - a - b - e
                if f >= orders:
                    continue
                left = c[:, a] @ rho2
                out += np.einsum("ij,iab,jcb->ac", t[:, e, :, f], left, c[:, b].conj())
    return 0.5 * (out + dag(out))


def build_s_series(series: KrausSeries, rho, sigma, orders: int = S_ORDERS) -> SOperatorSeries:
    """Table-driven assembly of ``S_0..S_orders``.

    ``S_n = sum over a+b+e+f=n of sum_ij Tr(sigma C_ie^dag C_jf) C_ia rho^2 C_jb^dag``
    with ``C_ik`` the order-``k`` coefficient of ``N_i``. Orders up to 3 need
    the series to carry them; ``S_4`` only needs order 3, since the order-4
    Kraus coefficients never reach the kernel block that uses it.
    """
    need = min(orders, 3)
    if series.max_order < need:
        raise SeriesOrderError(f"S_{orders} needs Kraus coefficients through order {need}, "
                               f"series has {series.max_order}")
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    c = series.coeffs
    rho2 = rho @ rho
    t = np.einsum("ab,iecb,jfca->iejf", sigma, c.conj(), c)
    terms = [_s_coeff(c, t, rho2, n) for n in range(orders + 1)]
    return SOperatorSeries(terms, min(orders, series.max_order))


def direct_s(series: KrausSeries, rho, sigma, eps: float) -> np.ndarray:
    """``S(eps)`` assembled from the Kraus operators evaluated at ``eps``."""
    powers = eps ** np.arange(series.max_order + 1)
    ks = np.einsum("k,ikab->iab", powers, series.coeffs)
    rho = np.asarray(rho, dtype=complex)
    g = np.einsum("ab,icb,jca->ij", np.asarray(sigma, dtype=complex), ks.conj(), ks)
    s = np.einsum("ij,iab,bc,jdc->ad", g, ks, rho @ rho, ks.conj())
    return 0.5 * (s + dag(s))


@dataclass(frozen=True)
class S0Eig:
    """Spectral data of ``S_0 = rho^2``: clusters of (near) equal eigenvalues.

    ``clusters`` lists index arrays into the descending eigenvalues ``w``;
    the last cluster is the kernel when ``rho`` is rank deficient.
    """

    w: np.ndarray
    v: np.ndarray
    clusters: list
    support_dim: int

    def projector(self, cluster: int) -> np.ndarray:
        vs = self.v[:, self.clusters[cluster]]
        return vs @ dag(vs)

    @property
    def kernel_projector(self) -> np.ndarray:
        vs = self.v[:, self.support_dim:]
        return vs @ dag(vs)

    @property
    def support_projector(self) -> np.ndarray:
        vs = self.v[:, : self.support_dim]
        return vs @ dag(vs)

    def cluster_of(self, i: int) -> int:
        for k, idx in enumerate(self.clusters):
            if i in idx:
                return k
        raise IndexError(i)


def s0_eigdata(rho, gap: float = CLUSTER_GAP) -> S0Eig:
    """Eigen-decompose ``rho`` (whose squares are the eigenvalues of ``S_0``)."""
    p, v = herm_eig(rho)
    w = p * p
    scale = max(w[0], 1e-300)
    d = int(np.sum(p > 1e-10 * max(p[0], 1e-300)))
    w = np.where(np.arange(w.size) < d, w, 0.0)
    clusters, current = [], [0]
    for i in range(1, w.size):
        if (i == d) or abs(w[i] - w[current[0]]) >= gap * scale:
            clusters.append(np.array(current))
            current = [i]
        else:
            current.append(i)
    clusters.append(np.array(current))
    return S0Eig(w, v, clusters, d)


def propagator(eig: S0Eig, i: int) -> np.ndarray:
    """``D_i = (lambda_i 1 - S_0)^(-1)`` on the complement of the ``lambda_i``
    eigenspace, zero on it."""
    k = eig.cluster_of(i)
    lam = eig.w[i]
    others = np.setdiff1d(np.arange(eig.w.size), eig.clusters[k])
    vo = eig.v[:, others]
    return (vo / (lam - eig.w[others])) @ dag(vo)


def kernel_propagator(eig: S0Eig) -> np.ndarray:
    """``D = -S_0^(-1)`` on the support, zero on the kernel."""
    vs = eig.v[:, : eig.support_dim]
    return -(vs / eig.w[: eig.support_dim]) @ dag(vs)


def _check_zero(block: np.ndarray, scale: float, name: str, tol: float = ZERO_TOL) -> float:
    r = float(np.linalg.norm(block))
    if r > tol * scale:
        raise StructuralZeroError(f"{name} = {r:.3e} exceeds {tol:g} x {scale:.3e}")
    return r


@dataclass(frozen=True)
class EigExpansion:
    support_dim: int
    p: np.ndarray          # eigenvalues of rho on its support, descending by cluster
    lambda2: np.ndarray    # second-order shifts of p_i^2
    lambda4: np.ndarray    # fourth-order kernel eigenvalues, descending
    reference_basis: np.ndarray
    k2_kernel_block: float
    k3_kernel_block: float

    def predicted_spectrum(self, eps: float) -> np.ndarray:
        vals = np.concatenate([self.p ** 2 + eps ** 2 * self.lambda2, eps ** 4 * self.lambda4])
        return np.sort(vals)[::-1]


def support_second_order(s: SOperatorSeries, eig: S0Eig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``lambda^(2)`` for the support modes, cluster by cluster.

    Within each cluster ``P_c (S_2 + S_1 D_c S_1) P_c`` is diagonalised.
    Returns ``(p, lambda2, basis)`` aligned with each other.
    """
    scale = max(eig.w[0], 1e-300)
    ps, lams, vecs = [], [], []
    for k, idx in enumerate(eig.clusters):
        if idx[0] >= eig.support_dim:
            break
        pc = eig.projector(k)
        _check_zero(pc @ s[1] @ pc, scale, f"P_{k} S_1 P_{k}")
        dk = propagator(eig, int(idx[0]))
        vk = eig.v[:, idx]
        block = dag(vk) @ (s[2] + s[1] @ dk @ s[1]) @ vk
        w, u = herm_eig(0.5 * (block + dag(block)), tol=1e-8 * max(1.0, np.abs(block).max()))
        ps.extend(np.sqrt(eig.w[idx]))
        lams.extend(w)
        vecs.append(vk @ u)
    basis = np.column_stack(vecs) if vecs else np.zeros((eig.w.size, 0))
    return np.array(ps), np.array(lams), basis


def kernel_operators(s: SOperatorSeries, eig: S0Eig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``K_2``, ``K_3`` and ``K_4`` built with ``D = -S_0^(-1)``."""
    d = kernel_propagator(eig)
    s1, s2, s3, s4 = s[1], s[2], s[3], s[4]
    k2 = s1 @ d @ s1 + s2
    k3 = s1 @ d @ k2 + s2 @ d @ s1 + s3
    k4 = k3 @ d @ s1 + k2 @ d @ s2 + s1 @ d @ s3 + s4
    return k2, k3, k4


def k3_dual(s: SOperatorSeries, eig: S0Eig) -> np.ndarray:
    """The alternative form ``K_2 D S_1 + S_1 D S_2 + S_3``."""
    d = kernel_propagator(eig)
    k2 = s[1] @ d @ s[1] + s[2]
    return k2 @ d @ s[1] + s[1] @ d @ s[2] + s[3]


def kernel_fourth_order(s: SOperatorSeries, eig: S0Eig, clamp: float = LAMBDA4_CLAMP):
    """Eigenvalues of ``P_perp K_4 P_perp`` on the kernel of ``rho``.

    Checks that ``P_perp K_2 P_perp`` and ``P_perp K_3 P_perp`` vanish.
    Values within ``clamp`` (relative to ``|S_0|``) of zero are set to zero;
    clearly negative values raise. Returns ``(lambda4, basis, r2, r3)``.
    """
    n = eig.w.size
    if eig.support_dim == n:
        return np.zeros(0), np.zeros((n, 0)), 0.0, 0.0
    scale = max(eig.w[0], 1e-300)
    k2, k3, k4 = kernel_operators(s, eig)
    vk = eig.v[:, eig.support_dim:]
    r2 = _check_zero(dag(vk) @ k2 @ vk, scale, "P_perp K_2 P_perp")
    r3 = _check_zero(dag(vk) @ k3 @ vk, scale, "P_perp K_3 P_perp")
    block = dag(vk) @ k4 @ vk
    block = 0.5 * (block + dag(block))
    w, u = herm_eig(block)
    cut = clamp * max(scale, float(np.abs(w).max(initial=0.0)))
    if np.any(w < -1e3 * cut):
        raise StructuralZeroError(f"kernel eigenvalue {w.min():.3e} is negative")
    w = np.where(np.abs(w) <= 1e3 * cut, np.clip(w, 0.0, None), w)
    w = np.where(w < cut, 0.0, w)
    return w, vk @ u, r2, r3


def to_eigenbasis(series: KrausSeries, rho, sigma, rel_tol: float = 1e-10):
    """Rewrite the problem in the eigenbasis of ``rho``, which becomes exactly diagonal.

    Small eigenvalues of ``rho`` enter the propagators as ``1 / p^2``; with a
    diagonal ``rho`` the rows and columns scaled by ``p^2`` keep their relative
    accuracy. Eigenvalues below ``rel_tol * p_max`` are set to zero. Returns
    ``(series, rho, sigma, v)`` with ``v`` the change of basis.
    """
    p, v = herm_eig(np.asarray(rho, dtype=complex))
    p = np.where(p > rel_tol * max(p[0], 1e-300), p, 0.0)
    c = np.einsum("ba,ikbc,cd->ikad", v.conj(), series.coeffs, v)
    c[0, 0] = np.eye(v.shape[0])
    sig = dag(v) @ np.asarray(sigma, dtype=complex) @ v
    return KrausSeries(c), np.diag(p).astype(complex), 0.5 * (sig + dag(sig)), v


def eig_expansion(series: KrausSeries, rho, sigma) -> EigExpansion:
    code_support(rho, sigma)
    series, rho, sigma, v = to_eigenbasis(series, rho, sigma)
    s = build_s_series(series, rho, sigma)
    eig = s0_eigdata(rho)
    p, lam2, b_sup = support_second_order(s, eig)
    lam4, b_ker, r2, r3 = kernel_fourth_order(s, eig)
    return EigExpansion(eig.support_dim, p, lam2, lam4, v @ np.column_stack([b_sup, b_ker]), r2, r3)


@dataclass(frozen=True)
class ExpansionCoefficient:
    support_term: float   # sum_i lambda2_i / (2 p_i)
    kernel_term: float    # sum_i sqrt(lambda4_i)

    @property
    def second_order_coeff(self) -> float:
        return self.support_term + self.kernel_term


def delta_via_expansion(series: KrausSeries, rho, sigma) -> ExpansionCoefficient:
    """The ``eps^2`` coefficient of ``Delta`` from the eigenvalue expansion."""
    ex = eig_expansion(series, rho, sigma)
    sup = float(np.sum(ex.lambda2 / (2.0 * ex.p)))
    ker = float(np.sum(np.sqrt(ex.lambda4)))
    return ExpansionCoefficient(sup, ker)


def closed_form_support_sum(series: KrausSeries, rho, sigma) -> float:
    """``sum_j Re Tr(rho E_j^dag) Tr(sigma E_j) - 1/2 sum_i Tr((rho + sigma) E_i^dag E_i)``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    total = 0.0
    for e in series.error_ops():
        total += float(np.real(np.trace(rho @ dag(e)) * np.trace(sigma @ e)))
        total -= 0.5 * float(np.real(np.trace((rho + sigma) @ dag(e) @ e)))
    return total


def closed_form_kernel_sum(series: KrausSeries, rho, sigma) -> float:
    """``Tr sqrt(sum_ij P_perp E_i rho^2 E_j^dag P_perp Tr(sigma E_i'^dag E_j'))``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    pr, _ = code_support(rho, sigma)
    return leakage_term(series.error_ops(), rho, sigma, np.eye(pr.shape[0]) - pr)
