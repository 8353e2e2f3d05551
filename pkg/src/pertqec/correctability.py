"""Correctability of a code under weak noise.

Knill-Laflamme checks on first-order error operators, the estimator
``Delta_{rho,sigma}`` and its order-``eps^2`` coefficient, recovery channels
(Petz plus polar-ascent refinement, and a max-min ascent for the
worst case) and log-log scaling fits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channels import (
    Channel,
    apply,
    complementary,
    complementary_channel,
    constant_channel,
    ent_fidelity,
    ent_fidelity_identity,
    ent_infidelity_identity,
    purification_factor,
    worst_case_fidelity,
)
from .matcore import (
    CodeProjector,
    dag,
    herm_eig,
    nuclear_norm,
    psd_factor,
    random_density,
    support_projector,
)
from .series import KrausSeries, LindbladData, evaluate

KL_TOL = 1e-10
FIT_FLOOR = 1e-13


# -- Knill-Laflamme -------------------------------------------------------------


@dataclass(frozen=True)
class KLReport:
    """Outcome of the Knill-Laflamme test on ``{1, E_1, ..., E_m}``.

    ``lam`` is the ``(m+1) x (m+1)`` matrix of normalised code overlaps; row
    0 holds ``lambda_{0i}`` from ``P E_i P`` and the lower-right block holds
    ``lambda_ij`` from ``P E_i^dagger E_j P``.
    """

    lam: np.ndarray
    pair_residuals: np.ndarray
    linear_residuals: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def max_residual(self) -> float:
        vals = [0.0]
        if self.pair_residuals.size:
            vals.append(float(self.pair_residuals.max()))
        if self.linear_residuals.size:
            vals.append(float(self.linear_residuals.max()))
        return max(vals)


def kl_check(p: CodeProjector, errors: Sequence[np.ndarray], tol: float = KL_TOL) -> KLReport:
    """Test ``P E_i^dagger E_j P = lambda_ij P`` and ``P E_i P = lambda_0i P``.

    The ``lambda`` values are the normalised traces, which minimise the
    Frobenius residuals. Pass the error operators without ``E_0``.
    """
    pr = p.projector
    k = p.rank
    m = len(errors)
    ops = [np.asarray(e, dtype=complex) for e in errors]
    for e in ops:
        if e.shape != pr.shape:
            raise ValueError(f"error operator of shape {e.shape} does not act on the code space")
    lam = np.zeros((m + 1, m + 1), dtype=complex)
    lam[0, 0] = 1.0
    lin = np.zeros(m)
    pair = np.zeros((m, m))
    for i, e in enumerate(ops):
        pep = pr @ e @ pr
        lam[0, i + 1] = np.trace(pep) / k
        lam[i + 1, 0] = np.conj(lam[0, i + 1])
        lin[i] = np.linalg.norm(pep - lam[0, i + 1] * pr)
    for i, ei in enumerate(ops):
        for j, ej in enumerate(ops):
            x = pr @ dag(ei) @ ej @ pr
            lam[i + 1, j + 1] = np.trace(x) / k
            pair[i, j] = np.linalg.norm(x - lam[i + 1, j + 1] * pr)
    return KLReport(lam, pair, lin, tol)


def kl_check_lindblad(p: CodeProjector, l: LindbladData, tol: float = KL_TOL) -> KLReport:
    return kl_check(p, l.lindblad_ops, tol)


def kl_check_series(p: CodeProjector, series: KrausSeries, tol: float = KL_TOL) -> KLReport:
    return kl_check(p, series.error_ops(), tol)


# -- scaling fits ---------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    grid: list
    values: list
    slope: float | None
    intercept: float | None
    r_squared: float | None
    floor: float = FIT_FLOOR

    @property
    def saturated(self) -> bool:
        return self.slope is None

    @property
    def status(self) -> str:
        return "saturated - slope undefined" if self.saturated else "ok"


def fit_loglog(grid, values, floor: float = FIT_FLOOR) -> ScalingFit:
    """Least-squares line through ``(log eps, log value)`` for values above ``floor``."""
    grid = [float(x) for x in grid]
    values = [float(v) for v in values]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    pts = [(np.log(x), np.log(v)) for x, v in zip(grid, values) if v > floor]
    if len(pts) < 2:
        return ScalingFit(grid, values, None, None, None, floor)
    x, y = np.array(pts).T
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(grid, values, float(slope), float(intercept), r2, floor)


def log_grid(start: float = 1e-3, stop: float = 1e-1, points: int = 12) -> np.ndarray:
    return np.geomspace(start, stop, points)


@dataclass(frozen=True)
class EquivalentFormReport:
    kl: KLReport
    first_form: ScalingFit   # max_i |P N_0^dag N_i P - lambda_0i eps P|
    second_form: ScalingFit  # max_ij |P N_i^dag N_j P - lambda_ij eps^2 P|


def equivalent_form_check(p: CodeProjector, series: KrausSeries, eps_grid=None,
                          tol: float = KL_TOL) -> EquivalentFormReport:
    """Residuals of the Kraus-level form of the conditions over an ``eps`` grid.

    When the KL test passes the residuals scale as ``eps^2`` and ``eps^3``.
    """
    eps_grid = log_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    kl = kl_check_series(p, series, tol)
    pr = p.projector
    m = series.n_ops - 1
    first, second = [], []
    for eps in eps_grid:
        ks = evaluate(series, eps).kraus
        n0 = ks[0]
        r1 = [np.linalg.norm(pr @ dag(n0) @ ks[i] @ pr - kl.lam[0, i] * eps * pr) for i in range(1, m + 1)]
        r2 = [np.linalg.norm(pr @ dag(ks[i]) @ ks[j] @ pr - kl.lam[i, j] * eps ** 2 * pr)
              for i in range(1, m + 1) for j in range(1, m + 1)]
        first.append(max(r1, default=0.0))
        second.append(max(r2, default=0.0))
    return EquivalentFormReport(kl, fit_loglog(eps_grid, first), fit_loglog(eps_grid, second))


# -- the Delta estimator --------------------------------------------------------


def _gram_factor(ops: np.ndarray, sigma_factor: np.ndarray) -> np.ndarray:
    """``B`` with ``B^dagger B = [Tr(sigma O_i^dagger O_j)]`` (columns ``vec(O_j C)``)."""
    oc = np.einsum("kab,bc->kac", ops, sigma_factor)
    return oc.reshape(ops.shape[0], -1).T


def delta_factor(ops: np.ndarray, left: np.ndarray, sigma) -> np.ndarray:
    """Factor ``Y`` with ``Y Y^dagger = sum_ij O_i L L^dag O_j^dag Tr(sigma O_i^dag O_j)``."""
    b = _gram_factor(ops, psd_factor(np.asarray(sigma, dtype=complex)))
    a = np.einsum("kab,bc->kac", ops, left)
    y = np.einsum("sk,kac->asc", b.conj(), a)
    return y.reshape(a.shape[1], -1)


def delta(n: Channel, rho, sigma) -> float:
    """``Delta_{rho,sigma} = Tr sqrt(sum_ij N_i rho^2 N_j^dag Tr(sigma N_i^dag N_j))``.

    Evaluated as the trace norm of a factor of the operator under the root.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != (n.dim_in, n.dim_in) or sigma.shape != rho.shape:
        raise ValueError("states do not match the channel input dimension")
    return nuclear_norm(delta_factor(n.kraus, rho, sigma))


def delta_operator(n: Channel, rho, sigma) -> np.ndarray:
    """The operator ``S`` whose trace square root is ``Delta``."""
    y = delta_factor(n.kraus, np.asarray(rho, dtype=complex), sigma)
    s = y @ dag(y)
    return 0.5 * (s + dag(s))


def delta_complementary(n: Channel, rho, sigma) -> float:
    """``Delta`` as the entanglement fidelity between the complementary channel
    and the constant channel with output ``N^(sigma)``."""
    comp = complementary_channel(n)
    const = constant_channel(complementary(n, sigma), n.dim_in)
    return ent_fidelity(comp, const, rho)


def centered_ops(errors, state) -> list[np.ndarray]:
    """``E_i - Tr(state E_i) 1``."""
    state = np.asarray(state, dtype=complex)
    one = np.eye(state.shape[0])
    return [np.asarray(e) - np.trace(state @ e) * one for e in errors]


def error_map(errors, rho) -> np.ndarray:
    """``sum_i E_i rho E_i^dagger``."""
    rho = np.asarray(rho, dtype=complex)
    return sum((e @ rho @ dag(e) for e in errors), np.zeros_like(rho))


@dataclass(frozen=True)
class DeltaExpansion:
    term_linear_trace: float
    term_quadratic: float
    term_leakage: float

    @property
    def second_order_coeff(self) -> float:
        return self.term_linear_trace - self.term_quadratic + self.term_leakage


class SupportMismatchError(ValueError):
    pass


def code_support(rho, sigma, tol: float = 1e-9) -> tuple[np.ndarray, int]:
    """Support projector of ``rho``; ``sigma`` must live inside it."""
    pr, d = support_projector(rho)
    perp = np.eye(pr.shape[0]) - pr
    if np.linalg.norm(perp @ sigma) > tol:
        raise SupportMismatchError("sigma is not supported inside the support of rho")
    return pr, d


def leakage_term(errors, rho, sigma, perp) -> float:
    """``Tr sqrt(sum_ij P' E_i rho^2 E_j^dag P' Tr(sigma E_i'^dag E_j'))``, primes
    centred on ``sigma``."""
    if not errors:
        return 0.0
    e = np.stack(errors)
    ec = np.stack(centered_ops(errors, sigma))
    b = _gram_factor(ec, psd_factor(sigma))
    a = np.einsum("ab,kbc,cd->kad", perp, e, rho)
    y = np.einsum("sk,kac->asc", b.conj(), a).reshape(a.shape[1], -1)
    return nuclear_norm(y)


def delta_expansion(series: KrausSeries, rho, sigma) -> DeltaExpansion:
    """The ``eps^2`` coefficient of ``Delta_{rho,sigma}``, split into its three terms.

    ``P`` is the support of ``rho``. Only the first-order error operators
    ``E_1..E_m`` enter.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    pr, _ = code_support(rho, sigma)
    errors = series.error_ops()
    lin = sum(float(np.real(np.trace(rho @ dag(e)) * np.trace(sigma @ e))) for e in errors)
    quad = sum(0.5 * float(np.real(np.trace((rho + sigma) @ dag(e) @ e))) for e in errors)
    leak = leakage_term(errors, rho, sigma, np.eye(pr.shape[0]) - pr)
    return DeltaExpansion(lin, quad, leak)


# -- recovery ------------------------------------------------------------------


def petz_recovery(n: Channel, p: CodeProjector, support_tol: float = 1e-12) -> Channel:
    """Transpose channel with reference ``pi = P / Tr P``.

    ``R_k = pi^(1/2) N_k^dag N(pi)^(-1/2)`` on the support of ``N(pi)``,
    completed by the projector onto the orthogonal complement.
    """
    pi = p.maximally_mixed()
    out = apply(n, pi)
    w, v = herm_eig(out)
    keep = w > support_tol * max(w[0], 0.0)
    if not np.any(keep):
        raise ValueError("channel output of the code state vanishes")
    vk = v[:, keep]
    inv_sqrt = (vk / np.sqrt(w[keep])) @ dag(vk)
    root_pi = p.projector / np.sqrt(p.rank)
    ops = [root_pi @ dag(k) @ inv_sqrt for k in n.kraus]
    rest = np.eye(n.dim_out) - vk @ dag(vk)
    if np.linalg.norm(rest) > 1e-12:
        ops.append(np.asarray(rest, dtype=complex))
    return Channel(np.stack(ops))


def fidelity_operator(n: Channel, psi: np.ndarray) -> np.ndarray:
    """``T`` with ``F_rho(R o N, id)^2 = Tr(choi(R) T)`` for ``Psi Psi^dag = rho``."""
    vecs = _overlap_blocks(n, psi).reshape(n.n_kraus, -1)
    t = vecs.T.conj() @ vecs
    return 0.5 * (t + dag(t))


def _overlap_blocks(n: Channel, psi: np.ndarray) -> np.ndarray:
    # M_k[b, a] = sum_r conj(Psi[a, r]) (N_k Psi)[b, r], so Tr(R M_k) = <psi|R N_k|psi>
    return np.einsum("ar,kbr->kba", psi.conj(), np.einsum("kij,jr->kir", n.kraus, psi))


def refine_recovery(n: Channel, rho, recovery: Channel, iterations: int = 200,
                    rtol: float = 1e-15) -> tuple[Channel, float]:
    """Monotone ascent of ``F_rho(R o N, id)`` over recovery channels.

    ``F^2 = sum_kl |Tr(R_l M_k)|^2`` is convex in the stacked Kraus isometry
    of ``R``; each step replaces the isometry by the polar factor of the
    gradient, which maximises the linearisation and so never decreases ``F``.
    The Kraus count of the starting recovery is kept.
    """
    psi = purification_factor(rho)
    m = _overlap_blocks(n, psi)
    r = recovery.kraus.copy()
    shape = r.shape

    def value(ops):
        return float(np.sum(np.abs(np.einsum("lab,kba->lk", ops, m)) ** 2))

    best = value(r)
    for _ in range(iterations):
        z = np.einsum("lab,kba->lk", r, m)
        g = np.einsum("lk,kba->lab", z, m.conj()).reshape(shape[0] * shape[1], shape[2])
        u, _, vh = np.linalg.svd(g, full_matrices=False)
        cand = (u @ vh).reshape(shape)
        val = value(cand)
        if val <= best * (1.0 + rtol):
            if val > best:
                r, best = cand, val
            break
        r, best = cand, val
    refined = Channel(r)
    return refined, ent_fidelity_identity(refined.compose(n), rho, psi)


def minimax_recovery(n: Channel, p: CodeProjector, start: Channel, rounds: int = 8,
                     iterations: int = 300, starts: int = 16, seed: int = 0,
                     beta: float = 400.0) -> tuple[Channel, float]:
    """Raise the worst-case fidelity of ``start`` followed by ``n``.

    Each round finds the worst code state of the current recovery, adds it to
    a pool, and ascends a soft minimum of ``F^2`` over the pool with polar
    steps. A step is kept only when it raises the smallest pool value, halving
    the step length otherwise. Returns the recovery with the largest
    worst-case fidelity seen and that fidelity.
    """
    ident = Channel.identity(n.dim_in)
    pool = [_overlap_blocks(n, purification_factor(p.maximally_mixed()))]
    r = start.kraus.copy()
    shape = r.shape

    def values(ops):
        return np.array([np.sum(np.abs(np.einsum("lab,kba->lk", ops, m)) ** 2) for m in pool])

    best_ch, best_val = start, -np.inf
    for rnd in range(rounds + 1):
        ch = Channel(r)
        wc = worst_case_fidelity(ch.compose(n), ident, p, starts=starts, seed=seed + rnd)
        if wc.value > best_val:
            best_ch, best_val = ch, wc.value
        if rnd == rounds:
            break
        pool.append(_overlap_blocks(n, purification_factor(p.lift(wc.state))))
        vals = values(r)
        step = 1.0
        for _ in range(iterations):
            w = np.exp(-beta * (vals - vals.min()))
            w /= w.sum()
            g = np.zeros((shape[0] * shape[1], shape[2]), dtype=complex)
            for wj, m in zip(w, pool):
                z = np.einsum("lab,kba->lk", r, m)
                g += wj * np.einsum("lk,kba->lab", z, m.conj()).reshape(g.shape)
            flat = r.reshape(g.shape)
            u, _, vh = np.linalg.svd(flat + step * g / max(np.linalg.norm(g), 1e-300),
                                     full_matrices=False)
            cand = (u @ vh).reshape(shape)
            cvals = values(cand)
            if cvals.min() > vals.min():
                r, vals = cand, cvals
                step = min(2.0 * step, 1e3)
            else:
                step *= 0.5
                if step < 1e-10:
                    break
    return best_ch, float(best_val)


@dataclass(frozen=True)
class RecoveryResult:
    channel: Channel
    fidelity: float
    infidelity: float
    method: str


def best_recovery(n: Channel, p: CodeProjector, rho=None, iterations: int = 200) -> RecoveryResult:
    """Best of the Petz recovery and its refinement for the input ``rho``
    (default ``P / Tr P``)."""
    rho = p.maximally_mixed() if rho is None else np.asarray(rho, dtype=complex)
    psi = purification_factor(rho)
    petz = petz_recovery(n, p)
    cands = [(petz, "petz")]
    if iterations > 0:
        refined, _ = refine_recovery(n, rho, petz, iterations)
        cands.append((refined, "refined"))
    best = None
    for ch, name in cands:
        inf = ent_infidelity_identity(ch.compose(n), rho, psi)
        if best is None or inf < best.infidelity:
            best = RecoveryResult(ch, 1.0 - inf, inf, name)
    return best


# -- bound chain ----------------------------------------------------------------


@dataclass(frozen=True)
class TysonSample:
    delta: float
    fidelity: float

    def ok(self, tol: float) -> bool:
        return self.delta - tol <= self.fidelity <= np.sqrt(self.delta) + tol


@dataclass(frozen=True)
class BoundsReport:
    samples: list
    min_delta: float
    worst_case_fidelity: float
    tol: float

    @property
    def tyson_ok(self) -> bool:
        return all(s.ok(self.tol) for s in self.samples)

    @property
    def worst_lower_ok(self) -> bool:
        """``min Delta <= F^min`` for the best-found recovery (implies the lower bound on ``alpha^min``)."""
        return self.worst_case_fidelity >= self.min_delta - self.tol

    @property
    def worst_upper_ok(self) -> bool:
        """``F^min <= 3/4 min Delta + 1/4`` for the best-found recovery."""
        return self.worst_case_fidelity <= 0.75 * self.min_delta + 0.25 + self.tol

    @property
    def passed(self) -> bool:
        return self.tyson_ok and self.worst_lower_ok and self.worst_upper_ok


def sample_code_states(p: CodeProjector, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [p.lift(random_density(p.rank, rng)) for _ in range(count)]


def min_delta(n: Channel, p: CodeProjector, sigma, starts: int = 16, seed: int = 0,
              extra_states: Sequence[np.ndarray] = ()) -> float:
    """Best-found ``min_rho Delta_{rho,sigma}`` over code states, also
    evaluated on the supplied states."""
    wc = worst_case_fidelity(n, n, p, starts=starts, seed=seed,
                             objective=lambda psi: delta(n, psi @ dag(psi), sigma))
    vals = [wc.value] + [delta(n, r, sigma) for r in extra_states]
    return float(min(vals))


def bounds_check(n: Channel, p: CodeProjector, sigma=None, samples: int = 10, seed: int = 0,
                 tol: float = 1e-8, starts: int = 16, iterations: int = 200,
                 rounds: int = 6) -> BoundsReport:
    """Check the recovery fidelity against the two-sided ``Delta`` bounds.

    Per sampled ``rho``: ``Delta_{rho,rho} <= F <= sqrt(Delta_{rho,rho})`` for
    the best-found recovery. Worst case: the largest worst-case fidelity of the
    Petz recovery, its refinement and a max-min ascent from the better of the
    two (``rounds`` pool rounds), compared with ``min Delta`` and
    ``3/4 min Delta + 1/4``.
    """
    sigma = p.maximally_mixed() if sigma is None else np.asarray(sigma, dtype=complex)
    rng = np.random.default_rng(seed)
    states = sample_code_states(p, samples, rng)
    out = []
    for rho in states:
        rec = best_recovery(n, p, rho, iterations)
        out.append(TysonSample(delta(n, rho, rho), rec.fidelity))
    mdel = min_delta(n, p, sigma, starts=starts, seed=seed, extra_states=states)
    ident = Channel.identity(n.dim_in)
    worst, start = -np.inf, None
    for rec in (petz_recovery(n, p), best_recovery(n, p, None, iterations).channel):
        wc = worst_case_fidelity(rec.compose(n), ident, p, starts=starts, seed=seed)
        if wc.value > worst:
            worst, start = wc.value, rec
    if rounds > 0 and p.rank > 1:
        _, mm = minimax_recovery(n, p, start, rounds=rounds, starts=starts, seed=seed)
        worst = max(worst, mm)
    return BoundsReport(out, mdel, worst, tol)


# -- scaling of the optimal recovery fidelity ------------------------------------


def alpha_scaling(series: KrausSeries, p: CodeProjector, eps_grid=None,
                  exact: Callable[[float], Channel] | None = None, iterations: int = 200,
                  floor: float = FIT_FLOOR) -> ScalingFit:
    """Fit ``1 - F`` of the best-found recovery against ``eps`` on a log-log grid.

    ``F`` is the entanglement fidelity for ``P / Tr P``. The channel at each
    ``eps`` comes from ``exact`` when given, else from evaluating ``series``.
    """
    eps_grid = log_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if np.any(eps_grid <= 0):
        raise ValueError("eps grid must be positive")
    vals = []
    for eps in eps_grid:
        ch = exact(float(eps)) if exact is not None else evaluate(series, float(eps))
        vals.append(best_recovery(ch, p, None, iterations).infidelity)
    return fit_loglog(eps_grid, vals, floor)
