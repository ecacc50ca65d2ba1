"""Maximum confidence and its separable (LOCC) counterpart.

For an ensemble ``{eta_i, rho_i}`` with average state ``rho_0``:

* ``C_j = max_M eta_j Tr(rho_j M) / Tr(rho_0 M)`` over all ``M >= 0``, which is
  the top eigenvalue of ``rho_0^{-1/2} eta_j rho_j rho_0^{-1/2}``.
* ``Q_j`` is the same maximum over separable ``M`` and equals
  ``min{q : q rho_0 - eta_j rho_j block positive}``.

``Q_j`` is bracketed: the PPT relaxation gives an upper bound from an SDP and
product vectors found by see-saw give a lower bound.  The two coincide in the
exact dimensions.  State indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import (
    CONE_TOL,
    ConeVerdict,
    PreconditionError,
    exactness_scope,
    is_ew,
    is_weakly_optimal_ew,
    min_product_expectation,
)
from .ensemble import Ensemble
from .linalg import (
    HermitianOperator,
    bipartitions,
    partial_transpose_matrix,
    inv_sqrt_on_support,
    support_basis,
)
from .sdp import MAX_BLOCK_DIM, MAX_CONSTRAINTS, SdpProblem, SdpSolution, ppt_coupling, solve

__all__ = [
    "GAP_TOL",
    "BRACKET_TOL",
    "max_confidence",
    "max_confidence_bisection",
    "mc_measurement_operator",
    "confidence_of",
    "LoccConfidence",
    "locc_confidence",
    "sigma_certificate",
    "NonlocalityGap",
    "nonlocality_gap",
    "ConfidenceReport",
    "confidence_report",
    "two_qubit_weak_optimality_check",
    "InvariantError",
]

GAP_TOL = 1e-6
BRACKET_TOL = 1e-6
SIGMA_TOL = 1e-8
_DENOM_FLOOR = 1e-12
_TRACE_DOUBLINGS = 6


class InvariantError(RuntimeError):
    """A result contradicts a guaranteed mathematical relation."""


def _check_index(E: Ensemble, j: int) -> None:
    if not 0 <= j < E.n:
        raise IndexError(f"state index {j} out of range for {E.n} states")


# --- maximum confidence ------------------------------------------------------


def _whitened(E: Ensemble, j: int) -> np.ndarray:
    s = inv_sqrt_on_support(E.rho0).matrix
    a = s @ E.weighted(j).matrix @ s
    return 0.5 * (a + a.conj().T)


def max_confidence(E: Ensemble, j: int) -> float:
    """Largest eigenvalue of ``rho_0^{-1/2} eta_j rho_j rho_0^{-1/2}`` (pseudo-inverse on the support)."""
    _check_index(E, j)
    return float(np.linalg.eigvalsh(_whitened(E, j))[-1])


def max_confidence_bisection(E: Ensemble, j: int, tol: float = 1e-9) -> float:
    """``min{q : q rho_0 - eta_j rho_j >= 0}`` by bisection on ``supp(rho_0)``."""
    _check_index(E, j)
    B = support_basis(E.rho0)
    r0 = B.conj().T @ E.rho0.matrix @ B
    a = B.conj().T @ E.weighted(j).matrix @ B

    def psd(q):
        return np.linalg.eigvalsh(q * r0 - a)[0] >= 0

    lo, hi = 0.0, 1.0
    while not psd(hi):  # only reachable through rounding
        hi *= 1 + 1e-9
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if psd(mid):
            hi = mid
        else:
            lo = mid
    return hi


def confidence_of(E: Ensemble, j: int, M) -> float:
    """``eta_j Tr(rho_j M) / Tr(rho_0 M)``, the confidence of outcome ``M`` for state ``j``."""
    M = np.asarray(M, dtype=complex)
    den = float(np.vdot(E.rho0.matrix, M).real)
    if den <= 0:
        raise ValueError("Tr(rho_0 M) must be positive")
    return float(np.vdot(E.weighted(j).matrix, M).real) / den


def mc_measurement_operator(E: Ensemble, j: int, tol: float = 1e-9) -> HermitianOperator:
    """Measurement operator attaining ``C_j``, scaled so ``0 <= M <= 1``."""
    _check_index(E, j)
    w, v = np.linalg.eigh(_whitened(E, j))
    top = v[:, w >= w[-1] - tol * max(1.0, abs(w[-1]))]
    s = inv_sqrt_on_support(E.rho0).matrix
    m = s @ top @ top.conj().T @ s
    m = 0.5 * (m + m.conj().T)
    m /= np.linalg.eigvalsh(m)[-1]
    return HermitianOperator(m, E.dims)


# --- separable confidence --------------------------------------------------------


@dataclass
class LoccConfidence:
    """Bracket ``Q_lower <= Q_j <= Q_upper``.

    Iterates as ``(Q_lower, Q_upper, exact, M)``.  ``M`` is the SDP optimizer
    normalized to ``Tr(rho_0 M) = 1`` (``None`` when no SDP was solved) and
    ``product_factors`` the local factors of the best product vector.
    """

    Q_lower: float
    Q_upper: float
    exact: bool
    M: np.ndarray | None
    reason: str = ""
    product_factors: list[np.ndarray] | None = field(default=None, repr=False)
    solver_status: str = "none"
    trace_bound: float | None = None

    def __iter__(self):
        return iter((self.Q_lower, self.Q_upper, self.exact, self.M))


def _q_problem(E: Ensemble, j: int, partitions, T: float) -> SdpProblem:
    # max eta_j Tr(rho_j M)  s.t.  Tr(rho_0 M) = 1, Tr(M)/T + s = 1, N_S = M^{Gamma_S}; M, N_S, s >= 0
    D = math.prod(E.dims)
    k = len(partitions)
    A_main, A_parts = ppt_coupling(E.dims, partitions)
    nrow = A_main.shape[0]
    head_M = np.stack([E.rho0.matrix, np.eye(D, dtype=complex) / T])
    A = [np.concatenate([head_M, A_main])]
    for a in A_parts:
        A.append(np.concatenate([np.zeros((2, D, D), dtype=complex), a]))
    slack = np.zeros((2 + nrow, 1, 1), dtype=complex)
    slack[1, 0, 0] = 1.0  # s in [0, 1] keeps the slack on the scale of the other blocks
    A.append(slack)
    b = np.zeros(2 + nrow)
    b[0] = b[1] = 1.0
    C = [E.weighted(j).matrix] + [np.zeros((D, D), dtype=complex)] * k + [np.zeros((1, 1), dtype=complex)]
    return SdpProblem(tuple([D] * (1 + k) + [1]), tuple(C), tuple(A), b)


def _q_fits(D: int, k: int) -> bool:
    return 2 + k * D * D <= MAX_CONSTRAINTS and D * (1 + k) + 1 <= MAX_BLOCK_DIM


def _ppt_upper(E: Ensemble, j: int) -> tuple[float, np.ndarray | None, str, str, float | None]:
    partitions = bipartitions(len(E.dims))
    D = math.prod(E.dims)
    if not _q_fits(D, len(partitions)):
        return max_confidence(E, j), None, "skipped", "PPT program exceeds solver size limits", None
    lam = np.linalg.eigvalsh(E.rho0.matrix)
    lam_min = float(lam[lam > 1e-10 * lam[-1]][0])
    T = 2.0 / lam_min
    sol: SdpSolution | None = None
    for _ in range(_TRACE_DOUBLINGS + 1):
        sol = solve(_q_problem(E, j, partitions, T))
        if not sol.optimal:
            break
        # y[1] is the multiplier of the normalized trace row, i.e. w T
        if float(sol.y[1]) <= 1e-9 * max(1.0, abs(sol.dual_objective)):
            break
        T *= 2.0
    assert sol is not None
    M = sol.X[0] / max(float(np.vdot(E.rho0.matrix, sol.X[0]).real), 1e-300)
    if not sol.optimal:
        return max_confidence(E, j), M, sol.status, f"PPT program {sol.status}", T
    if float(sol.y[1]) > 1e-9 * max(1.0, abs(sol.dual_objective)):
        # the truncated optimum is no upper bound on Q_j; fall back to C_j
        return max_confidence(E, j), M, "trace_bound_active", "trace bound remained active", T
    return float(sol.dual_objective), M, "optimal", "", T


def _product_seeds(M: np.ndarray | None, dims, count: int = 8) -> list[list[np.ndarray]]:
    # best product approximations of the leading eigenvectors of M
    if M is None:
        return []
    w, v = np.linalg.eigh(M)
    seeds = []
    for idx in np.argsort(w)[::-1][:count]:
        if w[idx] <= 1e-9 * max(w[-1], 1e-300):
            break
        t = v[:, idx].reshape(dims)
        factors = []
        for k in range(len(dims)):
            unfold = np.moveaxis(t, k, 0).reshape(dims[k], -1)
            u, _, _ = np.linalg.svd(unfold, full_matrices=False)
            factors.append(u[:, 0])
        seeds.append(factors)
    return seeds


def _kron(factors) -> np.ndarray:
    out = np.asarray(factors[0], dtype=complex)
    for a in factors[1:]:
        out = np.kron(out, a)
    return out


def _ratio(E: Ensemble, j: int, factors) -> float | None:
    v = _kron(factors)
    v = v / np.linalg.norm(v)
    den = float(np.vdot(v, E.rho0.matrix @ v).real)
    if den <= _DENOM_FLOOR:
        return None
    return float(np.vdot(v, E.weighted(j).matrix @ v).real) / den


def _product_lower(E: Ensemble, j: int, seeds, seed: int, max_rounds: int = 40):
    eta = E.priors[j]
    best, best_f = eta, None
    for f in seeds:
        r = _ratio(E, j, f)
        if r is not None and r > best:
            best, best_f = r, f
    r = best
    init = ([best_f] if best_f is not None else []) + list(seeds)
    for _ in range(max_rounds):
        H = r * E.rho0 - E.weighted(j)
        H = H / H.norm() if H.norm() > 0 else H
        ss = min_product_expectation(H, seed=seed, init=init)
        cand = _ratio(E, j, ss.factors)
        if cand is not None and cand > best:
            best, best_f = cand, ss.factors
        if cand is None or cand <= r + 1e-14:
            break
        r = cand
        init = [ss.factors] + list(seeds)
    return best, best_f


def locc_confidence(E: Ensemble, j: int, seed: int = 0) -> LoccConfidence:
    """Bracket the separable maximum confidence ``Q_j``.

    ``Q_upper`` is the optimum of ``max eta_j Tr(rho_j M)`` over ``M >= 0``
    positive under every partial transpose with ``Tr(rho_0 M) = 1``; a slack
    trace bound keeps the program well posed when ``rho_0`` is singular and is
    doubled until inactive.  ``Q_lower`` maximizes the confidence over product
    vectors (Dinkelbach iterations over see-saw minima), floored at
    ``eta_j``.  If the SDP is not certified (stall, size limits, trace bound
    still active) ``Q_upper`` falls back to ``C_j``.  ``exact`` requires an
    exact dimension and a bracket narrower than ``1e-6``.
    """
    _check_index(E, j)
    if len(E.dims) == 1:
        C = max_confidence(E, j)
        return LoccConfidence(C, C, True, mc_measurement_operator(E, j).matrix, "single party", None, "none")
    Q_up, M, status, reason, T = _ppt_upper(E, j)
    Q_lo, factors = _product_lower(E, j, _product_seeds(M, E.dims), seed)
    # a product ratio never exceeds C_j; any excess is roundoff from a tiny Tr(rho_0 P)
    Q_lo = min(Q_lo, max_confidence(E, j))
    scope = exactness_scope(E.dims)
    # Q_j <= C_j holds regardless of the solver, so a product vector reaching C_j closes the bracket
    exact = scope.is_exact and Q_up - Q_lo <= BRACKET_TOL
    if exact and status != "optimal":
        reason = f"{reason}; bracket closed by a product vector attaining C_j"
    elif not reason:
        reason = scope.reason if not scope.is_exact else ("" if exact else "bracket did not close")
    return LoccConfidence(Q_lo, Q_up, exact, M, reason, factors, status, T)


def _is_ppt_state(s: np.ndarray, dims, tol: float) -> bool:
    ok = np.linalg.eigvalsh(s)[0] >= -tol
    for S in bipartitions(len(dims)):
        ok &= np.linalg.eigvalsh(partial_transpose_matrix(s, dims, S))[0] >= -tol
    return bool(ok)


def sigma_certificate(
    E: Ensemble, j: int, q: float, locc: LoccConfidence | None = None, tol: float = SIGMA_TOL
) -> HermitianOperator | None:
    """Separable ``sigma`` with ``Tr[sigma(q rho_0 - eta_j rho_j)] = 0`` and ``Tr(sigma rho_0) > 0``.

    Such a state exists only at ``q = Q_j``.  There it is taken from the SDP
    optimizer (``M / Tr M``), falling back to the best product vector; both
    conditions are re-verified.  For ``q > Q_upper + 1e-6`` the result is
    ``None``.  Values ``q < Q_upper - 1e-6`` are not known to give a block
    positive operator and raise :class:`PreconditionError`.

    Separability of an SDP optimizer is implied by PPT only in the exact
    dimensions; elsewhere only product-vector certificates are returned.
    """
    _check_index(E, j)
    locc = locc if locc is not None else locc_confidence(E, j)
    if q < locc.Q_upper - BRACKET_TOL:
        raise PreconditionError(f"q = {q} lies below the certified bracket Q_upper = {locc.Q_upper}")
    if q > locc.Q_upper + BRACKET_TOL:
        return None
    H = q * E.rho0.matrix - E.weighted(j).matrix
    scale = max(np.linalg.norm(H), 1e-300)

    def valid(s):
        return (
            abs(np.trace(s).real - 1) <= tol
            and abs(np.vdot(s, H).real) <= tol * max(1.0, scale)
            and np.vdot(s, E.rho0.matrix).real > _DENOM_FLOOR
        )

    candidates = []
    if locc.M is not None and exactness_scope(E.dims).is_exact:
        s = locc.M / np.trace(locc.M).real
        if _is_ppt_state(s, E.dims, tol):
            candidates.append(s)
    if locc.product_factors is not None:
        v = _kron(locc.product_factors)
        v = v / np.linalg.norm(v)
        candidates.append(np.outer(v, v.conj()))
    for s in candidates:
        if valid(s):
            return HermitianOperator(s, E.dims)
    return None


# --- nonlocality -----------------------------------------------------------------


@dataclass
class NonlocalityGap:
    """``gap = C_j - Q_upper`` with EW probes ``(q, verdict)`` inside ``[Q_upper, C_j)``."""

    gap: float
    probe_points: list[tuple[float, ConeVerdict]]
    nonlocal_: bool | None
    reason: str = ""


def nonlocality_gap(
    E: Ensemble,
    j: int,
    locc: LoccConfidence | None = None,
    C: float | None = None,
    seed: int = 0,
    gap_tol: float | None = None,
) -> NonlocalityGap:
    """Certify ``Q_j < C_j`` through EW verdicts on ``q rho_0 - eta_j rho_j``.

    Probes ``q = Q_upper`` and ``q = (Q_upper + C_j)/2``.  ``nonlocal_`` is
    ``True`` when the gap exceeds ``1e-6`` and both probes are EWs, ``False``
    when ``C_j - Q_lower <= 1e-6`` or (exact mode) a probe is not an EW, and
    ``None`` otherwise.
    """
    _check_index(E, j)
    gap_tol = GAP_TOL if gap_tol is None else gap_tol
    C = max_confidence(E, j) if C is None else C
    locc = locc if locc is not None else locc_confidence(E, j, seed=seed)
    gap = C - locc.Q_upper
    probes = []
    for q in (locc.Q_upper, 0.5 * (locc.Q_upper + C)):
        probes.append((q, is_ew(q * E.rho0 - E.weighted(j), seed=seed)))
    all_ew = all(v.inside for _, v in probes)
    if gap > gap_tol and all_ew:
        return NonlocalityGap(gap, probes, True, "EW on both probes")
    if C - locc.Q_lower <= gap_tol:
        return NonlocalityGap(gap, probes, False, "C_j attained by a product measurement")
    if locc.exact:
        return NonlocalityGap(gap, probes, False, "exact bracket but probes are not EWs")
    return NonlocalityGap(gap, probes, None, locc.reason or "inconclusive")


@dataclass
class ConfidenceReport:
    j: int
    C_j: float
    Q_lower: float
    Q_upper: float
    exact: bool
    nonlocal_: bool | None
    ew_certificate: ConeVerdict | None = field(default=None, repr=False)
    sigma_certificate: HermitianOperator | None = field(default=None, repr=False)
    mc_operator: HermitianOperator | None = field(default=None, repr=False)
    gap: NonlocalityGap | None = field(default=None, repr=False)
    locc: LoccConfidence | None = field(default=None, repr=False)
    C_bisection: float | None = None

    def check_invariants(self, eta: float, tol: float = 1e-8) -> list[str]:
        """Violated ordering relations (empty when all hold)."""
        bad = []
        chain = [("eta_j", eta), ("Q_lower", self.Q_lower), ("Q_upper", self.Q_upper), ("C_j", self.C_j), ("1", 1.0)]
        for (na, a), (nb, b) in zip(chain, chain[1:]):
            if a > b + tol:
                bad.append(f"{na} = {a!r} > {nb} = {b!r}")
        if self.exact and self.Q_upper - self.Q_lower > BRACKET_TOL:
            bad.append("exact bracket wider than 1e-6")
        if self.C_bisection is not None and abs(self.C_bisection - self.C_j) > tol:
            bad.append("bisection and eigenvalue C_j disagree")
        return bad


def confidence_report(E: Ensemble, j: int, seed: int = 0, gap_tol: float | None = None) -> ConfidenceReport:
    """All confidence quantities for state ``j``."""
    _check_index(E, j)
    C = max_confidence(E, j)
    Cb = max_confidence_bisection(E, j)
    locc = locc_confidence(E, j, seed=seed)
    gap = nonlocality_gap(E, j, locc, C, seed=seed, gap_tol=gap_tol)
    ew = gap.probe_points[0][1] if gap.probe_points else None
    sigma = sigma_certificate(E, j, locc.Q_upper, locc) if len(E.dims) > 1 else None
    return ConfidenceReport(
        j=j,
        C_j=C,
        Q_lower=locc.Q_lower,
        Q_upper=locc.Q_upper,
        exact=locc.exact,
        nonlocal_=gap.nonlocal_,
        ew_certificate=ew,
        sigma_certificate=sigma,
        mc_operator=mc_measurement_operator(E, j),
        gap=gap,
        locc=locc,
        C_bisection=Cb,
    )


def two_qubit_weak_optimality_check(E: Ensemble, j: int, q: float, seed: int = 0) -> bool:
    """Compare both sides of the two-qubit weak-optimality biconditional.

    Left: ``q rho_0 - eta_j rho_j`` is a weakly optimal EW.  Right:
    ``q = Q_j`` (within 1e-6) and ``Q_j < C_j`` (gap above 1e-6).  Returns
    ``True`` when both sides agree.  For singular ``rho_0`` it also asserts
    ``C_j = Q_j``; a violation raises :class:`InvariantError`.
    """
    if tuple(E.dims) != (2, 2):
        raise ValueError(f"two-qubit check needs dims (2, 2), got {E.dims}")
    _check_index(E, j)
    C = max_confidence(E, j)
    locc = locc_confidence(E, j, seed=seed)
    rank = int(np.sum(np.linalg.eigvalsh(E.rho0.matrix) > 1e-10))
    if rank < 4 and C - locc.Q_upper > GAP_TOL:
        raise InvariantError(f"singular rho_0 but C_j - Q_j = {C - locc.Q_upper:.3g}")
    H = q * E.rho0 - E.weighted(j)
    ew = is_ew(H, seed=seed)
    left = bool(ew.inside and is_weakly_optimal_ew(H, CONE_TOL, seed=seed, ew=ew).inside)
    right = abs(q - locc.Q_upper) <= BRACKET_TOL and C - locc.Q_upper > GAP_TOL
    return left == right
