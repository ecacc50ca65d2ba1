"""Minimum-error discrimination and its link to separable maximum confidence.

``p_G`` is the optimal average success probability over all measurements.
For separable measurements only the regime ``p_SEP = eta_j`` is decided: it
holds, with ``p_SEP < p_G``, exactly when every ``eta_j rho_j - eta_i rho_i``
is block positive and at least one is an EW.  A nonlocal maximum confidence
``Q_j < C_j`` of ``E`` corresponds to this regime for the two-state ensemble
``{r, rho_0; 1 - r, rho_j}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import ConeVerdict, exactness_scope, is_ew
from .confidence import GAP_TOL, ConfidenceReport, confidence_report
from .ensemble import Ensemble, two_state_subensemble
from .linalg import HermitianOperator, trace_norm
from .sdp import SdpProblem, SolverStallError, hermitian_basis, solve

__all__ = [
    "guessing_probability",
    "helstrom_two_state",
    "MinErrReport",
    "prop1_check",
    "TwoStateCheck",
    "crosscheck_theorem5",
]

EQUALS_PRIOR, OTHER, UNKNOWN = "equals_prior_j", "other", "unknown"


def _guessing_problem(E: Ensemble) -> SdpProblem:
    # max sum_i eta_i Tr(rho_i M_i)  s.t.  sum_i M_i = 1 (one row per Hermitian basis element)
    D = math.prod(E.dims)
    basis = hermitian_basis(D)
    b = np.array([np.trace(B).real for B in basis])
    C = tuple(E.weighted(i).matrix for i in range(E.n))
    A = tuple(basis.copy() for _ in range(E.n))
    return SdpProblem(tuple([D] * E.n), C, A, b)


def guessing_probability(E: Ensemble) -> float:
    """Optimal success probability; equals ``min Tr K`` over ``K >= eta_i rho_i``.

    Raises :class:`SolverStallError` if the SDP is not certified optimal.
    """
    if E.n == 1:
        return 1.0
    sol = solve(_guessing_problem(E))
    if not sol.optimal:
        raise SolverStallError(f"guessing-probability SDP {sol.status}")
    return 0.5 * (sol.primal_objective + sol.dual_objective)


def helstrom_two_state(eta1: float, rho1: HermitianOperator, eta2: float, rho2: HermitianOperator) -> float:
    """``(1 + ||eta1 rho1 - eta2 rho2||_1) / 2``."""
    if abs(eta1 + eta2 - 1.0) > 1e-10:
        raise ValueError(f"priors must sum to 1, got {eta1 + eta2!r}")
    return 0.5 * (1.0 + trace_norm(eta1 * rho1 - eta2 * rho2))


@dataclass
class MinErrReport:
    """Block positivity of ``eta_j rho_j - eta_i rho_i`` for every ``i``.

    ``prop1_blockpos_flags[i]`` is ``None`` when undecided.  ``p_SEP_status``
    is ``equals_prior_j`` (``p_SEP = eta_j < p_G``), ``other`` or
    ``unknown`` (outside the exact dimensions).
    """

    j: int
    p_G: float | None
    p_SEP_status: str
    prop1_blockpos_flags: list[bool | None]
    prop1_ew_exists: bool | None
    verdicts: list[ConeVerdict] = field(default_factory=list, repr=False)


def _flag(v: ConeVerdict) -> bool | None:
    return True if v.inside else False if v.outside else None


def prop1_check(E: Ensemble, j: int, with_p_G: bool = True, seed: int = 0) -> MinErrReport:
    """Decide ``p_SEP = eta_j < p_G`` through block positivity of the weighted differences."""
    if not 0 <= j < E.n:
        raise IndexError(f"state index {j} out of range for {E.n} states")
    flags, ews, verdicts = [], [], []
    for i in range(E.n):
        H = E.weighted(j) - E.weighted(i)
        ew = is_ew(H, seed=seed)
        bp = ew.certificate["block_positive"]
        verdicts.append(bp)
        flags.append(_flag(bp))
        ews.append(_flag(ew))
    ew_exists = True if any(e is True for e in ews) else (False if all(e is False for e in ews) else None)
    if not exactness_scope(E.dims).is_exact:
        status = UNKNOWN
    elif all(f is True for f in flags) and ew_exists is True:
        status = EQUALS_PRIOR
    else:
        status = OTHER
    p_G = guessing_probability(E) if with_p_G else None
    return MinErrReport(j, p_G, status, flags, ew_exists, verdicts)


@dataclass
class TwoStateCheck:
    """Outcome of the two-state cross-check; truthy when certified."""

    certified: bool
    skipped: str = ""
    r: float | None = None
    q: float | None = None
    p_G: float | None = None
    p_G_helstrom: float | None = None
    p_SEP_status: str | None = None
    reverse_q: float | None = None
    reverse_ew: ConeVerdict | None = field(default=None, repr=False)
    probes: list[dict] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.certified

    @property
    def reverse_certified(self) -> bool:
        return self.reverse_ew is not None and self.reverse_ew.inside


def _probe(E: Ensemble, j: int, q: float, seed: int) -> dict:
    eta = E.priors[j]
    r = q / (q + eta)
    Er = two_state_subensemble(E, j, r)
    rep = prop1_check(Er, 0, seed=seed)
    hel = helstrom_two_state(Er.priors[0], Er.states[0], Er.priors[1], Er.states[1])
    ok = rep.p_SEP_status == EQUALS_PRIOR and rep.p_G - r > 1e-9
    # converse: recover q from r and test the EW property on E itself
    q_back = r * eta / (1.0 - r)
    ew = is_ew(q_back * E.rho0 - E.weighted(j), seed=seed)
    return {"q": q, "r": r, "p_G": rep.p_G, "p_G_helstrom": hel, "p_SEP_status": rep.p_SEP_status,
            "certified": ok, "reverse_q": q_back, "reverse_ew": ew}


def crosscheck_theorem5(
    E: Ensemble, j: int, report: ConfidenceReport | None = None, seed: int = 0
) -> TwoStateCheck:
    """Translate a nonlocal maximum confidence of state ``j`` into minimum-error terms.

    Requires ``report.nonlocal_ is True``.  Probes ``r = q/(q + eta_j)`` at
    ``q = Q_upper`` and at the midpoint of ``[Q_upper, C_j]``; for each, the
    sub-ensemble ``{r, rho_0; 1 - r, rho_j}`` must satisfy
    ``p_SEP = r < p_G``.  The converse maps ``r`` back to
    ``q = r eta_j / (1 - r)`` and checks that ``q rho_0 - eta_j rho_j`` is an
    EW.  The first certified probe is reported.
    """
    report = report if report is not None else confidence_report(E, j, seed=seed)
    if report.nonlocal_ is not True:
        why = "no certified gap" if report.nonlocal_ is False else "nonlocality undecided"
        return TwoStateCheck(False, skipped=f"{why} (C_j - Q_upper = {report.C_j - report.Q_upper:.3g})")
    if report.C_j - report.Q_upper <= GAP_TOL:
        return TwoStateCheck(False, skipped="gap below threshold")
    probes = []
    for q in (report.Q_upper, 0.5 * (report.Q_upper + report.C_j)):
        probes.append(_probe(E, j, q, seed))
    chosen = next((p for p in probes if p["certified"]), probes[0])
    listing = [{k: v for k, v in p.items() if k != "reverse_ew"} | {"reverse_ew": p["reverse_ew"].status}
               for p in probes]
    return TwoStateCheck(
        certified=bool(chosen["certified"]),
        r=chosen["r"],
        q=chosen["q"],
        p_G=chosen["p_G"],
        p_G_helstrom=chosen["p_G_helstrom"],
        p_SEP_status=chosen["p_SEP_status"],
        reverse_q=chosen["reverse_q"],
        reverse_ew=chosen["reverse_ew"],
        probes=listing,
    )
