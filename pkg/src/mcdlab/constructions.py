"""Ensembles with nonlocal maximum confidence built from entanglement witnesses.

Single witness ``W = W+ - W-``: the two orthogonal states ``W-/Tr W-`` and
``W+/Tr W+`` with priors proportional to the traces give ``C_1 = 1`` and
``Q_1 <= 1/2``, since ``q rho_0 - eta_1 rho_1`` is proportional to ``W`` at
``q = 1/2``.

Witness family ``W_1..W_n`` whose sum ``W`` is positive definite: the states
``rho_i ∝ lambda_i W - eps W_i`` have closed-form confidences

    C_j = (lambda_j + eps delta_j) / (lambda - eps),   Q_j <= lambda_j / (lambda - eps),

with equality for ``Q_j`` when ``W_j`` is weakly optimal.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .cones import ConeVerdict, is_ew, is_weakly_optimal_ew
from .ensemble import Ensemble
from .linalg import HermitianOperator

__all__ = [
    "ConstructionError",
    "JordanDecomposition",
    "jordan_decompose",
    "ensemble_from_witness",
    "WitnessFamily",
    "ensemble_from_family",
    "predicted_max_confidence",
    "predicted_Q",
    "family_identity_residual",
    "witness_identity_residual",
]

CLAMP_TOL = 1e-9


class ConstructionError(ValueError):
    code = "construction"


class JordanDecomposition(NamedTuple):
    plus: HermitianOperator
    minus: HermitianOperator
    degenerate: bool  # no negative part


def jordan_decompose(W: HermitianOperator) -> JordanDecomposition:
    """Orthogonal PSD parts with ``W = W+ - W-`` from the spectral decomposition."""
    w, v = np.linalg.eigh(W.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    w = np.where(np.abs(w) <= 1e-14 * scale, 0.0, w)
    pos = (v * np.clip(w, 0, None)) @ v.conj().T
    neg = (v * np.clip(-w, 0, None)) @ v.conj().T
    degenerate = not np.any(w < 0)  # noise-level eigenvalues were zeroed above
    return JordanDecomposition(W.with_matrix(pos), W.with_matrix(neg), degenerate)


def _require_ew(W: HermitianOperator, verdict: ConeVerdict | None, what: str) -> ConeVerdict:
    verdict = verdict if verdict is not None else is_ew(W)
    if not verdict.inside:
        raise ConstructionError(f"{what} is not a certified EW ({verdict.status}: {verdict.reason})")
    return verdict


def ensemble_from_witness(W: HermitianOperator, verdict: ConeVerdict | None = None) -> Ensemble:
    """Two orthogonal states from the negative and positive parts of an EW.

    State 0 is ``W-/Tr W-`` with prior ``Tr W- / (Tr W+ + Tr W-)``; state 1
    is ``W+/Tr W+``.
    """
    _require_ew(W, verdict, "witness")
    plus, minus, degenerate = jordan_decompose(W)
    if degenerate:
        raise ConstructionError("witness has no negative part")
    tp, tm = plus.trace(), minus.trace()
    total = tp + tm
    return Ensemble((tm / total, tp / total), (minus / tm, plus / tp))


def witness_identity_residual(W: HermitianOperator, E: Ensemble, q: float) -> float:
    """Max-entry deviation of ``q rho_0 - eta_0 rho_0'`` from ``[q W+ + (q-1) W-]/(Tr W+ + Tr W-)``."""
    plus, minus, _ = jordan_decompose(W)
    lhs = q * E.rho0.matrix - E.weighted(0).matrix
    rhs = (q * plus.matrix + (q - 1) * minus.matrix) / (plus.trace() + minus.trace())
    return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True, eq=False)
class WitnessFamily:
    """EWs ``W_1..W_n`` and the spectral data of the family construction."""

    witnesses: tuple[HermitianOperator, ...]

    def __post_init__(self):
        ws = tuple(self.witnesses)
        if not ws:
            raise ConstructionError("empty witness family")
        dims = ws[0].dims
        if any(w.dims != dims for w in ws):
            raise ConstructionError("witnesses have different dims")
        object.__setattr__(self, "witnesses", ws)

    @classmethod
    def verified(cls, witnesses: Sequence[HermitianOperator]) -> "WitnessFamily":
        """Build after checking every member with :func:`is_ew`."""
        for i, w in enumerate(witnesses):
            _require_ew(w, None, f"witness {i}")
        return cls(tuple(witnesses))

    @property
    def n(self) -> int:
        return len(self.witnesses)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.witnesses[0].dims

    @cached_property
    def W(self) -> HermitianOperator:
        return HermitianOperator(sum(w.matrix for w in self.witnesses), self.dims)

    @cached_property
    def epsilon(self) -> float:
        return float(np.linalg.eigvalsh(self.W.matrix)[0])

    @cached_property
    def lambdas(self) -> tuple[float, ...]:
        return tuple(float(np.linalg.eigvalsh(w.matrix)[-1]) for w in self.witnesses)

    @property
    def lam(self) -> float:
        return float(sum(self.lambdas))

    @cached_property
    def deltas(self) -> tuple[float, ...]:
        """``|lambda_min(W^{-1/2} W_j W^{-1/2})|`` for each member."""
        if self.epsilon <= 0:
            raise ConstructionError(f"sum of witnesses is not positive definite (epsilon = {self.epsilon:.3g})")
        w, v = np.linalg.eigh(self.W.matrix)
        s = (v / np.sqrt(w)) @ v.conj().T
        return tuple(abs(float(np.linalg.eigvalsh(s @ wj.matrix @ s)[0])) for wj in self.witnesses)


def ensemble_from_family(F: WitnessFamily) -> Ensemble:
    """States ``rho_i ∝ lambda_i W - eps W_i`` with priors ``Tr(lambda_i W - eps W_i)/Tr(lambda W - eps W)``."""
    eps = F.epsilon
    if eps <= 0:
        raise ConstructionError(f"sum of witnesses is not positive definite (epsilon = {eps:.3g})")
    W = F.W.matrix
    ops = []
    for i, (lam_i, wi) in enumerate(zip(F.lambdas, F.witnesses)):
        a = lam_i * W - eps * wi.matrix
        a = 0.5 * (a + a.conj().T)
        w, v = np.linalg.eigh(a)
        if w[0] < -CLAMP_TOL * max(1.0, abs(w[-1])):
            raise ConstructionError(f"member {i}: lambda_i W - eps W_i has eigenvalue {w[0]:.3g}")
        ops.append((v * np.clip(w, 0, None)) @ v.conj().T)
    total = float(np.trace(F.lam * W - eps * W).real)
    priors = tuple(float(np.trace(a).real) / total for a in ops)
    states = tuple(HermitianOperator(a / np.trace(a).real, F.dims) for a in ops)
    return Ensemble(priors, states)


def family_identity_residual(F: WitnessFamily, E: Ensemble, j: int, q: float) -> float:
    """Deviation of ``q rho_0 - eta_j rho_j`` from ``([q(lam - eps) - lam_j] W + eps W_j) / Tr(lam W - eps W)``."""
    eps, lam = F.epsilon, F.lam
    W = F.W.matrix
    lhs = q * E.rho0.matrix - E.weighted(j).matrix
    rhs = ((q * (lam - eps) - F.lambdas[j]) * W + eps * F.witnesses[j].matrix) / np.trace(lam * W - eps * W).real
    return float(np.max(np.abs(lhs - rhs)))


def predicted_max_confidence(F: WitnessFamily, j: int) -> float:
    """``(lambda_j + eps delta_j) / (lambda - eps)``."""
    eps = F.epsilon
    return (F.lambdas[j] + eps * F.deltas[j]) / (F.lam - eps)


def predicted_Q(F: WitnessFamily, j: int, verdict: ConeVerdict | None = None) -> float | None:
    """``lambda_j / (lambda - eps)`` if ``W_j`` is certified weakly optimal, else ``None``."""
    Wj = F.witnesses[j]
    if verdict is None:
        ew = is_ew(Wj)
        if not ew.inside:
            return None
        verdict = is_weakly_optimal_ew(Wj, ew=ew)
    if not verdict.inside:
        return None
    return F.lambdas[j] / (F.lam - F.epsilon)
