"""State ensembles ``{eta_i, rho_i}``: validation, average state, JSON files."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .linalg import RANK_TOL, HermitianOperator, as_dims, ket, projector

__all__ = [
    "EnsembleError",
    "MalformedFileError",
    "DimensionMismatchError",
    "EmptyEnsembleError",
    "NonPositivePriorError",
    "PriorSumError",
    "UnitTraceError",
    "NotPSDStateError",
    "Ensemble",
    "AverageState",
    "average_state",
    "paper_example",
    "two_state_subensemble",
    "load",
    "save",
    "loads",
    "dumps",
    "digest",
    "load_operator",
    "save_operator",
    "operator_to_json",
    "operator_from_json",
]

PRIOR_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
# priors already normalized to within a few ulp are left untouched so that
# save/load round trips are bit-exact
_RENORMALIZE_FLOOR = 1e-14


class EnsembleError(ValueError):
    code = "invalid_ensemble"


class MalformedFileError(EnsembleError):
    code = "malformed"


class DimensionMismatchError(EnsembleError):
    code = "dimension_mismatch"


class EmptyEnsembleError(EnsembleError):
    code = "empty"


class NonPositivePriorError(EnsembleError):
    code = "nonpositive_prior"


class PriorSumError(EnsembleError):
    code = "prior_sum"


class UnitTraceError(EnsembleError):
    code = "unit_trace"


class NotPSDStateError(EnsembleError):
    code = "not_psd"


@dataclass(frozen=True)
class AverageState:
    rho0: HermitianOperator
    support_rank: int


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Priors and states of a discrimination task.

    Priors must be strictly positive and sum to one within ``1e-10`` (they
    are rescaled only inside that window); states must share ``dims``, be
    PSD and have unit trace within ``1e-10``.
    """

    priors: tuple[float, ...]
    states: tuple[HermitianOperator, ...]

    def __post_init__(self):
        priors = tuple(float(p) for p in self.priors)
        states = tuple(self.states)
        if not priors or len(priors) != len(states):
            raise EmptyEnsembleError("need at least one (prior, state) pair with matching counts")
        dims = states[0].dims
        for i, rho in enumerate(states):
            if not isinstance(rho, HermitianOperator):
                raise TypeError(f"state {i} is not a HermitianOperator")
            if rho.dims != dims:
                raise DimensionMismatchError(f"state {i} has dims {rho.dims}, expected {dims}")
        for i, p in enumerate(priors):
            if not (p > 0 and math.isfinite(p)):
                raise NonPositivePriorError(f"prior {i} = {p!r} is not strictly positive")
        total = math.fsum(priors)
        if abs(total - 1.0) > PRIOR_TOL:
            raise PriorSumError(f"priors sum to {total!r}, not 1")
        if abs(total - 1.0) > _RENORMALIZE_FLOOR:
            priors = tuple(p / total for p in priors)
        for i, rho in enumerate(states):
            tr = rho.trace()
            if abs(tr - 1.0) > TRACE_TOL:
                raise UnitTraceError(f"state {i} has trace {tr!r}")
            lmin = float(np.linalg.eigvalsh(rho.matrix)[0])
            if lmin < -PSD_TOL:
                raise NotPSDStateError(f"state {i} has eigenvalue {lmin:.3g}")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_items(cls, items: Iterable[tuple[float, HermitianOperator]]) -> "Ensemble":
        items = list(items)
        return cls(tuple(p for p, _ in items), tuple(s for _, s in items))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.states[0].dims

    @property
    def n(self) -> int:
        return len(self.priors)

    @property
    def items(self) -> list[tuple[float, HermitianOperator]]:
        return list(zip(self.priors, self.states))

    @cached_property
    def rho0(self) -> HermitianOperator:
        m = sum(p * rho.matrix for p, rho in self.items)
        return HermitianOperator(m, self.dims)

    def weighted(self, j: int) -> HermitianOperator:
        """``eta_j rho_j``."""
        return self.priors[j] * self.states[j]

    def conjugate(self, unitary: np.ndarray) -> "Ensemble":
        """Apply ``rho -> U rho U^dagger`` to every state."""
        u = np.asarray(unitary, dtype=complex)
        states = tuple(rho.with_matrix(u @ rho.matrix @ u.conj().T) for rho in self.states)
        return Ensemble(self.priors, states)

    def __eq__(self, other):
        if not isinstance(other, Ensemble):
            return NotImplemented
        return self.priors == other.priors and self.states == other.states

    __hash__ = None


def average_state(E: Ensemble, rank_tol: float = RANK_TOL) -> AverageState:
    rho0 = E.rho0
    w = np.linalg.eigvalsh(rho0.matrix)
    scale = float(np.max(np.abs(w)))
    return AverageState(rho0, int(np.sum(np.abs(w) > rank_tol * scale)))


def paper_example() -> Ensemble:
    """The qubit-qutrit ensemble with a nonlocal maximum confidence for rho_1.

    ``rho_1 = (|00><00| + |12><12|)/2``, ``rho_2 = (|02><02| + |10><10|)/2``,
    ``rho_3 = |xi><xi|`` with ``|xi> = (|00> + |12>)/sqrt(2)``; equal priors.
    """
    dims = (2, 3)

    def p(*digits):
        return projector(ket(dims, digits), dims)

    rho1 = 0.5 * (p(0, 0) + p(1, 2))
    rho2 = 0.5 * (p(0, 2) + p(1, 0))
    xi = (ket(dims, (0, 0)) + ket(dims, (1, 2))) / math.sqrt(2)
    rho3 = projector(xi, dims)
    third = 1.0 / 3.0
    return Ensemble((third, third, third), (rho1, rho2, rho3))


def two_state_subensemble(E: Ensemble, j: int, r: float) -> Ensemble:
    """``{r, rho_0; 1 - r, rho_j}`` built from ``E``'s average state and state ``j``."""
    if not 0 < r < 1:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if not 0 <= j < E.n:
        raise IndexError(f"state index {j} out of range")
    return Ensemble((r, 1.0 - r), (E.rho0, E.states[j]))


# --- JSON schema -----------------------------------------------------------


def _matrix_json(m: np.ndarray) -> tuple[list, list]:
    return m.real.tolist(), m.imag.tolist()


def _parse_matrix(obj: dict, side: int, where: str) -> np.ndarray:
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float) if "im" in obj else np.zeros_like(re)
    except KeyError as exc:
        raise MalformedFileError(f"{where}: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise MalformedFileError(f"{where}: matrix entries are not numeric ({exc})") from None
    if re.ndim != 2 or re.shape != im.shape:
        raise MalformedFileError(f"{where}: re/im must be equally shaped 2-D arrays")
    if re.shape != (side, side):
        raise DimensionMismatchError(f"{where}: matrix shape {re.shape} does not match dims (side {side})")
    if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
        raise MalformedFileError(f"{where}: non-finite entries")
    return re + 1j * im


def _parse_dims(obj: dict) -> tuple[int, ...]:
    if "dims" not in obj:
        raise MalformedFileError("missing key 'dims'")
    raw = obj["dims"]
    if not isinstance(raw, list) or not all(isinstance(d, int) and not isinstance(d, bool) for d in raw):
        raise MalformedFileError("'dims' must be a list of integers")
    try:
        return as_dims(raw)
    except ValueError as exc:
        raise MalformedFileError(str(exc)) from None


def ensemble_to_json(E: Ensemble) -> dict:
    items = []
    for p, rho in E.items:
        re, im = _matrix_json(rho.matrix)
        items.append({"prior": p, "re": re, "im": im})
    return {"dims": list(E.dims), "items": items}


def ensemble_from_json(obj) -> Ensemble:
    if not isinstance(obj, dict):
        raise MalformedFileError("top-level JSON value must be an object")
    dims = _parse_dims(obj)
    side = math.prod(dims)
    items = obj.get("items")
    if not isinstance(items, list):
        raise MalformedFileError("missing list 'items'")
    if not items:
        raise EmptyEnsembleError("ensemble has no items")
    priors, states = [], []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "prior" not in item:
            raise MalformedFileError(f"item {i}: expected object with 'prior', 're', 'im'")
        prior = item["prior"]
        if not isinstance(prior, (int, float)) or isinstance(prior, bool):
            raise MalformedFileError(f"item {i}: prior must be a number")
        priors.append(float(prior))
        states.append(HermitianOperator(_parse_matrix(item, side, f"item {i}"), dims))
    return Ensemble(tuple(priors), tuple(states))


def dumps(E: Ensemble, indent: int | None = None) -> str:
    return json.dumps(ensemble_to_json(E), indent=indent, sort_keys=True)


def loads(text: str) -> Ensemble:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"invalid JSON: {exc}") from None
    return ensemble_from_json(obj)


def digest(E: Ensemble) -> str:
    """SHA-256 of the canonical (compact, key-sorted) serialization."""
    canonical = json.dumps(ensemble_to_json(E), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def save(E: Ensemble, path) -> None:
    Path(path).write_text(dumps(E, indent=1) + "\n")


def load(path) -> Ensemble:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads(text)


def operator_to_json(H: HermitianOperator) -> dict:
    re, im = _matrix_json(H.matrix)
    return {"dims": list(H.dims), "re": re, "im": im}


def operator_from_json(obj) -> HermitianOperator:
    if not isinstance(obj, dict):
        raise MalformedFileError("operator JSON must be an object")
    dims = _parse_dims(obj)
    return HermitianOperator(_parse_matrix(obj, math.prod(dims), "operator"), dims)


def save_operator(H: HermitianOperator, path) -> None:
    Path(path).write_text(json.dumps(operator_to_json(H), indent=1, sort_keys=True) + "\n")


def load_operator(path) -> HermitianOperator:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise MalformedFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"invalid JSON: {exc}") from None
    return operator_from_json(obj)

