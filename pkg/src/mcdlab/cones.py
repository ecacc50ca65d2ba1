"""Cone membership with certificates: PSD, PPT, separable, block positive, EW.

Verdicts are three-valued.  In the Peres-Horodecki regime (bipartite 2x2 and
2x3) separability and block positivity are decided exactly through PPT
semidefinite programs; elsewhere the tests are one-sided and may return
``"unknown"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .linalg import HermitianOperator, bipartitions, partial_transpose_matrix
from .sdp import MAX_BLOCK_DIM, MAX_CONSTRAINTS, min_ppt_expectation

__all__ = [
    "CONE_TOL",
    "PSD_TOL",
    "ConeVerdict",
    "ExactnessScope",
    "PreconditionError",
    "exactness_scope",
    "is_psd",
    "is_ppt",
    "SeesawResult",
    "min_product_expectation",
    "is_block_positive",
    "is_separable",
    "is_ew",
    "is_weakly_optimal_ew",
    "verify_verdict",
]

CONE_TOL = 1e-8
PSD_TOL = 1e-10
SEESAW_RESTARTS = 64
SEESAW_SWEEPS = 200

INSIDE, OUTSIDE, UNKNOWN = "inside", "outside", "unknown"


class PreconditionError(ValueError):
    pass


@dataclass
class ConeVerdict:
    status: str
    certificate: dict[str, Any] | None = field(default=None, repr=False)
    reason: str = ""

    @property
    def inside(self) -> bool:
        return self.status == INSIDE

    @property
    def outside(self) -> bool:
        return self.status == OUTSIDE

    @property
    def unknown(self) -> bool:
        return self.status == UNKNOWN


@dataclass(frozen=True)
class ExactnessScope:
    is_exact: bool
    reason: str


def exactness_scope(dims: Sequence[int]) -> ExactnessScope:
    dims = tuple(dims)
    if len(dims) == 2 and set(dims) <= {2, 3} and math.prod(dims) <= 6:
        return ExactnessScope(True, f"{dims[0]}x{dims[1]}: PPT is equivalent to separability")
    if len(dims) != 2:
        return ExactnessScope(False, f"{len(dims)} parties: PPT is only necessary for separability")
    return ExactnessScope(False, f"{dims[0]}x{dims[1]}: PPT is only necessary for separability")


def _unit(H: HermitianOperator) -> tuple[HermitianOperator, float]:
    scale = H.norm()
    return (H / scale if scale > 0 else H), scale


def is_psd(H: HermitianOperator, tol: float = PSD_TOL) -> ConeVerdict:
    """Inside iff ``lambda_min >= -tol * ||H||`` (spectral norm)."""
    w, v = np.linalg.eigh(H.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w[0] >= -tol * scale:
        return ConeVerdict(INSIDE, {"kind": "min_eigenvalue", "value": float(w[0])})
    cert = {"kind": "negative_eigenvector", "vector": v[:, 0], "eigenvalue": float(w[0])}
    return ConeVerdict(OUTSIDE, cert, "negative eigenvalue")


def is_ppt(H: HermitianOperator, tol: float = CONE_TOL, partitions=None) -> ConeVerdict:
    """PSD under every listed partial transpose (all bipartitions by default)."""
    Hn, _ = _unit(H)
    if partitions is None:
        partitions = bipartitions(len(H.dims))
    for S in partitions:
        pt = HermitianOperator(partial_transpose_matrix(Hn.matrix, H.dims, S), H.dims)
        v = is_psd(pt, tol)
        if v.outside:
            cert = dict(v.certificate, kind="negative_pt_eigenvector", subsystems=list(S))
            return ConeVerdict(OUTSIDE, cert, f"partial transpose on {list(S)} is not PSD")
    return ConeVerdict(INSIDE, None)


# --- see-saw over product vectors -------------------------------------------


class SeesawResult(NamedTuple):
    value: float
    vector: np.ndarray
    factors: list[np.ndarray]
    history: np.ndarray  # (sweeps + 1, restarts): value of each restart after each sweep


def _contract_plan(m: int, k: int):
    # sublist einsum: conj(a_l)[r, i_l], T[i..., j...], a_l[r, j_l] for l != k
    R = 2 * m
    ops = []
    for l in range(m):
        if l != k:
            ops.append(("bra", l, [R, l]))
    ops.append(("T", None, list(range(2 * m))))
    for l in range(m):
        if l != k:
            ops.append(("ket", l, [R, m + l]))
    return ops, [R, k, m + k]


def _random_factors(rng, dims, restarts):
    out = []
    for d in dims:
        a = rng.normal(size=(restarts, d)) + 1j * rng.normal(size=(restarts, d))
        out.append(a / np.linalg.norm(a, axis=1, keepdims=True))
    return out


def _expectations(T: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    m = len(factors)
    R = 2 * m
    args = []
    for l, a in enumerate(factors):
        args += [a.conj(), [R, l]]
    args += [T, list(range(2 * m))]
    for l, a in enumerate(factors):
        args += [a, [R, m + l]]
    return np.einsum(*args, [R]).real


def min_product_expectation(
    H: HermitianOperator,
    restarts: int = SEESAW_RESTARTS,
    max_iters: int = SEESAW_SWEEPS,
    seed: int = 0,
    init: Sequence[Sequence[np.ndarray]] | None = None,
    tol: float = 1e-12,
) -> SeesawResult:
    """Upper bound on ``min <a_1...a_m| H |a_1...a_m>`` over product vectors.

    Alternating minimization: with all factors but ``k`` fixed, the best
    factor ``k`` is the lowest eigenvector of the contracted ``d_k x d_k``
    operator.  All restarts run in lockstep; a sweep updates every factor
    once.  Stops when no restart changes by more than ``tol`` or after
    ``max_iters`` sweeps.  Ties between restarts go to the lowest index.

    ``init`` optionally seeds the first restarts with given factor lists.
    """
    dims = H.dims
    m = len(dims)
    if m < 2:
        w, v = np.linalg.eigh(H.matrix)
        return SeesawResult(float(w[0]), v[:, 0], [v[:, 0]], np.array([[w[0]]]))
    rng = np.random.default_rng(seed)
    factors = _random_factors(rng, dims, restarts)
    if init:
        for r, fl in enumerate(list(init)[:restarts]):
            for l, a in enumerate(fl):
                a = np.asarray(a, dtype=complex).ravel()
                factors[l][r] = a / np.linalg.norm(a)
    T = H.matrix.reshape(dims + dims)
    plans = [_contract_plan(m, k) for k in range(m)]
    values = _expectations(T, factors)
    history = [values]
    for _ in range(max_iters):
        for k in range(m):
            ops, out = plans[k]
            args = []
            for kind, l, sub in ops:
                if kind == "bra":
                    args += [factors[l].conj(), sub]
                elif kind == "ket":
                    args += [factors[l], sub]
                else:
                    args += [T, sub]
            Hk = np.einsum(*args, out)
            Hk = 0.5 * (Hk + Hk.conj().transpose(0, 2, 1))
            w, v = np.linalg.eigh(Hk)
            factors[k] = v[:, :, 0]
        new = w[:, 0]
        history.append(new)
        done = np.max(np.abs(new - values)) < tol
        values = new
        if done:
            break
    best = int(np.argmin(values))
    fl = [f[best].copy() for f in factors]
    vec = fl[0]
    for a in fl[1:]:
        vec = np.kron(vec, a)
    return SeesawResult(float(values[best]), vec, fl, np.array(history))


def _sdp_fits(dims, partitions) -> bool:
    D = math.prod(dims)
    return 1 + len(partitions) * D * D <= MAX_CONSTRAINTS and D * (1 + len(partitions)) <= MAX_BLOCK_DIM


def _decomposition_cert(H: HermitianOperator, res, scale: float) -> dict:
    # H/scale + shift I = P + sum Q_S^Gamma  with shift = -value  ->  rebuild P exactly
    Qs = []
    for q in res.Qs:
        w, v = np.linalg.eigh(q)
        Qs.append((v * np.clip(w, 0, None)) @ v.conj().T)
    recon = sum(partial_transpose_matrix(q, H.dims, S) for q, S in zip(Qs, res.partitions))
    P = H.matrix / scale - recon
    P = 0.5 * (P + P.conj().T)
    return {
        "kind": "decomposition",
        "P": scale * P,
        "Q": [scale * q for q in Qs],
        "subsystems": [list(S) for S in res.partitions],
        "min_ppt_value": float(res.value),
    }


def _product_cert(res: SeesawResult, scale: float) -> dict:
    return {
        "kind": "product_vector",
        "vector": res.vector,
        "factors": res.factors,
        "expectation": res.value * scale,
    }


def is_block_positive(
    H: HermitianOperator,
    tol: float = CONE_TOL,
    restarts: int = SEESAW_RESTARTS,
    max_iters: int = SEESAW_SWEEPS,
    seed: int = 0,
) -> ConeVerdict:
    """Block positivity (nonnegative on every product vector).

    ``H`` is scaled to unit Frobenius norm; "nonnegative" means a minimal
    PPT expectation ``>= -tol``.  Exact dimensions decide through the PPT
    decomposition ``H = P + Q^Gamma``; other dimensions report ``outside``
    on a see-saw violation below ``-tol``, ``inside`` when a decomposition
    over all bipartitions exists (sufficient only), else ``unknown``.
    """
    if len(H.dims) == 1:
        return is_psd(H)
    Hn, scale = _unit(H)
    if scale == 0:
        return ConeVerdict(INSIDE, {"kind": "zero"}, "zero operator")
    scope = exactness_scope(H.dims)
    if scope.is_exact:
        res = min_ppt_expectation(Hn, partitions=[(1,)])
        if not res.solution.optimal:
            return ConeVerdict(UNKNOWN, None, f"PPT SDP {res.solution.status}")
        if res.value >= -tol:
            return ConeVerdict(INSIDE, _decomposition_cert(H, res, scale), scope.reason)
        ss = min_product_expectation(Hn, restarts, max_iters, seed)
        if ss.value < 0:
            return ConeVerdict(OUTSIDE, _product_cert(ss, scale), "negative product expectation")
        # PPT states are separable here, so the SDP minimizer is itself a witness
        cert = {"kind": "sigma", "sigma": res.sigma, "expectation": res.value * scale}
        return ConeVerdict(OUTSIDE, cert, "negative expectation on a separable (PPT) state")
    ss = min_product_expectation(Hn, restarts, max_iters, seed)
    if ss.value < -tol:
        return ConeVerdict(OUTSIDE, _product_cert(ss, scale), "negative product expectation")
    parts = bipartitions(len(H.dims))
    if _sdp_fits(H.dims, parts):
        res = min_ppt_expectation(Hn, partitions=parts)
        if res.solution.optimal and res.value >= -tol:
            return ConeVerdict(INSIDE, _decomposition_cert(H, res, scale), "decomposable (sufficient)")
    return ConeVerdict(UNKNOWN, None, scope.reason)


def is_separable(H: HermitianOperator, tol: float = CONE_TOL) -> ConeVerdict:
    """Peres-Horodecki: exact for 2x2/2x3, necessary-only elsewhere."""
    Hn, scale = _unit(H)
    psd = is_psd(Hn, tol)
    if psd.outside:
        return ConeVerdict(OUTSIDE, psd.certificate, "not PSD")
    if len(H.dims) == 1 or scale == 0:
        return ConeVerdict(INSIDE, None, "single party")
    ppt = is_ppt(Hn, tol)
    if ppt.outside:
        return ppt
    scope = exactness_scope(H.dims)
    if scope.is_exact:
        return ConeVerdict(INSIDE, {"kind": "ppt"}, scope.reason)
    return ConeVerdict(UNKNOWN, None, scope.reason)


def is_ew(H: HermitianOperator, tol: float = CONE_TOL, psd_tol: float = PSD_TOL, seed: int = 0) -> ConeVerdict:
    """Entanglement witness: block positive but not PSD."""
    psd = is_psd(H, psd_tol)
    bp = is_block_positive(H, tol, seed=seed)
    cert = {"kind": "ew", "block_positive": bp, "psd": psd}
    if bp.inside and psd.outside:
        return ConeVerdict(INSIDE, cert)
    if bp.outside:
        return ConeVerdict(OUTSIDE, cert, "not block positive")
    if psd.inside:
        return ConeVerdict(OUTSIDE, cert, "positive semidefinite")
    return ConeVerdict(UNKNOWN, cert, bp.reason)


def is_weakly_optimal_ew(
    H: HermitianOperator, tol: float = CONE_TOL, seed: int = 0, ew: ConeVerdict | None = None
) -> ConeVerdict:
    """Weak optimality: an EW with zero expectation on some separable state.

    Raises :class:`PreconditionError` unless ``H`` is certified an EW.
    """
    ew = ew if ew is not None else is_ew(H, tol, seed=seed)
    if not ew.inside:
        raise PreconditionError(f"operator is not a certified EW ({ew.status}: {ew.reason})")
    Hn, scale = _unit(H)
    ss = min_product_expectation(Hn, seed=seed)
    prod = _product_cert(ss, scale) if abs(ss.value) <= tol else None
    if exactness_scope(H.dims).is_exact:
        res = min_ppt_expectation(Hn, partitions=[(1,)])
        if not res.solution.optimal:
            if prod is not None:
                return ConeVerdict(INSIDE, {"kind": "weak_optimality", "product_vector": prod})
            return ConeVerdict(UNKNOWN, None, f"PPT SDP {res.solution.status}")
        if abs(res.value) <= tol:
            cert = {"kind": "weak_optimality", "sigma": res.sigma, "expectation": res.value * scale}
            if prod is not None:
                cert["product_vector"] = prod
            return ConeVerdict(INSIDE, cert)
        return ConeVerdict(OUTSIDE, {"kind": "min_separable_expectation", "value": res.value * scale},
                           "strictly positive on every separable state")
    if prod is not None:
        return ConeVerdict(INSIDE, {"kind": "weak_optimality", "product_vector": prod})
    return ConeVerdict(UNKNOWN, None, "no zero-expectation product vector found")


# --- offline re-verification -------------------------------------------------


def _min_eig(a) -> float:
    return float(np.linalg.eigvalsh(np.asarray(a, dtype=complex))[0])


def _check_cert(H: HermitianOperator, status: str, cert: dict, tol: float) -> bool:
    kind = cert.get("kind")
    m = H.matrix
    scale = max(H.norm(), 1e-300)
    if kind == "zero":
        return H.norm() == 0
    if kind == "min_eigenvalue":
        return _min_eig(m) >= cert["value"] - tol * scale
    if kind in ("negative_eigenvector", "negative_pt_eigenvector"):
        v = np.asarray(cert["vector"], dtype=complex)
        mat = m if kind == "negative_eigenvector" else partial_transpose_matrix(m / scale, H.dims, cert["subsystems"])
        return float(np.vdot(v, mat @ v).real) / float(np.vdot(v, v).real) < 0
    if kind == "product_vector":
        fl = [np.asarray(a, dtype=complex) for a in cert["factors"]]
        vec = fl[0]
        for a in fl[1:]:
            vec = np.kron(vec, a)
        if np.max(np.abs(vec - np.asarray(cert["vector"], dtype=complex))) > 1e-8:
            return False
        e = float(np.vdot(vec, m @ vec).real) / float(np.vdot(vec, vec).real)
        return e < 0 if status == OUTSIDE else abs(e) <= tol * scale
    if kind == "decomposition":
        P = np.asarray(cert["P"], dtype=complex)
        recon = P.copy()
        for q, S in zip(cert["Q"], cert["subsystems"]):
            q = np.asarray(q, dtype=complex)
            if _min_eig(q) < -tol * scale:
                return False
            recon = recon + partial_transpose_matrix(q, H.dims, S)
        return _min_eig(P) >= -tol * scale and float(np.max(np.abs(recon - m))) <= tol * max(1.0, scale)
    if kind in ("sigma", "weak_optimality"):
        ok = True
        if "sigma" in cert:
            s = np.asarray(cert["sigma"], dtype=complex)
            ok &= abs(np.trace(s).real - 1) <= tol and _min_eig(s) >= -tol
            for S in bipartitions(len(H.dims)):
                ok &= _min_eig(partial_transpose_matrix(s, H.dims, S)) >= -tol
            e = float(np.vdot(s, m).real)
            ok &= (e < 0) if kind == "sigma" else abs(e) <= tol * scale
        if "product_vector" in cert:
            ok &= _check_cert(H, INSIDE, cert["product_vector"], tol)
        return bool(ok)
    if kind == "min_separable_expectation":
        return cert["value"] > 0
    if kind == "ppt":
        return is_ppt(H, tol).inside and _min_eig(m / scale) >= -tol
    if kind == "ew":
        bp, psd = cert["block_positive"], cert["psd"]
        return verify_verdict(H, bp, tol) and verify_verdict(H, psd, tol)
    return False


def verify_verdict(H: HermitianOperator, verdict: ConeVerdict, tol: float = CONE_TOL) -> bool:
    """Re-check a verdict's certificate against ``H``; verdicts without one pass vacuously."""
    if verdict.certificate is None:
        return True
    return _check_cert(H, verdict.status, verdict.certificate, tol)
