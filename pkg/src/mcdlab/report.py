"""JSON reports: deterministic serialization and offline certificate checks.

Floats are written at 12 significant digits and keys are sorted, so identical
inputs, seed and version give byte-identical output.  Wall-clock timings are
only included on request.  Reports use 1-based state indices.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .cones import ConeVerdict, verify_verdict
from .confidence import BRACKET_TOL, ConfidenceReport, confidence_report
from .ensemble import Ensemble
from .linalg import HermitianOperator, bipartitions, partial_transpose_matrix
from .minerr import TwoStateCheck, crosscheck_theorem5

__all__ = [
    "SCHEMA_VERSION",
    "SIG_DIGITS",
    "Timer",
    "to_jsonable",
    "dumps",
    "file_digest",
    "verdict_to_json",
    "verdict_from_json",
    "confidence_to_json",
    "crosscheck_to_json",
    "analyze_report",
    "verify_report",
]

SCHEMA_VERSION = 1
SIG_DIGITS = 12


def _num(x: float) -> float | None:
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}") + 0.0  # normalizes -0.0


def _matrix(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"re": _round_array(a.real), "im": _round_array(a.imag)}


def _round_array(a: np.ndarray):
    return np.vectorize(_num, otypes=[object])(a).tolist() if a.size else a.tolist()


def to_jsonable(obj: Any) -> Any:
    """Recursive conversion with 12-digit floats; complex arrays become ``{"re", "im"}``."""
    if isinstance(obj, ConeVerdict):
        return verdict_to_json(obj)
    if isinstance(obj, HermitianOperator):
        return _matrix(obj.matrix)
    if isinstance(obj, np.ndarray):
        return _matrix(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def dumps(obj: Any, indent: int | None = 1) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=indent)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Timer:
    """Collects per-stage wall-clock seconds."""

    def __init__(self):
        self.stages: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t


# --- verdicts ------------------------------------------------------------------


def verdict_to_json(v: ConeVerdict | None) -> dict | None:
    if v is None:
        return None
    return {"status": v.status, "reason": v.reason, "certificate": to_jsonable(v.certificate)}


def _decode(obj: Any) -> Any:
    if isinstance(obj, dict):
        if set(obj) == {"re", "im"}:
            return np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
        if set(obj) == {"status", "reason", "certificate"}:
            return verdict_from_json(obj)
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def verdict_from_json(obj: dict | None) -> ConeVerdict | None:
    if obj is None:
        return None
    return ConeVerdict(obj["status"], _decode(obj["certificate"]), obj.get("reason", ""))


# --- report sections -----------------------------------------------------------


def confidence_to_json(r: ConfidenceReport) -> dict:
    gap = r.gap
    locc = r.locc
    return {
        "j": r.j + 1,
        "C_j": r.C_j,
        "C_j_bisection": r.C_bisection,
        "Q_lower": r.Q_lower,
        "Q_upper": r.Q_upper,
        "exact": r.exact,
        "exactness_reason": locc.reason if locc else "",
        "solver_status": locc.solver_status if locc else "none",
        "nonlocal": r.nonlocal_,
        "gap": gap.gap if gap else None,
        "probes": [{"q": q, "verdict": verdict_to_json(v)} for q, v in (gap.probe_points if gap else [])],
        "ew_certificate": verdict_to_json(r.ew_certificate),
        "sigma_certificate": to_jsonable(r.sigma_certificate),
        "mc_operator": to_jsonable(r.mc_operator),
    }


def crosscheck_to_json(c: TwoStateCheck, j: int) -> dict:
    return {
        "j": j + 1,
        "certified": c.certified,
        "skipped": c.skipped or None,
        "r": c.r,
        "q": c.q,
        "p_G": c.p_G,
        "p_G_helstrom": c.p_G_helstrom,
        "p_SEP_status": c.p_SEP_status,
        "reverse_q": c.reverse_q,
        "reverse_ew": verdict_to_json(c.reverse_ew),
        "probes": [to_jsonable(p) for p in c.probes],
    }


def analyze_report(
    E: Ensemble,
    path: str | None = None,
    digest: str | None = None,
    js: list[int] | None = None,
    seed: int = 0,
    gap_tol: float | None = None,
    timer: Timer | None = None,
    crosscheck: bool = True,
) -> tuple[dict, list[ConfidenceReport]]:
    """Assemble the full report for the 0-based states ``js`` (all by default)."""
    js = list(range(E.n)) if js is None else js
    timer = timer or Timer()
    reps, states, checks = [], [], []
    for j in js:
        with timer.stage(f"confidence_j{j + 1}"):
            rep = confidence_report(E, j, seed=seed, gap_tol=gap_tol)
        reps.append(rep)
        states.append(confidence_to_json(rep) | {"eta_j": E.priors[j], "invariant_violations": rep.check_invariants(E.priors[j])})
        if crosscheck:
            with timer.stage(f"crosscheck_j{j + 1}"):
                checks.append(crosscheck_to_json(crosscheck_theorem5(E, j, rep, seed=seed), j))
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "mcdlab", "version": __version__},
        "seed": seed,
        "input": {"path": path, "sha256": digest},
        "ensemble": {"dims": list(E.dims), "n": E.n, "priors": list(E.priors)},
        "states": states,
        "crosscheck": checks,
    }
    return report, reps


# --- offline verification ------------------------------------------------------------


def _witness(E: Ensemble, j: int, q: float) -> HermitianOperator:
    return q * E.rho0 - E.weighted(j)


def _sigma_ok(E: Ensemble, j: int, q: float, s: np.ndarray, tol: float = 1e-8) -> bool:
    H = _witness(E, j, q).matrix
    ok = abs(np.trace(s).real - 1) <= tol and np.linalg.eigvalsh(s)[0] >= -tol
    for S in bipartitions(len(E.dims)):
        ok &= np.linalg.eigvalsh(partial_transpose_matrix(s, E.dims, S))[0] >= -tol
    ok &= abs(np.vdot(s, H).real) <= tol * max(1.0, np.linalg.norm(H))
    ok &= np.vdot(s, E.rho0.matrix).real > 1e-12
    return bool(ok)


def verify_report(report: dict, E: Ensemble, tol: float = 1e-8) -> list[str]:
    """Re-check every embedded certificate against the input ensemble.

    Uses only the report content and ``E``; returns a list of failures.
    """
    failures = []
    for st in report.get("states", []):
        j = st["j"] - 1
        for k, probe in enumerate(st.get("probes", [])):
            v = verdict_from_json(probe["verdict"])
            if not verify_verdict(_witness(E, j, probe["q"]), v, tol):
                failures.append(f"j={j + 1} probe {k}: certificate does not verify")
        ewc = st.get("ew_certificate")
        if ewc is not None and st.get("probes"):
            if not verify_verdict(_witness(E, j, st["probes"][0]["q"]), verdict_from_json(ewc), tol):
                failures.append(f"j={j + 1}: EW certificate does not verify")
        if st.get("sigma_certificate") is not None:
            s = _decode(st["sigma_certificate"])
            if not _sigma_ok(E, j, st["Q_upper"], s, tol):
                failures.append(f"j={j + 1}: sigma certificate does not verify")
        if st.get("mc_operator") is not None:
            M = _decode(st["mc_operator"])
            den = np.vdot(E.rho0.matrix, M).real
            conf = np.vdot(E.weighted(j).matrix, M).real / den if den > 0 else -1.0
            w = np.linalg.eigvalsh(M)
            if den <= 0 or abs(conf - st["C_j"]) > 1e-9 or w[0] < -tol or w[-1] > 1 + tol:
                failures.append(f"j={j + 1}: measurement operator does not attain C_j")
        if st.get("exact") and st["Q_upper"] - st["Q_lower"] > BRACKET_TOL:
            failures.append(f"j={j + 1}: exact bracket wider than 1e-6")
    for c in report.get("crosscheck", []):
        if c.get("reverse_ew") is not None:
            j = c["j"] - 1
            if not verify_verdict(_witness(E, j, c["reverse_q"]), verdict_from_json(c["reverse_ew"]), tol):
                failures.append(f"j={j + 1}: reverse EW certificate does not verify")
    return failures
