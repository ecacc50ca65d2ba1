"""Dense primal-dual interior-point solver for small Hermitian SDPs.

Problems are stated in the maximization convention::

    maximize    sum_b Tr(C_b X_b)
    subject to  sum_b Tr(A_kb X_b) = b_k,   k = 1..m
                X_b >= 0  (Hermitian PSD)

with dual ``minimize b.y  s.t.  Z_b = sum_k y_k A_kb - C_b >= 0``.

Each Hermitian block is embedded as the real symmetric matrix
``[[Re X, -Im X], [Im X, Re X]]`` and the resulting real problem is solved by
an infeasible-start path-following method with Nesterov-Todd scaling and
Mehrotra's predictor-corrector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .linalg import HermitianOperator, bipartitions, partial_transpose_matrix

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "SolverStallError",
    "ppt_coupling",
    "solve",
    "hermitian_basis",
    "partial_transpose_batch",
    "PPTMinimum",
    "min_ppt_expectation",
    "feasibility_decompose",
    "MAX_CONSTRAINTS",
    "MAX_BLOCK_DIM",
]

MAX_CONSTRAINTS = 200
MAX_BLOCK_DIM = 64

FEAS_TOL = 1e-8
SLACK_TOL = 1e-8
GAP_TOL = 1e-7

STEP_FRACTION = 0.98
RETRY_STEP_FRACTION = 0.9  # after a breakdown at the default step length
MAX_ITERS = 200
REFINE_STEPS = 2


class SolverStallError(RuntimeError):
    """An SDP needed for a result did not reach certified optimality."""


@dataclass(frozen=True)
class SdpProblem:
    """Hermitian SDP data.

    ``A[b]`` stacks the coefficient matrices of every constraint for block
    ``b`` with shape ``(m, n_b, n_b)``; blocks a constraint does not touch
    hold zeros.
    """

    blocks: tuple[int, ...]
    C: tuple[np.ndarray, ...]
    A: tuple[np.ndarray, ...]
    b: np.ndarray

    def __post_init__(self):
        blocks = tuple(int(n) for n in self.blocks)
        C = tuple(np.asarray(c, dtype=complex) for c in self.C)
        A = tuple(np.asarray(a, dtype=complex) for a in self.A)
        b = np.asarray(self.b, dtype=float).ravel()
        m = b.size
        if not (len(blocks) == len(C) == len(A)):
            raise ValueError("blocks, objective and constraint stacks must have equal length")
        if m > MAX_CONSTRAINTS:
            raise ValueError(f"{m} constraints exceeds the limit of {MAX_CONSTRAINTS}")
        if sum(blocks) > MAX_BLOCK_DIM:
            raise ValueError(f"total block dimension {sum(blocks)} exceeds {MAX_BLOCK_DIM}")
        for n, c, a in zip(blocks, C, A):
            if c.shape != (n, n):
                raise ValueError(f"objective block has shape {c.shape}, expected {(n, n)}")
            if a.shape != (m, n, n):
                raise ValueError(f"constraint stack has shape {a.shape}, expected {(m, n, n)}")
            scale = max(1.0, float(np.max(np.abs(c))) if c.size else 0.0)
            if np.max(np.abs(c - c.conj().T), initial=0.0) > 1e-12 * scale:
                raise ValueError("objective blocks must be Hermitian")
            if a.size and np.max(np.abs(a - a.conj().transpose(0, 2, 1))) > 1e-12 * max(1.0, float(np.max(np.abs(a)))):
                raise ValueError("constraint matrices must be Hermitian")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_constraints(cls, blocks, objective, constraints) -> "SdpProblem":
        """Build from ``[(per-block matrices or None, rhs), ...]``."""
        blocks = tuple(int(n) for n in blocks)
        m = len(constraints)
        A = [np.zeros((m, n, n), dtype=complex) for n in blocks]
        rhs = np.zeros(m)
        for k, (mats, bk) in enumerate(constraints):
            if len(mats) != len(blocks):
                raise ValueError(f"constraint {k} lists {len(mats)} blocks, expected {len(blocks)}")
            for blk, mat in enumerate(mats):
                if mat is not None:
                    A[blk][k] = mat
            rhs[k] = bk
        C = [np.zeros((n, n), dtype=complex) if c is None else c for n, c in zip(blocks, objective)]
        return cls(blocks, tuple(C), tuple(A), rhs)

    @property
    def m(self) -> int:
        return self.b.size


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | stalled
    X: list[np.ndarray]
    y: np.ndarray
    Z: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    iterations: int
    primal_residual: float
    dual_slack_min: float
    certificate: dict | None = field(default=None, repr=False)
    primal_cone_min: float = 0.0  # smallest eigenvalue over the blocks of X

    @property
    def duality_gap(self) -> float:
        return self.dual_objective - self.primal_objective

    @property
    def relative_gap(self) -> float:
        p, d = self.primal_objective, self.dual_objective
        return abs(d - p) / max(1.0, abs(p), abs(d))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --- real embedding --------------------------------------------------------


def _embed(h: np.ndarray) -> np.ndarray:
    re, im = h.real, h.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _unembed(y: np.ndarray) -> np.ndarray:
    n = y.shape[0] // 2
    return 0.5 * ((y[:n, :n] + y[n:, n:]) + 1j * (y[n:, :n] - y[:n, n:]))


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.swapaxes(-1, -2))


def _inner(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    return float(sum(np.vdot(x, y).real for x, y in zip(a, b)))


# --- interior-point core (real symmetric, minimization form) -----------------


class _Core:
    """min <C,X> s.t. <A_k,X> = b_k, X >= 0; dual max b.y, Z = C - A^T y >= 0."""

    def __init__(self, C, A, b):
        self.C = C
        self.A = A
        self.b = b
        self.m = b.size
        self.N = sum(c.shape[0] for c in C)
        self.Af = [a.reshape(self.m, -1) for a in A]

    def op(self, X):
        return sum(af @ x.ravel() for af, x in zip(self.Af, X))

    def adj(self, y):
        return [np.tensordot(y, a, axes=1) for a in self.A]

    def initial_point(self):
        X, Z = [], []
        normC = [np.linalg.norm(c) for c in self.C]
        for a, c, nc in zip(self.A, self.C, normC):
            n = c.shape[0]
            normA = np.linalg.norm(a.reshape(self.m, -1), axis=1)
            xi = max(10.0, math.sqrt(n), n * float(np.max((1 + np.abs(self.b)) / (1 + normA), initial=1.0)))
            zeta = max(10.0, math.sqrt(n), float(np.max(normA, initial=0.0)), nc)
            X.append(xi * np.eye(n))
            Z.append(zeta * np.eye(n))
        return X, np.zeros(self.m), Z


def _max_step(L: np.ndarray, d: np.ndarray) -> float:
    """Largest alpha with L L^T + alpha d >= 0 (inf if unbounded)."""
    t = sla.solve_triangular(L, d, lower=True)
    t = sla.solve_triangular(L, t.T, lower=True)
    lmin = float(np.linalg.eigvalsh(_sym(t))[0])
    return math.inf if lmin >= 0 else -1.0 / lmin


def _ipm(core: _Core, tol: float, max_iters: int, frac: float = STEP_FRACTION):
    X, y, Z = core.initial_point()
    b, C = core.b, core.C
    nb = 1.0 + float(np.linalg.norm(b))
    nC = 1.0 + math.sqrt(sum(float(np.sum(c * c)) for c in C))
    best = None
    stall = 0
    cert = None
    status = "stalled"
    it = 0
    for it in range(1, max_iters + 1):
        ATy = core.adj(y)
        rp = b - core.op(X)
        Rd = [c - z - aty for c, z, aty in zip(C, Z, ATy)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        mu = _inner(X, Z) / core.N
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / nb
        dinf = math.sqrt(sum(float(np.sum(r * r)) for r in Rd)) / nC
        merit = max(relgap, pinf, dinf)
        if best is None or merit < best[0]:
            best = (merit, [x.copy() for x in X], y.copy(), [z.copy() for z in Z])
            stall = 0
        else:
            stall += 1
        if relgap <= tol and pinf <= tol and dinf <= tol:
            status = "optimal"
            break
        # infeasibility heuristics (Farkas rays)
        if dobj > 1e8 * (1.0 + abs(pobj)):
            ray = y / dobj
            aty = core.adj(ray)
            if max(float(np.linalg.eigvalsh(t)[-1]) for t in aty) <= 1e-7:
                status, cert = "infeasible", {"y_ray": ray}
                break
        if pobj < -1e8 * (1.0 + abs(dobj)):
            scale = -pobj
            ray = [x / scale for x in X]
            if float(np.linalg.norm(core.op(ray))) <= 1e-7:
                status, cert = "unbounded", {"X_ray": ray}
                break
        if stall > 25:
            break
        try:
            direction = _nt_step(core, X, y, Z, rp, Rd, mu, frac)
        except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
            break
        if direction is None:
            break
        X, y, Z = direction
    _, Xb, yb, Zb = best
    if status == "optimal":
        Xb, yb, Zb = X, y, Z
    return status, Xb, yb, Zb, it, cert


def _nt_step(core: _Core, X, y, Z, rp, Rd, mu, frac: float = STEP_FRACTION):
    Ls, Gs, Ginv, Ws, ds = [], [], [], [], []
    for x, z in zip(X, Z):
        L = np.linalg.cholesky(x)
        lam, Q = np.linalg.eigh(_sym(L.T @ z @ L))
        if lam[0] <= 0:
            raise np.linalg.LinAlgError("scaling lost definiteness")
        d = np.sqrt(lam)
        G = (L @ Q) / np.sqrt(d)
        Gi = (Q.T * np.sqrt(d)[:, None]) @ sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
        Ls.append(L)
        Gs.append(G)
        Ginv.append(Gi)
        Ws.append(G @ G.T)
        ds.append(d)
    M = np.zeros((core.m, core.m))
    for a, af, W in zip(core.A, core.Af, Ws):
        waw = np.matmul(np.matmul(W, a), W)
        M += af @ waw.reshape(core.m, -1).T
    M = _sym(M)
    try:
        factor = sla.cho_factor(M, lower=True, check_finite=False)
        solve_m = lambda h: sla.cho_solve(factor, h, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(M)))))
        lu = sla.lu_factor(M + reg * np.eye(core.m))
        solve_m = lambda h: sla.lu_solve(lu, h)

    WRdW = [W @ r @ W for W, r in zip(Ws, Rd)]

    def direction(Rc):
        h = rp - core.op([rc - w for rc, w in zip(Rc, WRdW)])
        dy = solve_m(h)
        target = float(np.linalg.norm(rp)) * 1e-3 + 1e-15
        for k in range(REFINE_STEPS + 1):
            aty = core.adj(dy)
            dZ = [_sym(r - t) for r, t in zip(Rd, aty)]
            dX = [_sym(rc - W @ dz @ W) for rc, W, dz in zip(Rc, Ws, dZ)]
            # iterative refinement: the Schur matrix loses accuracy near the optimum
            e = rp - core.op(dX)
            if k == REFINE_STEPS or float(np.linalg.norm(e)) <= target:
                break
            dy = dy + solve_m(e)
        return dX, dy, dZ

    def steps(dX, dZ, frac):
        ap = min([_max_step(L, dx) for L, dx in zip(Ls, dX)] + [math.inf])
        Lz = [np.linalg.cholesky(z) for z in Z]
        ad = min([_max_step(L, dz) for L, dz in zip(Lz, dZ)] + [math.inf])
        return min(1.0, frac * ap), min(1.0, frac * ad)

    # predictor
    dXa, dya, dZa = direction([-x for x in X])
    ap, ad = steps(dXa, dZa, 1.0)
    mu_aff = _inner([x + ap * dx for x, dx in zip(X, dXa)], [z + ad * dz for z, dz in zip(Z, dZa)]) / core.N
    sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
    # corrector
    Rc = []
    for G, Gi, d, dx, dz in zip(Gs, Ginv, ds, dXa, dZa):
        tx = Gi @ dx @ Gi.T
        tz = G.T @ dz @ G
        rhs = -0.5 * (tx @ tz + tz @ tx)
        rhs[np.diag_indices_from(rhs)] += sigma * mu - d * d
        rt = 2.0 * rhs / (d[:, None] + d[None, :])
        Rc.append(_sym(G @ rt @ G.T))
    dX, dy, dZ = direction(Rc)
    ap, ad = steps(dX, dZ, frac)
    if ap < 1e-12 and ad < 1e-12:
        return None
    Xn = [_sym(x + ap * dx) for x, dx in zip(X, dX)]
    Zn = [_sym(z + ad * dz) for z, dz in zip(Z, dZ)]
    return Xn, y + ad * dy, Zn


def solve(P: SdpProblem, tol: float = 1e-10, max_iters: int = MAX_ITERS) -> SdpSolution:
    """Solve ``P``; see the module docstring for the conventions.

    ``tol`` is the internal stopping target for relative gap and relative
    infeasibilities.  The returned status is ``"optimal"`` only if the
    recovered Hermitian solution meets the acceptance bounds: primal residual
    <= 1e-8 and primal eigenvalues >= -1e-8 (after a least-norm correction
    onto the constraints), dual slack eigenvalues >= -1e-8 and relative gap
    <= 1e-7.
    Hitting the iteration cap or numerical breakdown gives ``"stalled"``
    with the best iterate attached.
    """
    C = [-0.5 * _embed(c).real for c in P.C]
    A = [0.5 * _embed(a).real for a in P.A]
    core = _Core(C, A, P.b)
    sol = None
    for frac in (STEP_FRACTION, RETRY_STEP_FRACTION):
        cand = _recover(P, *_ipm(core, tol, max_iters, frac))
        if sol is None or _rank(cand) < _rank(sol):
            sol = cand
        if sol.optimal or sol.status in ("infeasible", "unbounded"):
            break
    return sol


def _rank(sol: SdpSolution) -> tuple[int, float]:
    # optimal first, then smallest acceptance violation
    viol = max(
        sol.primal_residual / FEAS_TOL,
        -sol.primal_cone_min / FEAS_TOL,
        -sol.dual_slack_min / SLACK_TOL,
        sol.relative_gap / GAP_TOL,
    )
    return (0 if sol.optimal else 1, viol)


def _residual(P: SdpProblem, X) -> np.ndarray:
    return P.b - sum(np.tensordot(a.conj(), x, axes=([1, 2], [0, 1])).real for a, x in zip(P.A, X))


def _polish(P: SdpProblem, X, resid):
    # least-norm correction onto the affine constraints; the Gram matrix of
    # the constraints is well conditioned even when the Schur matrix is not
    if not resid.size:
        return X, resid
    G = sum(np.einsum("kij,lij->kl", a.conj(), a).real for a in P.A)
    c = np.linalg.lstsq(G, resid, rcond=None)[0]
    Xn = [x + np.tensordot(c, a, axes=1) for x, a in zip(X, P.A)]
    Xn = [0.5 * (x + x.conj().T) for x in Xn]
    rn = _residual(P, Xn)
    if np.max(np.abs(rn)) < np.max(np.abs(resid)):
        return Xn, rn
    return X, resid


def _recover(P: SdpProblem, status, Xr, yr, _Zr, iters, cert) -> SdpSolution:
    X = [_unembed(x) for x in Xr]
    X = [0.5 * (x + x.conj().T) for x in X]
    y = -yr
    Z = [np.tensordot(y, a, axes=1) - c for a, c in zip(P.A, P.C)]
    Z = [0.5 * (z + z.conj().T) for z in Z]
    resid = _residual(P, X)
    if status in ("optimal", "stalled"):
        X, resid = _polish(P, X, resid)
    pobj = float(sum(np.vdot(c, x).real for c, x in zip(P.C, X)))
    dobj = float(P.b @ y)
    presid = float(np.max(np.abs(resid))) if resid.size else 0.0
    smin = min((float(np.linalg.eigvalsh(z)[0]) for z in Z if z.size), default=0.0)
    xmin = min((float(np.linalg.eigvalsh(x)[0]) for x in X if x.size), default=0.0)
    if cert is not None:
        if "y_ray" in cert:
            cert = {"y_ray": -cert["y_ray"]}
        else:
            cert = {"X_ray": [_unembed(x) for x in cert["X_ray"]]}
    sol = SdpSolution(status, X, y, Z, pobj, dobj, iters, presid, smin, cert, xmin)
    if status in ("optimal", "stalled"):
        ok = presid <= FEAS_TOL and xmin >= -FEAS_TOL and smin >= -SLACK_TOL and sol.relative_gap <= GAP_TOL
        sol.status = "optimal" if ok else "stalled"
    return sol


# --- problem helpers ---------------------------------------------------------


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices under Tr(AB); shape (n^2, n, n)."""
    basis = np.zeros((n * n, n, n), dtype=complex)
    k = 0
    for i in range(n):
        basis[k, i, i] = 1.0
        k += 1
    r = 1.0 / math.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            basis[k, i, j] = basis[k, j, i] = r
            k += 1
            basis[k, i, j] = 1j * r
            basis[k, j, i] = -1j * r
            k += 1
    return basis


def partial_transpose_batch(stack: np.ndarray, dims: Sequence[int], subsystems) -> np.ndarray:
    """Partial transpose applied to every matrix of a ``(k, D, D)`` stack."""
    dims = tuple(dims)
    m = len(dims)
    k = stack.shape[0]
    t = stack.reshape((k,) + dims + dims)
    axes = list(range(2 * m + 1))
    for s in subsystems:
        axes[1 + s], axes[1 + m + s] = axes[1 + m + s], axes[1 + s]
    return t.transpose(axes).reshape(stack.shape)


def ppt_coupling(dims: Sequence[int], partitions, n_extra_blocks: int = 0):
    """Constraint stacks coupling a main block ``M`` to ``N_S = M^{Gamma_S}``.

    Returns per-block stacks ``[A_M, A_N1, ..., A_Nk, (zeros for extras)]``
    for ``len(partitions) * D^2`` constraints, all with right-hand side 0.
    """
    D = math.prod(dims)
    basis = hermitian_basis(D)
    nb = basis.shape[0]
    k = len(partitions)
    A_main = np.zeros((k * nb, D, D), dtype=complex)
    A_parts = []
    for i, S in enumerate(partitions):
        A_main[i * nb:(i + 1) * nb] = partial_transpose_batch(basis, dims, S)
        a = np.zeros((k * nb, D, D), dtype=complex)
        a[i * nb:(i + 1) * nb] = -basis
        A_parts.append(a)
    return A_main, A_parts


@dataclass
class PPTMinimum:
    """Result of minimizing Tr(X sigma) over PPT states sigma.

    ``X + shift * I = P + sum_S Qs[S]^{Gamma_S}`` with ``P, Qs[S] >= 0`` and
    ``shift = -value``.
    """

    value: float
    sigma: np.ndarray
    P: np.ndarray
    Qs: list[np.ndarray]
    partitions: list[tuple[int, ...]]
    solution: SdpSolution


def min_ppt_expectation(X: HermitianOperator, partitions=None, tol: float = 1e-10) -> PPTMinimum:
    """``min Tr(X sigma)`` over states positive under every listed partial transpose."""
    dims = X.dims
    D = X.dim
    if partitions is None:
        partitions = bipartitions(len(dims))
    partitions = [tuple(S) for S in partitions]
    A_main, A_parts = ppt_coupling(dims, partitions)
    trace_row = np.zeros((1, D, D), dtype=complex)
    trace_row[0] = np.eye(D)
    A = [np.concatenate([trace_row, A_main])]
    for a in A_parts:
        A.append(np.concatenate([np.zeros((1, D, D), dtype=complex), a]))
    b = np.zeros(A[0].shape[0])
    b[0] = 1.0
    C = [-X.matrix] + [np.zeros((D, D), dtype=complex) for _ in partitions]
    prob = SdpProblem(tuple([D] * (1 + len(partitions))), tuple(C), tuple(A), b)
    sol = solve(prob, tol=tol)
    P = sol.Z[0]
    Qs = list(sol.Z[1:])
    return PPTMinimum(-sol.dual_objective, sol.X[0], P, Qs, partitions, sol)


def feasibility_decompose(X: HermitianOperator, tol: float = FEAS_TOL):
    """Find PSD ``(P, Q)`` with ``X = P + Q^Gamma`` (transpose on subsystem 1).

    ``X`` is scaled to unit Frobenius norm for the feasibility test, which
    accepts when the minimal PPT expectation is ``>= -tol``.  Returns
    ``None`` when no decomposition exists, otherwise matrices reproducing
    ``X`` (at its original scale) within ``1e-8``.
    """
    if len(X.dims) != 2:
        raise ValueError(f"feasibility_decompose needs a bipartite operator, got dims {X.dims}")
    scale = X.norm()
    if scale == 0:
        z = np.zeros_like(X.matrix)
        return z, z.copy()
    res = min_ppt_expectation(X / scale, partitions=[(1,)])
    if not res.solution.optimal or res.value < -tol:
        return None
    return _clean_decomposition(X, res, scale)


def _clean_decomposition(X: HermitianOperator, res: PPTMinimum, scale: float):
    # keep the PSD part of each Q and absorb the residual into P
    Qs = [_psd_part(q) for q in res.Qs]
    recon = sum(partial_transpose_matrix(q, X.dims, S) for q, S in zip(Qs, res.partitions))
    P = X.matrix / scale - recon
    P = 0.5 * (P + P.conj().T)
    P, Qs = scale * P, [scale * q for q in Qs]
    if len(Qs) == 1:
        return P, Qs[0]
    return P, Qs


def _psd_part(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v * np.clip(w, 0, None)) @ v.conj().T
