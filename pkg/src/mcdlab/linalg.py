"""Dense Hermitian linear algebra on tensor-product spaces.

Every operator carries a dimension vector ``dims = (d_1, ..., d_m)`` that
describes the tensor factors of the space it acts on.  Subsystem indices are
0-based throughout the library.
"""

from __future__ import annotations

import math
import warnings
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "HermiticityWarning",
    "NotPSDError",
    "HermitianOperator",
    "Spectrum",
    "as_dims",
    "ket",
    "projector",
    "identity",
    "eig_hermitian",
    "jacobi_eigh",
    "tensor",
    "partial_transpose",
    "partial_trace",
    "psd_sqrt",
    "pinv_on_support",
    "inv_sqrt_on_support",
    "support_basis",
    "trace_norm",
    "bipartitions",
]

HERMITIAN_TOL = 1e-12
RANK_TOL = 1e-10
PSD_SQRT_TOL = 1e-10


class HermiticityWarning(UserWarning):
    """Raised (as a warning) when input entries had to be symmetrized."""


class NotPSDError(ValueError):
    pass


def as_dims(dims: int | Iterable[int] | None, side: int | None = None) -> tuple[int, ...]:
    """Validate a dimension vector, optionally against a matrix side length."""
    if dims is None:
        if side is None:
            raise ValueError("dims or side length required")
        return (int(side),)
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),)
    out = tuple(int(d) for d in dims)
    if not out:
        raise ValueError("dims must contain at least one subsystem")
    if any(d < 1 for d in out):
        raise ValueError(f"subsystem dimensions must be positive, got {out}")
    if side is not None and math.prod(out) != side:
        raise ValueError(f"dims {out} do not match matrix side {side}")
    return out


class HermitianOperator:
    """A Hermitian matrix tagged with the tensor structure of its space.

    Entries are symmetrized as ``(H + H^dagger) / 2`` on construction; a
    :class:`HermiticityWarning` is emitted when the input deviated from
    Hermiticity by more than ``1e-12`` (relative to its largest entry).
    Instances are immutable.
    """

    __slots__ = ("_m", "dims")

    def __init__(self, entries, dims: int | Iterable[int] | None = None):
        m = np.array(entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        dims = as_dims(dims, m.shape[0])
        if m.size:
            scale = max(1.0, float(np.max(np.abs(m))))
            asym = float(np.max(np.abs(m - m.conj().T)))
            if asym > HERMITIAN_TOL * scale:
                warnings.warn(
                    f"input deviates from Hermitian by {asym:.3g}; symmetrized",
                    HermiticityWarning,
                    stacklevel=2,
                )
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        self._m = m
        self.dims = dims

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def trace(self) -> float:
        return float(np.trace(self._m).real)

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self._m))

    def expectation(self, vec) -> float:
        v = np.asarray(vec, dtype=complex).ravel()
        return float(np.real(np.vdot(v, self._m @ v)))

    def inner(self, other: "HermitianOperator") -> float:
        """Hilbert-Schmidt inner product Tr(self @ other)."""
        return float(np.real(np.vdot(self._m, other.matrix)))

    def with_matrix(self, entries) -> "HermitianOperator":
        return HermitianOperator(entries, self.dims)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._m.copy()
        return self._m.astype(dtype)

    def _check(self, other: "HermitianOperator") -> None:
        if not isinstance(other, HermitianOperator):
            raise TypeError(f"expected HermitianOperator, got {type(other).__name__}")
        if other.dims != self.dims:
            raise ValueError(f"dims mismatch: {self.dims} vs {other.dims}")

    def __add__(self, other):
        self._check(other)
        return HermitianOperator(self._m + other.matrix, self.dims)

    def __sub__(self, other):
        self._check(other)
        return HermitianOperator(self._m - other.matrix, self.dims)

    def __neg__(self):
        return HermitianOperator(-self._m, self.dims)

    def __mul__(self, scalar):
        if isinstance(scalar, complex) and scalar.imag != 0:
            raise TypeError("only real scalars preserve Hermiticity")
        return HermitianOperator(float(np.real(scalar)) * self._m, self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __eq__(self, other):
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self._m, other.matrix)

    __hash__ = None

    def __repr__(self):
        return f"HermitianOperator(dims={self.dims}, trace={self.trace():.6g})"


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def identity(dims: Iterable[int]) -> HermitianOperator:
    dims = as_dims(dims)
    return HermitianOperator(np.eye(math.prod(dims)), dims)


def ket(dims: Iterable[int], digits: Sequence[int]) -> np.ndarray:
    """Computational basis vector ``|digits>``, e.g. ``ket((2, 3), (0, 2))`` is |02>."""
    dims = as_dims(dims)
    if len(digits) != len(dims):
        raise ValueError("one digit per subsystem required")
    v = np.zeros(math.prod(dims), dtype=complex)
    v[np.ravel_multi_index(tuple(digits), dims)] = 1.0
    return v


def projector(vec, dims: Iterable[int] | None = None) -> HermitianOperator:
    v = np.asarray(vec, dtype=complex).ravel()
    return HermitianOperator(np.outer(v, v.conj()), as_dims(dims, v.size))


def _as_matrix(H) -> tuple[np.ndarray, tuple[int, ...]]:
    if isinstance(H, HermitianOperator):
        return H.matrix, H.dims
    m = np.asarray(H, dtype=complex)
    return m, (m.shape[0],)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    as columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n < 2 or scale == 0.0:
        w = np.diag(a).copy()
        order = np.argsort(w, kind="stable")
        return w[order], v[:, order]
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float(np.sum(a * a) - np.sum(np.diag(a) ** 2))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _jacobi_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Real embedding [[Re, -Im], [Im, Re]] doubles every eigenvalue; each
    # eigenvector [u; v] maps to the complex vector u + i v.
    n = m.shape[0]
    emb = np.block([[m.real, -m.imag], [m.imag, m.real]])
    w, u = jacobi_eigh(emb)
    cand = u[:n, :] + 1j * u[n:, :]
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    vals, vecs = [], []
    start = 0
    while start < 2 * n:
        stop = start + 1
        while stop < 2 * n and w[stop] - w[stop - 1] <= 1e-9 * scale:
            stop += 1
        if (stop - start) % 2:
            stop = min(stop + 1, 2 * n)
        k = (stop - start) // 2
        left, _, _ = np.linalg.svd(cand[:, start:stop], full_matrices=False)
        vecs.append(left[:, :k])
        vals.extend(w[start:stop].reshape(k, 2).mean(axis=1))
        start = stop
    return np.asarray(vals), np.hstack(vecs)


def eig_hermitian(H, method: str = "lapack") -> Spectrum:
    """Eigendecomposition with ascending eigenvalues.

    Parameters
    ----------
    H : HermitianOperator or array_like
        Operator to diagonalize.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigh``; ``"jacobi"`` runs the
        dependency-free cyclic Jacobi solver on the real embedding of ``H``.
    """
    m, _ = _as_matrix(H)
    if method == "lapack":
        w, v = np.linalg.eigh(m)
    elif method == "jacobi":
        w, v = _jacobi_hermitian(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Spectrum(np.asarray(w, dtype=float), v)


def tensor(*ops: HermitianOperator) -> HermitianOperator:
    """Kronecker product; the dimension vectors are concatenated."""
    if not ops:
        raise ValueError("at least one operator required")
    m, dims = ops[0].matrix, ops[0].dims
    for op in ops[1:]:
        m = np.kron(m, op.matrix)
        dims = dims + op.dims
    return HermitianOperator(m, dims)


def _subsystem_set(subsystems, m: int) -> tuple[int, ...]:
    if isinstance(subsystems, (int, np.integer)):
        subsystems = (int(subsystems),)
    subs = tuple(sorted(set(int(s) for s in subsystems)))
    for s in subs:
        if not 0 <= s < m:
            raise IndexError(f"subsystem {s} out of range for {m} subsystems")
    return subs


def partial_transpose_matrix(m: np.ndarray, dims: tuple[int, ...], subsystems) -> np.ndarray:
    """Array-level partial transpose; used on hot paths that skip wrapping."""
    subs = _subsystem_set(subsystems, len(dims))
    k = len(dims)
    t = m.reshape(dims + dims)
    axes = list(range(2 * k))
    for s in subs:
        axes[s], axes[k + s] = axes[k + s], axes[s]
    return t.transpose(axes).reshape(m.shape)


def partial_transpose(H: HermitianOperator, subsystems) -> HermitianOperator:
    """Transpose the listed tensor factors (0-based) of ``H``."""
    return HermitianOperator(partial_transpose_matrix(H.matrix, H.dims, subsystems), H.dims)


def partial_trace(H: HermitianOperator, subsystems) -> HermitianOperator:
    """Trace out the listed tensor factors (0-based).

    Tracing out every factor returns a 1x1 operator holding ``Tr H``.
    """
    dims = H.dims
    subs = _subsystem_set(subsystems, len(dims))
    t = H.matrix.reshape(dims + dims)
    remaining = list(dims)
    for s in reversed(subs):
        k = len(remaining)
        t = np.trace(t, axis1=s, axis2=s + k)
        del remaining[s]
    if not remaining:
        return HermitianOperator(np.array([[complex(t)]]), (1,))
    side = math.prod(remaining)
    return HermitianOperator(t.reshape(side, side), remaining)


def psd_sqrt(H: HermitianOperator) -> HermitianOperator:
    """Positive square root; eigenvalues down to ``-1e-10 * ||H||`` are clamped to 0."""
    w, v = np.linalg.eigh(H.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[0] < -PSD_SQRT_TOL * scale:
        raise NotPSDError(f"minimum eigenvalue {w[0]:.3g} is negative")
    r = np.sqrt(np.clip(w, 0.0, None))
    return H.with_matrix((v * r) @ v.conj().T)


def pinv_on_support(H: HermitianOperator, rank_tol: float = RANK_TOL) -> HermitianOperator:
    """Inverse of ``H`` on its support.

    Eigenvalues with ``|lambda| <= rank_tol * max|lambda|`` are treated as
    zero; the zero operator maps to itself.
    """
    w, v = np.linalg.eigh(H.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    keep = np.abs(w) > rank_tol * scale if scale > 0 else np.zeros_like(w, dtype=bool)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return H.with_matrix((v * inv) @ v.conj().T)


def inv_sqrt_on_support(H: HermitianOperator, rank_tol: float = RANK_TOL) -> HermitianOperator:
    """``pinv_on_support(psd_sqrt(H))`` with the rank cut applied to ``H`` itself.

    Cutting after the square root would let eigenvalues near ``1e-17``
    survive as ``~3e-9``.
    """
    w, v = np.linalg.eigh(H.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[0] < -PSD_SQRT_TOL * scale:
        raise NotPSDError(f"minimum eigenvalue {w[0]:.3g} is negative")
    keep = w > rank_tol * scale if scale > 0 else np.zeros_like(w, dtype=bool)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return H.with_matrix((v * inv) @ v.conj().T)


def support_basis(H: HermitianOperator, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal columns spanning the support of ``H``."""
    w, v = np.linalg.eigh(H.matrix)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0:
        return v[:, :0]
    return v[:, np.abs(w) > rank_tol * scale]


def trace_norm(H: HermitianOperator) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(H.matrix))))


def bipartitions(m: int) -> list[tuple[int, ...]]:
    """One representative subset per nontrivial bipartition of ``m`` parties.

    Transposing a subset or its complement gives operators with identical
    spectra, so only subsets avoiding party 0 are listed.
    """
    out = []
    for mask in range(1, 2 ** (m - 1)):
        out.append(tuple(k + 1 for k in range(m - 1) if mask >> k & 1))
    return out
