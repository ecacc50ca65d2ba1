"""Seeded random states, ensembles, local unitaries and decomposable witnesses."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .ensemble import Ensemble
from .linalg import HermitianOperator, as_dims, partial_transpose_matrix

__all__ = [
    "haar_pure",
    "random_state",
    "random_ensemble",
    "random_local_unitary",
    "random_decomposable_witness",
]


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def haar_pure(dim: int, rng=None) -> np.ndarray:
    """Haar-random unit vector (normalized complex Gaussian)."""
    rng = _rng(rng)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_state(dims: Sequence[int], rng=None, rank: int | None = None) -> HermitianOperator:
    """Reduced state of a Haar-random pure state on ``D x rank`` (``rank = D`` by default).

    ``rank = 1`` gives a Haar-random pure state.
    """
    rng = _rng(rng)
    dims = as_dims(dims)
    D = math.prod(dims)
    k = D if rank is None else int(rank)
    g = (rng.normal(size=(D, k)) + 1j * rng.normal(size=(D, k)))
    rho = g @ g.conj().T
    return HermitianOperator(rho / np.trace(rho).real, dims)


def random_ensemble(
    dims: Sequence[int], n: int, rng=None, rank: int | None = None, pure: bool = False
) -> Ensemble:
    """``n`` random states with flat-Dirichlet priors."""
    rng = _rng(rng)
    priors = rng.dirichlet(np.ones(n))
    priors = np.maximum(priors, 1e-6)
    priors = priors / priors.sum()
    states = tuple(random_state(dims, rng, 1 if pure else rank) for _ in range(n))
    return Ensemble(tuple(float(p) for p in priors), states)


def random_local_unitary(dims: Sequence[int], rng=None) -> np.ndarray:
    """``U_1 ⊗ ... ⊗ U_m`` with each factor Haar-random."""
    rng = _rng(rng)
    out = np.ones((1, 1), dtype=complex)
    for d in as_dims(dims):
        out = np.kron(out, unitary_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1)))
    return out


def random_decomposable_witness(dims: Sequence[int], rng=None, subsystem: int = 1) -> HermitianOperator:
    """``|psi><psi|^Gamma`` for a Haar-random pure ``psi`` (entangled almost surely)."""
    rng = _rng(rng)
    dims = as_dims(dims)
    psi = haar_pure(math.prod(dims), rng)
    return HermitianOperator(partial_transpose_matrix(np.outer(psi, psi.conj()), dims, [subsystem]), dims)
