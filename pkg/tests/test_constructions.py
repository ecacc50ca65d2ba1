import numpy as np
import pytest

from mcdlab.cones import is_weakly_optimal_ew
from mcdlab.confidence import locc_confidence, max_confidence
from mcdlab.constructions import (
    ConstructionError,
    WitnessFamily,
    ensemble_from_family,
    ensemble_from_witness,
    family_identity_residual,
    jordan_decompose,
    predicted_max_confidence,
    predicted_Q,
    witness_identity_residual,
)
from mcdlab.linalg import HermitianOperator, identity, ket, partial_transpose, projector
from mcdlab.sampling import random_decomposable_witness

D22 = (2, 2)
S = 1 / np.sqrt(2)
BELL = [
    S * (ket(D22, (0, 0)) + ket(D22, (1, 1))),
    S * (ket(D22, (0, 0)) - ket(D22, (1, 1))),
    S * (ket(D22, (0, 1)) + ket(D22, (1, 0))),
    S * (ket(D22, (0, 1)) - ket(D22, (1, 0))),
]
XI = S * (ket((2, 3), (0, 0)) + ket((2, 3), (1, 2)))


def bell_family():
    return WitnessFamily.verified([partial_transpose(projector(b, D22), [1]) for b in BELL[:3]])


def random_family(dims, k, seed, min_eps=1e-3):
    rng = np.random.default_rng(seed)
    while True:
        F = WitnessFamily([random_decomposable_witness(dims, rng) for _ in range(k)])
        if F.epsilon > min_eps:
            return F


def test_jordan_decomposition_of_xi_witness():
    W = partial_transpose(projector(XI, (2, 3)), [1])
    plus, minus, degenerate = jordan_decompose(W)
    assert not degenerate
    assert np.allclose(plus.matrix - minus.matrix, W.matrix)
    assert np.allclose(plus.matrix @ minus.matrix, 0)
    # frozen: eigenvalues {1/2 x3, -1/2}
    assert np.isclose(plus.trace(), 1.5) and np.isclose(minus.trace(), 0.5)


def test_jordan_degenerate_for_psd():
    assert jordan_decompose(identity(2)).degenerate


def test_single_witness_xi():
    W = partial_transpose(projector(XI, (2, 3)), [1])
    E = ensemble_from_witness(W)
    assert np.allclose(E.priors, [0.25, 0.75])
    assert abs(max_confidence(E, 0) - 1) <= 1e-9
    lc = locc_confidence(E, 0)
    assert lc.Q_upper <= 0.5 + 1e-6
    assert witness_identity_residual(W, E, 0.5) <= 1e-12
    assert witness_identity_residual(W, E, 0.8) <= 1e-12


def test_single_witness_rejects_non_ew():
    with pytest.raises(ConstructionError):
        ensemble_from_witness(identity(D22))
    with pytest.raises(ConstructionError):
        ensemble_from_witness(-1.0 * projector(BELL[0], D22))


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 2)])
@pytest.mark.parametrize("seed", range(4))
def test_single_witness_random(dims, seed):
    W = random_decomposable_witness(dims, np.random.default_rng(seed))
    E = ensemble_from_witness(W)
    assert abs(max_confidence(E, 0) - 1) <= 1e-9
    assert locc_confidence(E, 0).Q_upper <= 0.5 + 1e-6


def test_bell_family_closed_forms():
    F = bell_family()
    assert np.isclose(F.epsilon, 0.5)
    assert np.allclose(F.lambdas, 0.5) and np.allclose(F.deltas, 1)
    E = ensemble_from_family(F)
    for j in range(3):
        assert abs(max_confidence(E, j) - predicted_max_confidence(F, j)) <= 1e-8
        assert np.isclose(predicted_max_confidence(F, j), 1)
        q = predicted_Q(F, j)
        assert q is not None and np.isclose(q, 0.5)
        lc = locc_confidence(E, j)
        assert abs(lc.Q_upper - q) <= 1e-6 and lc.exact
        for qq in (0.3, 0.5, 0.9):
            assert family_identity_residual(F, E, j, qq) <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_random_family_closed_forms(seed):
    F = random_family(D22, 3, seed)
    E = ensemble_from_family(F)
    for j in range(3):
        assert abs(max_confidence(E, j) - predicted_max_confidence(F, j)) <= 1e-8
        W = F.witnesses[j]
        if is_weakly_optimal_ew(W).inside:
            assert abs(locc_confidence(E, j).Q_upper - predicted_Q(F, j)) <= 1e-6


def test_family_with_one_witness_fails():
    F = WitnessFamily.verified([partial_transpose(projector(BELL[0], D22), [1])])
    assert F.epsilon <= 0
    with pytest.raises(ConstructionError):
        ensemble_from_family(F)
    with pytest.raises(ConstructionError):
        F.deltas


def test_family_rejects_mixed_dims():
    with pytest.raises(ConstructionError):
        WitnessFamily([identity(D22), identity((2, 3))])
    with pytest.raises(ConstructionError):
        WitnessFamily([])


def test_verified_family_rejects_non_ew():
    with pytest.raises(ConstructionError):
        WitnessFamily.verified([identity(D22), partial_transpose(projector(BELL[0], D22), [1])])


def test_predicted_q_none_when_not_weakly_optimal():
    swap = partial_transpose(2 * projector(BELL[0], D22), [1])
    shifted = swap + 0.1 * identity(D22)
    F = WitnessFamily([shifted, partial_transpose(projector(BELL[2], D22), [1])])
    assert predicted_Q(F, 0) is None


def test_family_priors_sum_to_one():
    E = ensemble_from_family(bell_family())
    assert abs(sum(E.priors) - 1) <= 1e-12
    assert all(isinstance(s, HermitianOperator) for s in E.states)
