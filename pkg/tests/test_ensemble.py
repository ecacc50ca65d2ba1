import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcdlab.ensemble import (
    DimensionMismatchError,
    EmptyEnsembleError,
    Ensemble,
    MalformedFileError,
    NonPositivePriorError,
    NotPSDStateError,
    PriorSumError,
    UnitTraceError,
    average_state,
    digest,
    dumps,
    load,
    load_operator,
    loads,
    save,
    save_operator,
    two_state_subensemble,
)
from mcdlab.linalg import HermitianOperator, identity, ket, projector
from mcdlab.sampling import random_ensemble

from oracles import example_matrices


def mixed(dims):
    return identity(dims) / float(np.prod(dims))


def test_example_ensemble_matches_oracle(example):
    r1, r2, r3, r0 = example_matrices()
    assert example.dims == (2, 3) and example.n == 3
    for got, want in zip(example.states, (r1, r2, r3)):
        assert np.allclose(got.matrix, want, atol=1e-15)
    assert np.allclose(example.rho0.matrix, r0, atol=1e-15)
    assert average_state(example).support_rank == 4


def test_weighted(example):
    assert np.allclose(example.weighted(2).matrix, example.states[2].matrix / 3)


def test_average_state_full_rank():
    E = Ensemble((0.5, 0.5), (mixed((2, 2)), projector(ket((2, 2), (0, 1)), (2, 2))))
    avg = average_state(E)
    assert avg.support_rank == 4
    assert np.isclose(avg.rho0.trace(), 1)


def test_priors_renormalized_inside_window():
    E = Ensemble((0.5 + 4e-11, 0.5), (mixed(2), mixed(2)))
    assert abs(sum(E.priors) - 1) < 1e-15


@pytest.mark.parametrize(
    "priors,states,error",
    [
        ((), (), EmptyEnsembleError),
        ((0.5, 0.5), (mixed(2), mixed(3)), DimensionMismatchError),
        ((1.0, 0.0), (mixed(2), mixed(2)), NonPositivePriorError),
        ((1.2, -0.2), (mixed(2), mixed(2)), NonPositivePriorError),
        ((0.5, 0.4), (mixed(2), mixed(2)), PriorSumError),
        ((1.0,), (identity(2),), UnitTraceError),
        ((1.0,), (HermitianOperator(np.diag([1.5, -0.5])),), NotPSDStateError),
    ],
)
def test_validation_errors(priors, states, error):
    with pytest.raises(error):
        Ensemble(priors, states)


def test_error_codes_are_distinct():
    codes = {e.code for e in (DimensionMismatchError, EmptyEnsembleError, MalformedFileError, NonPositivePriorError, NotPSDStateError, PriorSumError, UnitTraceError)}
    assert len(codes) == 7


def test_two_state_subensemble(example):
    sub = two_state_subensemble(example, 0, 0.6)
    assert sub.priors == (0.6, 0.4)
    assert sub.states[0] == example.rho0 and sub.states[1] == example.states[0]
    with pytest.raises(ValueError):
        two_state_subensemble(example, 0, 1.0)
    with pytest.raises(IndexError):
        two_state_subensemble(example, 3, 0.5)


def test_json_round_trip(example, tmp_path):
    path = tmp_path / "e.json"
    save(example, path)
    assert load(path) == example
    assert loads(dumps(example)) == example
    assert digest(load(path)) == digest(example)


def test_example_corpus_file_loads(tmp_path):
    text = json.dumps(
        {
            "dims": [2, 2],
            "items": [
                {"prior": 0.5, "re": [[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]},
                {"prior": 0.5, "re": np.diag([0, 0, 0, 1]).tolist(), "im": np.zeros((4, 4)).tolist()},
            ],
        }
    )
    E = loads(text)
    assert E.dims == (2, 2) and E.n == 2


def test_digest_distinguishes(example):
    other = Ensemble(example.priors, (example.states[1], example.states[0], example.states[2]))
    assert digest(other) != digest(example)


@pytest.mark.parametrize(
    "text,error",
    [
        ("not json", MalformedFileError),
        ("[]", MalformedFileError),
        ('{"items": []}', MalformedFileError),
        ('{"dims": [2], "items": []}', EmptyEnsembleError),
        ('{"dims": "2", "items": []}', MalformedFileError),
        ('{"dims": [2], "items": [{"prior": 1, "re": [[1, 0, 0], [0, 0, 0], [0, 0, 0]]}]}', DimensionMismatchError),
        ('{"dims": [2], "items": [{"prior": "1", "re": [[1, 0], [0, 0]]}]}', MalformedFileError),
        ('{"dims": [2], "items": [{"prior": 1, "re": [[1, "x"], [0, 0]]}]}', MalformedFileError),
        ('{"dims": [2], "items": [{"prior": 1}]}', MalformedFileError),
        ('{"dims": [2], "items": [{"prior": 1, "re": [[2, 0], [0, 0]]}]}', UnitTraceError),
    ],
)
def test_malformed_files(text, error):
    with pytest.raises(error):
        loads(text)


def test_missing_file(tmp_path):
    with pytest.raises(MalformedFileError):
        load(tmp_path / "absent.json")


def test_operator_round_trip(tmp_path, example):
    path = tmp_path / "w.json"
    W = 0.5 * example.rho0 - example.weighted(0)
    save_operator(W, path)
    assert load_operator(path) == W


def test_conjugate_preserves_validity(rng, example):
    u = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))[0]
    F = example.conjugate(u)
    assert np.allclose(F.rho0.matrix, u @ example.rho0.matrix @ u.conj().T)


@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.sampled_from([(2, 2), (2, 3)]))
def test_random_ensembles_are_valid(seed, n, dims):
    E = random_ensemble(dims, n, np.random.default_rng(seed))
    assert E.n == n and E.dims == dims
    assert abs(sum(E.priors) - 1) < 1e-12
    assert loads(dumps(E)) == E
