import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interurn import (
    Deterministic,
    DirichletColumns,
    RandomScaled,
    SingleBallMultinomial,
    SystemSpec,
    UrnSpec,
    moments_of,
    system_from_json,
    system_to_json,
    validate_spec,
)
from interurn.errors import (
    ColumnSumNotConstant,
    DimensionMismatch,
    NegativeEntry,
    RowNotStochastic,
)

from conftest import H1, H2, two_urn_system

ALL_FAMILIES = [
    Deterministic(H1),
    SingleBallMultinomial(H1),
    DirichletColumns(H1, kappa=8.0),
    RandomScaled(H1),
]


def test_validate_accepts_reference_matrices():
    sys2 = two_urn_system(0.8, 0.8)
    assert np.allclose(sys2.urns[0].H.sum(axis=0), 1.0, atol=1e-12)
    assert sys2.c.tolist() == [1.0, 1.0]
    assert sys2.balanced


def test_w_row_not_stochastic():
    W = np.array([[0.5, 0.4], [0.2, 0.8]])
    spec = SystemSpec(K=2, W=W, urns=(UrnSpec(SingleBallMultinomial(H1)),) * 2)
    with pytest.raises(RowNotStochastic):
        validate_spec(spec)


def test_w_entry_outside_unit_interval():
    W = np.array([[1.2, -0.2], [0.0, 1.0]])
    spec = SystemSpec(K=2, W=W, urns=(UrnSpec(SingleBallMultinomial(H1)),) * 2)
    with pytest.raises(RowNotStochastic):
        validate_spec(spec)


def test_negative_entry_rejected():
    H = np.array([[1.1, 0.5], [-0.1, 0.5]])
    spec = SystemSpec(K=2, W=np.eye(2), urns=(UrnSpec(Deterministic(H)), UrnSpec(Deterministic(H1))))
    with pytest.raises(NegativeEntry):
        validate_spec(spec)


def test_column_sums_must_agree():
    H = np.array([[0.75, 0.6], [0.25, 0.5]])  # columns sum to 1 and 1.1
    spec = SystemSpec(K=2, W=np.array([[1.0]]), urns=(UrnSpec(SingleBallMultinomial(H)),))
    with pytest.raises(ColumnSumNotConstant):
        validate_spec(spec)


def test_declared_c_mismatch():
    spec = SystemSpec(
        K=2, W=np.array([[1.0]]), urns=(UrnSpec(SingleBallMultinomial(H1), c=2.0),)
    )
    with pytest.raises(ColumnSumNotConstant):
        validate_spec(spec)


def test_c_normalization():
    spec = SystemSpec(K=2, W=np.array([[1.0]]), urns=(UrnSpec(Deterministic(2.0 * H1)),))
    v = validate_spec(spec)
    assert v.c[0] == pytest.approx(2.0)
    assert np.allclose(v.urns[0].H, H1)
    # the omitted-initial default is already in normalized units (T0 = 1)
    assert np.allclose(v.initial[0], [0.5, 0.5])
    # explicitly given compositions are raw and get rescaled by c
    spec2 = SystemSpec(
        K=2,
        W=np.array([[1.0]]),
        urns=(UrnSpec(Deterministic(2.0 * H1)),),
        initial=(np.array([3.0, 1.0]),),
    )
    assert np.allclose(validate_spec(spec2).initial[0], [1.5, 0.5])


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        validate_spec(SystemSpec(K=2, W=np.eye(3), urns=(UrnSpec(SingleBallMultinomial(H1)),) * 2))
    H3 = np.eye(3) / 1.0
    with pytest.raises(DimensionMismatch):
        validate_spec(SystemSpec(K=2, W=np.array([[1.0]]), urns=(UrnSpec(Deterministic(H3)),)))


def test_initial_must_be_positive():
    spec = SystemSpec(
        K=2,
        W=np.array([[1.0]]),
        urns=(UrnSpec(SingleBallMultinomial(H1)),),
        initial=(np.array([1.0, 0.0]),),
    )
    with pytest.raises(NegativeEntry):
        validate_spec(spec)


def test_default_initial_is_uniform():
    v = two_urn_system(0.8, 0.8)
    assert np.allclose(v.initial, 0.5)


def test_kappa_must_be_positive():
    spec = SystemSpec(
        K=2, W=np.array([[1.0]]), urns=(UrnSpec(DirichletColumns(H1, kappa=0.0)),)
    )
    with pytest.raises(NegativeEntry):
        validate_spec(spec)


def test_validate_idempotent():
    v = two_urn_system(0.8, 0.8)
    v2 = validate_spec(v.as_spec())
    for a, b in zip(v.urns, v2.urns):
        assert np.array_equal(a.H, b.H)
    assert np.array_equal(v.initial, v2.initial)
    assert np.array_equal(v.W, v2.W)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
@settings(max_examples=25, deadline=None)
def test_validate_idempotent_property(alpha, beta):
    v = two_urn_system(alpha, beta)
    v2 = validate_spec(v.as_spec())
    assert all(np.array_equal(a.H, b.H) for a, b in zip(v.urns, v2.urns))


# ---------------------------------------------------------------------------
# Moments


def test_deterministic_covariance_zero():
    _, C = moments_of(Deterministic(H1))
    assert all(np.array_equal(c, np.zeros((2, 2))) for c in C)


def test_single_ball_covariance_closed_form():
    _, C = moments_of(SingleBallMultinomial(H1))
    expected = np.array([[3 / 16, -3 / 16], [-3 / 16, 3 / 16]])
    assert np.allclose(C[0], expected, atol=1e-15)


def test_single_ball_second_moment_monte_carlo():
    # E[D_i D_i'] = diag(H_i): the diagonal is a multinomial frequency vector.
    model = SingleBallMultinomial(H1)
    rng = np.random.default_rng(1234)
    n = 10**6
    D = model.sample(rng, size=n)
    for i in range(2):
        emp = np.einsum("rk,rl->kl", D[:, :, i], D[:, :, i]) / n
        target = np.diag(H1[:, i])
        se = np.sqrt(H1[:, i] * (1 - H1[:, i]) / n)
        assert np.all(np.abs(np.diag(emp) - np.diag(target)) <= 3 * se + 1e-12)
        assert np.abs(emp - np.diag(np.diag(emp))).max() == 0.0


@pytest.mark.parametrize("model", ALL_FAMILIES, ids=lambda m: m.name)
def test_family_mean_matches_h(model):
    rng = np.random.default_rng(777)
    n = 10**5
    D = model.sample(rng, size=n)
    emp = D.mean(axis=0)
    H, C = moments_of(model)
    # 4 standard errors entrywise, from the known per-entry variances
    var = np.stack([np.diag(c) for c in C], axis=1)
    band = 4 * np.sqrt(var / n) + 1e-12
    assert np.all(np.abs(emp - H) <= band)


@pytest.mark.parametrize(
    "model", [DirichletColumns(H1, kappa=8.0), RandomScaled(H1)], ids=lambda m: m.name
)
def test_family_covariance_matches_closed_form(model):
    rng = np.random.default_rng(4321)
    n = 2 * 10**5
    D = model.sample(rng, size=n)
    H, C = moments_of(model)
    for i in range(2):
        x = D[:, :, i]
        emp = np.cov(x.T)
        assert np.abs(emp - C[i]).max() < 0.01


def test_balanced_families_have_unit_column_sums():
    rng = np.random.default_rng(5)
    for model in ALL_FAMILIES[:3]:
        D = model.sample(rng, size=2000)
        tol = 1e-12 if model.name == "dirichlet_columns" else 0.0
        assert np.abs(D.sum(axis=1) - 1.0).max() <= tol


def test_random_scaled_not_balanced():
    assert not RandomScaled(H1).balanced
    sysr = validate_spec(
        SystemSpec(K=2, W=np.array([[1.0]]), urns=(UrnSpec(RandomScaled(H1)),))
    )
    assert not sysr.balanced


# ---------------------------------------------------------------------------
# JSON


def test_json_roundtrip_is_bit_exact():
    v = two_urn_system(0.8, 0.8)
    doc = json.loads(system_to_json(v))
    v2 = validate_spec(system_from_json(doc))
    for a, b in zip(v.urns, v2.urns):
        assert a.H.tolist() == b.H.tolist()
    assert doc["W"] == v.W.tolist()


def test_json_requires_kappa_for_dirichlet():
    doc = {"K": 2, "W": [[1.0]], "urns": [{"model": "dirichlet_columns", "H": H1.tolist()}]}
    with pytest.raises(DimensionMismatch):
        system_from_json(doc)


def test_json_unknown_model():
    doc = {"K": 2, "W": [[1.0]], "urns": [{"model": "nope", "H": H1.tolist()}]}
    with pytest.raises(DimensionMismatch):
        system_from_json(doc)
