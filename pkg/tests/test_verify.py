import dataclasses

import numpy as np
import pytest

from interurn import RandomScaled, SingleBallMultinomial
from interurn.asymptotics import analyze
from interurn.errors import InsufficientCheckpoints, RegimeMismatch, UnbalancedModel
from interurn.simulate import EnsembleStats, ensemble, run
from interurn.verify import (
    check_clt,
    check_limits,
    check_rate,
    check_regime_c,
    check_total_balls,
    expected_rate_slope,
    fit_rate,
)

from conftest import H1, single_urn_system, two_urn_system


@pytest.fixture(scope="module")
def ex2_stats():
    sysx = two_urn_system(0.8, 0.8)
    rep = analyze(sysx)
    stats = ensemble(sysx, 2 * 10**4, 60, 808, checkpoints=(2 * 10**4,), reference=rep.z_inf)
    return sysx, rep, stats


def test_check_limits_passes(ex2_stats):
    _, rep, stats = ex2_stats
    res = check_limits(stats, rep.z_inf, atol=0.01)
    assert res.passed
    assert res.detail["max_err"] < 0.01 + res.detail["max_band"]


def test_check_limits_negative_control(ex2_stats):
    _, rep, stats = ex2_stats
    res = check_limits(stats, rep.z_inf + 0.1, atol=0.01)
    assert not res.passed


def test_checks_are_pure(ex2_stats):
    _, rep, stats = ex2_stats
    a = check_limits(stats, rep.z_inf)
    b = check_limits(stats, rep.z_inf)
    assert a == b


def _synthetic_stats(checkpoints, z):
    """EnsembleStats with fabricated snapshots (C, R, N, K)."""
    z = np.asarray(z, dtype=float)
    C, R, N, K = z.shape
    return EnsembleStats(
        checkpoints=tuple(checkpoints),
        z=z,
        t=np.ones((C, R, N)),
        t0=np.ones(N),
        base_seed=0,
        seeds=tuple(range(R)),
        reference=None,
        scaled=None,
        fingerprint="synthetic",
    )


def test_fit_rate_recovers_known_slope():
    steps = [10, 100, 1000, 10**4, 10**5]
    ref = np.full((1, 2), 0.5)
    z = np.stack(
        [ref[None] + (s**-0.5) * np.array([[[1.0, -1.0]]]) for s in steps]
    )  # (C, 1, 1, 2) -> broadcast to 2 reps
    z = np.repeat(z, 2, axis=1)
    stats = _synthetic_stats(steps, z)
    fit = fit_rate(stats, ref)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.slope_se == pytest.approx(0.0, abs=1e-10)


def test_fit_rate_constant_deviation_slope_zero():
    steps = [10, 100, 1000, 10**4]
    ref = np.full((1, 2), 0.5)
    z = np.repeat((ref + 0.07)[None, None], 2, axis=1)[None].repeat(4, axis=0).reshape(4, 2, 1, 2)
    stats = _synthetic_stats(steps, z)
    fit = fit_rate(stats, ref)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_requires_checkpoints():
    ref = np.full((1, 2), 0.5)
    z = np.zeros((2, 2, 1, 2)) + 0.5
    stats = _synthetic_stats([10, 100], z)
    with pytest.raises(InsufficientCheckpoints):
        fit_rate(stats, ref)


def test_check_rate_on_simulated_sqrt_n_case():
    sysx = two_urn_system(0.8, 0.2)
    rep = analyze(sysx)
    cps = tuple(sorted({int(round(p)) for p in np.geomspace(100, 10**5, 7)}))
    stats = ensemble(sysx, 10**5, 80, 5150, checkpoints=cps, reference=rep.z_inf)
    expected, band = expected_rate_slope(rep.subsystems[0])
    assert expected == -0.5
    res = check_rate(stats, rep.z_inf, expected, band=0.07)
    assert res.passed, res.detail


def test_check_clt_small_scale_and_negative_control():
    sys1 = single_urn_system(H1)
    rep = analyze(sys1)
    stats = ensemble(sys1, 2 * 10**4, 600, 606, checkpoints=(2 * 10**4,), reference=rep.z_inf)
    res = check_clt(stats, rep.subsystems[0], rep)
    assert res.passed, res.detail
    # inflate the predicted covariance: Frobenius gate must trip
    bad = dataclasses.replace(rep.subsystems[0], sigma=3.0 * rep.subsystems[0].sigma)
    assert not check_clt(stats, bad, rep).passed


def test_check_clt_follower_reduced_coordinates():
    # exercises the reduced-coordinate path end to end; the covariance
    # transient of this follower decays like n^(-1/4), so the band relies on
    # the sqrt(2000/R) scaling at this desk scale
    sysx = two_urn_system(1.0, 0.5)
    rep = analyze(sysx)
    stats = ensemble(sysx, 2 * 10**5, 400, 4545, checkpoints=(2 * 10**5,), reference=rep.z_inf)
    res = check_clt(stats, rep.subsystems[1], rep)
    assert res.passed, res.detail
    assert res.detail["reps_scale"] == pytest.approx(np.sqrt(5.0))


@pytest.mark.parametrize(
    "model,kw,seed",
    [
        ("DirichletColumns", {"kappa": 4.0}, 1111),
        ("Deterministic", {}, 1111),
    ],
)
def test_check_clt_non_multinomial_families(model, kw, seed):
    # the covariance formulas of the other balanced families, against
    # simulation (their closed forms are hand-checked in test_asymptotics)
    import interurn

    cls = getattr(interurn, model)
    sysx = single_urn_system(H1, model=cls, **kw)
    rep = analyze(sysx)
    stats = ensemble(sysx, 3 * 10**4, 600, seed, checkpoints=(3 * 10**4,), reference=rep.z_inf)
    res = check_clt(stats, rep.subsystems[0], rep)
    assert res.passed, res.detail
    assert res.detail["frobenius_rel_err"] < 0.1
    assert check_limits(stats, rep.z_inf, atol=0.01).passed


def test_check_clt_requires_balance():
    sysr = single_urn_system(H1, model=RandomScaled)
    rep = analyze(sysr)
    stats = ensemble(sysr, 1000, 4, 2, checkpoints=(1000,), reference=rep.z_inf)
    with pytest.raises(UnbalancedModel):
        check_clt(stats, rep.subsystems[0], rep)


def test_check_clt_requires_sqrt_regime():
    sysx = two_urn_system(0.8, 0.8)  # polynomial regime
    rep = analyze(sysx)
    stats = ensemble(sysx, 1000, 4, 2, checkpoints=(1000,), reference=rep.z_inf)
    with pytest.raises(RegimeMismatch):
        check_clt(stats, rep.subsystems[0], rep)


def test_regime_c_strongly_polynomial_passes():
    H = np.array([[0.96, 0.02, 0.02], [0.02, 0.96, 0.02], [0.02, 0.02, 0.96]])
    sysx = single_urn_system(H)
    rep = analyze(sysx)
    assert rep.subsystems[0].lambda_star.real == pytest.approx(0.94, abs=1e-9)
    paths = [
        run(sysx, 10**6, ss, (10**4, 10**5, 10**6))
        for ss in np.random.SeedSequence(90).spawn(50)
    ]
    res = check_regime_c(paths, rep.z_inf, rep.subsystems[0].lambda_star.real)
    assert res.passed
    assert res.detail["exponent"] == pytest.approx(0.06)


def test_regime_c_rejects_clt_regime():
    sys1 = single_urn_system(H1)
    rep = analyze(sys1)
    tr = run(sys1, 100, 1, (10, 50, 100))
    with pytest.raises(RegimeMismatch):
        check_regime_c([tr], rep.z_inf, rep.subsystems[0].lambda_star.real)


def test_regime_c_deterministic_single_color_trivially_stable():
    from interurn import Deterministic

    sys1 = single_urn_system(np.array([[1.0]]), model=Deterministic)
    paths = [run(sys1, 1000, s, (10, 100, 1000)) for s in range(5)]
    res = check_regime_c(paths, np.array([[1.0]]), 0.75)
    assert res.passed
    assert res.estimate == 1.0


def test_total_balls_balanced_exact(ex2_stats):
    sysx, _, stats = ex2_stats
    res = check_total_balls(stats, balanced=True)
    assert res.passed
    assert res.estimate == 0.0


def test_total_balls_corrupted_trajectory_fails(ex2_stats):
    sysx, _, _ = ex2_stats
    tr = run(sysx, 100, 4, (100,))
    bad = dataclasses.replace(tr, t=tr.t + 1.0)
    res = check_total_balls(bad, balanced=True)
    assert not res.passed


def test_total_balls_unbalanced_band():
    sysr = single_urn_system(H1, model=RandomScaled)
    stats = ensemble(sysr, 10**5, 30, 14, checkpoints=(10**5,))
    res = check_total_balls(stats, balanced=False)
    assert res.passed
    assert res.estimate >= 0.95
