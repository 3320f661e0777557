import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosurv import cox
from neurosurv.errors import FitError, PreconditionError


def two_group_sample(rng, n, hr=2.0, cens=0.2):
    x = rng.binomial(1, 0.5, n).astype(float)
    T = rng.exponential(1.0 / np.where(x == 1, hr, 1.0))
    # exponential censoring with rate r gives P(C < T) = r / (r + lambda); average over groups
    r = cens / (1 - cens) * 1.5
    C = rng.exponential(1.0 / r, n)
    return np.minimum(T, C), T <= C, x[:, None]


def ph_sample(rng, n, beta=0.5):
    x = rng.normal(size=n)
    T = rng.exponential(1.0 / np.exp(beta * x))
    C = rng.exponential(4.0, n)
    return np.minimum(T, C), T <= C, x[:, None]


# fitting

def test_hazard_ratio_two_recovered():
    rng = np.random.default_rng(8)
    t, e, X = two_group_sample(rng, 2000)
    assert abs(np.mean(~e) - 0.2) < 0.03
    fit = cox.fit_cox(t, e, X)
    assert fit.coefficients[0] == pytest.approx(math.log(2), rel=0.10)
    assert fit.covariance.shape == (1, 1) and fit.covariance[0, 0] > 0


def test_zero_variance_covariate():
    with pytest.raises(FitError, match="non-identifiable"):
        cox.fit_cox([1.0, 2.0, 3.0], [1, 1, 1], np.zeros((3, 1)))


def test_separation_detected():
    t = np.arange(1.0, 11.0)
    with pytest.raises(FitError, match="separation"):
        cox.fit_cox(t, np.ones(10, bool), -t[:, None])


def test_score_at_zero_is_log_rank_numerator():
    t = np.array([1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.5, 7.0, 8.0])
    e = np.array([1, 1, 0, 1, 1, 0, 1, 1, 0, 1], bool)
    x = np.array([0, 1, 1, 0, 1, 0, 1, 0, 0, 1], float)
    observed_minus_expected = 0.0
    for tk in np.unique(t[e]):
        at_risk = t >= tk
        d = np.sum(e & (t == tk))
        d1 = np.sum(e & (t == tk) & (x == 1))
        observed_minus_expected += d1 - d * x[at_risk].sum() / at_risk.sum()
    _, score, _ = cox.cox_partial(np.zeros(1), t, e, x[:, None])
    assert score[0] == pytest.approx(observed_minus_expected, abs=1e-12)


def test_partial_likelihood_derivatives(rng):
    t, e, X = ph_sample(rng, 60)
    X = np.column_stack([X[:, 0], rng.normal(size=60)])
    beta = np.array([0.3, -0.2])
    _, U, I = cox.cox_partial(beta, t, e, X)
    h = 1e-6
    for j in range(2):
        d = np.zeros(2)
        d[j] = h
        up, U_up, _ = cox.cox_partial(beta + d, t, e, X)
        dn, U_dn, _ = cox.cox_partial(beta - d, t, e, X)
        assert U[j] == pytest.approx((up - dn) / (2 * h), rel=1e-6)
        assert np.allclose(I[:, j], -(U_up - U_dn) / (2 * h), rtol=1e-5)


# Schoenfeld residuals

def _at(beta):
    beta = np.atleast_1d(np.asarray(beta, float))
    return cox.CoxFit(beta, np.eye(beta.size), 0.0, 0, 0)


def test_identical_risk_set_gives_zero_residual():
    r, times = cox.schoenfeld_residuals(_at(0.0), [1.0, 2.0, 3.0], [1, 0, 0], np.full((3, 1), 4.0))
    assert r.tolist() == [[0.0]] and times.tolist() == [1.0]


def test_five_record_hand_example():
    t = [1.0, 2.0, 3.0, 4.0, 5.0]
    e = [1, 1, 1, 0, 0]
    x = np.array([[1.0], [0.0], [1.0], [0.0], [1.0]])
    r, _ = cox.schoenfeld_residuals(_at(0.0), t, e, x)
    assert np.allclose(r[:, 0], [1 - 3 / 5, 0 - 2 / 4, 1 - 2 / 3], rtol=0, atol=1e-15)
    # weighted means at beta = 1: ones carry weight e
    r, _ = cox.schoenfeld_residuals(_at(1.0), t, e, x)
    E = math.e
    assert np.allclose(r[:, 0], [1 - 3 * E / (3 * E + 2), -2 * E / (2 * E + 2), 1 - 2 * E / (2 * E + 1)],
                       rtol=0, atol=1e-15)


def test_residuals_sum_to_zero_at_fit(rng):
    t, e, X = ph_sample(rng, 500)
    X = np.column_stack([X, rng.normal(size=(500, 2))])
    fit = cox.fit_cox(t, e, X)
    r, _ = cox.schoenfeld_residuals(fit, t, e, X)
    assert r.shape == (e.sum(), 3)
    assert np.max(np.abs(r.sum(axis=0))) <= 1e-8


def test_squared_durations_same_coefficients(rng):
    t, e, X = ph_sample(rng, 300)
    a = cox.fit_cox(t, e, X)
    b = cox.fit_cox(t ** 2, e, X)
    assert np.max(np.abs(a.coefficients - b.coefficients)) <= 1e-8


# the proportional-hazards test

def test_fewer_than_two_events():
    with pytest.raises(PreconditionError):
        cox.pha_test(_at(0.0), [1.0, 2.0, 3.0], [1, 0, 0], [[0.0], [1.0], [2.0]])


def test_constructed_null_statistic():
    g = np.array([1.0, 2.0, 3.0, 4.0])
    resid = np.array([[1.0], [-1.0], [-1.0], [1.0]])  # orthogonal to g - mean(g)
    rep = cox.grambsch_therneau(resid, g, np.eye(1))
    assert rep.chisq[0] == pytest.approx(0.0, abs=1e-15)
    assert rep.global_p == pytest.approx(1.0, abs=1e-12) and not rep.rejected


def test_single_covariate_global_equals_per_covariate(rng):
    t, e, X = ph_sample(rng, 400)
    fit = cox.fit_cox(t, e, X)
    rep = cox.pha_test(fit, t, e, X)
    assert rep.df == 1
    assert abs(rep.global_chisq - rep.chisq[0]) <= 1e-9 * max(1.0, rep.global_chisq)
    assert rep.global_p == pytest.approx(rep.p_values[0], abs=1e-9)


@pytest.mark.parametrize("transform", ["km", "identity", "rank", "log"])
def test_affine_rescaling_leaves_p_values(rng, transform):
    t, e, X = ph_sample(rng, 300)
    X = np.column_stack([X, rng.normal(size=300)])
    X2 = X * np.array([3.0, -0.5]) + np.array([10.0, 2.0])
    a = cox.pha_test(cox.fit_cox(t, e, X), t, e, X, transform)
    b = cox.pha_test(cox.fit_cox(t, e, X2), t, e, X2, transform)
    assert np.allclose(a.p_values, b.p_values, rtol=1e-7)
    assert a.global_p == pytest.approx(b.global_p, rel=1e-7)


def test_time_varying_effect_rejected():
    rng = np.random.default_rng(21)
    n = 1000
    x = rng.binomial(1, 0.5, n).astype(float)
    E = rng.exponential(size=n)
    # beta(t) = 1 + t on a binary covariate with baseline hazard 0.3
    T = np.where(x == 0, E / 0.3, np.log1p(E / (0.3 * math.e)))
    C = rng.uniform(0, 5, n)
    t, e = np.minimum(T, C), T <= C
    fit = cox.fit_cox(t, e, x[:, None])
    assert cox.pha_test(fit, t, e, x[:, None]).rejected


def test_report_json(tmp_path, rng):
    t, e, X = ph_sample(rng, 200)
    fit = cox.fit_cox(t, e, X, names=["avg_rank_1"])
    rep = cox.pha_test(fit, t, e, X)
    rep.to_json(tmp_path / "pha.json")
    d = json.loads((tmp_path / "pha.json").read_text())
    assert d["covariates"][0]["name"] == "avg_rank_1"
    assert d["global_p_value"] == rep.global_p and d["rejected"] == rep.rejected


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_fit_invariants(seed):
    r = np.random.default_rng(seed)
    t, e, X = ph_sample(r, 80)
    X = np.column_stack([X, r.normal(size=80)])
    if e.sum() < 5:
        return
    fit = cox.fit_cox(t, e, X)
    perm = r.permutation(80)
    again = cox.fit_cox(t[perm], e[perm], X[perm])
    assert np.allclose(fit.coefficients, again.coefficients, atol=1e-9)
    assert np.all(np.linalg.eigvalsh(fit.covariance) > 0)
    rep = cox.pha_test(fit, t, e, X)
    assert np.all((rep.p_values >= 0) & (rep.p_values <= 1)) and 0 <= rep.global_p <= 1
