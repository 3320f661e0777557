import datetime as dt
import json

import numpy as np
import pytest

from neurosurv import data as Dd
from neurosurv import distributions as D
from neurosurv import synthgen as sg
from neurosurv.aft import fit_aft
from neurosurv.data import Status
from neurosurv.distributions import Family
from neurosurv.errors import ParameterError
from neurosurv.km import km_fit

NO_BA = -40.0  # logit of a practically impossible BA outcome


def test_degenerate_never_ba_and_far_study_end():
    spec = sg.SectorSpec(n=300, ba_intercept=NO_BA, study_end=dt.date(2400, 1, 1))
    ds, truth = sg.generate_sector(spec, seed=1)
    assert all(c.status is Status.IPO for c in ds)
    assert truth["censoring_fraction"] == 0.0 and truth["n_ba"] == 0


def test_degenerate_always_ba():
    ds, truth = sg.generate_sector(sg.SectorSpec(n=200, ba_intercept=40.0), seed=2)
    assert len(Dd.filter_conditional(ds)) == 0
    assert truth["n_ba"] == 200
    statuses = {c.status for c in ds}
    assert statuses == {Status.BANKRUPT, Status.ACQUISITION}


def test_study_composition_and_determinism(tmp_path):
    specs = [sg.SectorSpec(sector=s, n=150) for s in range(1, 10)]
    a, truth = sg.generate_study(specs, seed=7)
    b, _ = sg.generate_study(specs, seed=7)
    assert len(a) == 1350 and a.sectors == list(range(1, 10))
    assert set(truth["sectors"]) == {str(s) for s in range(1, 10)}
    Dd.write_csv(a, tmp_path / "a.csv")
    Dd.write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c, _ = sg.generate_study(specs, seed=8)
    assert c.companies != a.companies


def test_sector_stream_independent_of_companions():
    s3 = sg.SectorSpec(sector=3, n=100)
    alone, _ = sg.generate_study([s3], seed=5, shared_pool=False)
    mixed, _ = sg.generate_study([sg.SectorSpec(sector=1, n=80), s3], seed=5, shared_pool=False)
    assert [c for c in mixed if c.sector == 3] == list(alone.companies)


def test_duplicate_sector_ids():
    with pytest.raises(ParameterError, match="duplicate"):
        sg.generate_study([sg.SectorSpec(sector=2), sg.SectorSpec(sector=2)], seed=0)


def test_spec_validation():
    with pytest.raises(ParameterError):
        sg.SectorSpec(n=0)
    with pytest.raises(ParameterError):
        sg.SectorSpec(family="generalized_f", shapes=(1.0,))
    with pytest.raises(ParameterError):
        sg.SectorSpec(round_probs=(0.5, 0.5, 0.5))
    assert sg.SectorSpec(family="exponential", sigma=3.0).sigma == 1.0


def test_spec_round_trip():
    spec = sg.SectorSpec(sector=4, family=Family.GENERALIZED_F, shapes=(2.0, 3.0),
                         coefficients={"avg_rank_1": 0.5, 13: -0.2})
    back = sg.SectorSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec
    assert back.coefficients[0] == 0.5 and back.coefficients[13] == -0.2


def test_censoring_matches_analytic():
    spec = sg.SectorSpec(n=5000, ba_intercept=NO_BA, coefficients={"avg_rank_1": 0.5, "vix_1": 0.6},
                         foundation_start=dt.date(2008, 1, 1), foundation_end=dt.date(2017, 12, 31))
    _, truth = sg.generate_sector(spec, seed=3)
    assert abs(truth["censoring_fraction"] - truth["expected_censoring"]) < 0.02


@pytest.mark.parametrize("family,shapes", [(Family.WEIBULL, ()), (Family.LOGNORMAL, ()),
                                           (Family.GENERALIZED_F, (1.5, 2.5))])
def test_km_converges_to_true_survival(family, shapes):
    spec = sg.SectorSpec(n=10000, family=family, shapes=shapes, a0=1.2, sigma=0.6, ba_intercept=NO_BA,
                         foundation_start=dt.date(2006, 1, 1))
    ds, _ = sg.generate_sector(spec, seed=11)
    t, e = Dd.survival_arrays(ds, spec.study_end)
    km = km_fit(t, e)
    true = D.survival(D.TimeLaw.of(family, 1.2, 0.6, shapes), km.event_times)
    # compare both sides of each step
    sup = max(np.max(np.abs(km.estimates - true)), np.max(np.abs(km.left_limit(km.event_times) - true)))
    assert sup < 0.03


def test_feature_invariants_and_truth_keys():
    ds, truth = sg.generate_sector(sg.SectorSpec(n=400), seed=4)
    X = Dd.feature_matrix(ds, Dd.compute_investor_ranks(ds))
    for r in range(3):
        avg, mx, mn, k = X[:, 4 * r], X[:, 4 * r + 1], X[:, 4 * r + 2], X[:, 4 * r + 3]
        has = k > 0
        assert np.all((mn[has] <= avg[has]) & (avg[has] <= mx[has]) & (mn[has] >= 1))
    assert np.all(X[:, 3] >= 1)
    assert np.allclose(truth["feature_center"], X.mean(0))
    assert {"spec", "n_ba", "n_ipo", "n_private", "expected_censoring", "seed"} <= set(truth)
    assert truth["n_ba"] + truth["n_ipo"] + truth["n_private"] == 400


def test_ipo_dates_follow_foundation():
    ds, _ = sg.generate_sector(sg.SectorSpec(n=500), seed=6)
    for c in ds:
        if c.status is Status.IPO:
            assert c.foundation_date < c.ipo_date
            assert c.ipo_date <= dt.date(2018, 12, 31)


def test_weibull_recovery_on_truth_scale():
    spec = sg.SectorSpec(n=5000, ba_intercept=NO_BA, coefficients={"avg_rank_1": 0.5, "n_investors_2": -0.5,
                                                                 "vix_1": 0.6},
                         foundation_start=dt.date(2008, 1, 1), foundation_end=dt.date(2017, 12, 31))
    ds, truth = sg.generate_sector(spec, seed=0)
    assert 0.17 < truth["censoring_fraction"] < 0.27
    t, e = Dd.survival_arrays(ds, spec.study_end)
    X = Dd.feature_matrix(ds, Dd.compute_investor_ranks(ds))
    fit = fit_aft(Family.WEIBULL, t, e, X, columns=[0, 7, 12])
    a0, a = sg.to_truth_scale(fit, truth)
    assert a0 == pytest.approx(1.0, rel=0.05)
    assert np.allclose(a[[0, 7, 12]], [0.5, -0.5, 0.6], rtol=0.05)
    assert fit.scale == pytest.approx(0.5, rel=0.05)


def test_write_truth(tmp_path):
    _, truth = sg.generate_study([sg.SectorSpec(n=50)], seed=1)
    sg.write_truth(truth, tmp_path / "truth.json")
    back = json.loads((tmp_path / "truth.json").read_text())
    assert back["sectors"]["1"]["spec"]["family"] == "weibull"
