"""Risk estimators: direct means, Monte-Carlo statistics, closed forms."""

import json
import math

import numpy as np
import pytest

from gengap.codebook import generate_codebook
from gengap.errors import InvalidClosedForm, OutOfRange
from gengap.instance_gd import GdParams, loss_gd, sample_gd_dataset
from gengap.instance_sgd import SgdParams, force_good_event_sgd, loss_sgd
from gengap.instance_smallstep import SmallstepParams, loss_smallstep
from gengap.optim import run_gd, run_sgd, run_smallstep
from gengap.risk import (
    RiskReport,
    empirical_risk,
    gap_report,
    population_risk_closed_gd,
    population_risk_mc,
)


@pytest.fixture(scope="module")
def gd_setup():
    params = GdParams(2, 4, 8, dprime=8)
    codebook = generate_codebook(4, 8, seed=3)
    dataset = sample_gd_dataset(params, 11, policy="reject-until-E")
    traj = run_gd(codebook, dataset, params)
    return params, codebook, dataset, traj


def test_empirical_risk_is_the_training_mean(gd_setup):
    params, codebook, dataset, traj = gd_setup
    w = traj.iterate(params.steps)
    want = np.mean([loss_gd(w, s, params, codebook)
                    for s in zip(dataset.masks, dataset.slots)])
    got = empirical_risk(w, dataset, params, codebook)
    assert math.isclose(got, want, rel_tol=1e-14)


def test_empirical_risk_smallstep_is_the_loss_itself():
    p = SmallstepParams(eta=0.1, steps=10)
    traj = run_smallstep(p)
    w = traj.iterate(p.steps)
    assert empirical_risk(w, None, p) == loss_smallstep(w, p)


def test_empirical_risk_sgd_is_the_training_mean():
    params = SgdParams(4, 8, dprime=16)
    codebook = generate_codebook(8, 16, seed=3)
    dataset = force_good_event_sgd(params, 21)
    traj = run_sgd(codebook, dataset, params)
    w = traj.iterate(params.n)
    want = np.mean([loss_sgd(w, m, params, codebook) for m in dataset.masks])
    assert math.isclose(empirical_risk(w, dataset, params, codebook), want,
                        rel_tol=1e-14)


def test_population_smallstep_is_deterministic():
    p = SmallstepParams(eta=0.1, steps=10)
    w = run_smallstep(p).iterate(p.steps)
    est, stderr = population_risk_mc(w, p)
    assert est == loss_smallstep(w, p)
    assert stderr == 0.0


def test_population_mc_is_seed_reproducible(gd_setup):
    params, codebook, _, traj = gd_setup
    w = traj.iterate(params.steps)
    a = population_risk_mc(w, params, codebook, n_samples=500, seed=42)
    b = population_risk_mc(w, params, codebook, n_samples=500, seed=42)
    assert a == b
    c = population_risk_mc(w, params, codebook, n_samples=500, seed=43)
    assert a != c


def test_population_mc_needs_two_samples(gd_setup):
    params, codebook, _, _ = gd_setup
    with pytest.raises(OutOfRange):
        population_risk_mc(np.zeros(params.dim), params, codebook, n_samples=1)


def test_population_mc_is_unbiased_against_the_closed_form(gd_setup):
    # 50 independent estimates of F(w_T); their mean must sit within three
    # pooled standard errors of the exact value
    params, codebook, _, traj = gd_setup
    w = traj.iterate(params.steps)
    closed = population_risk_closed_gd(params.steps, params)
    ests, ses = [], []
    for seed in range(50):
        est, se = population_risk_mc(w, params, codebook, n_samples=2000,
                                     seed=seed)
        ests.append(est)
        ses.append(se)
    pooled = math.sqrt(np.mean(np.square(ses)) / len(ses))
    assert abs(np.mean(ests) - closed) <= 3.0 * pooled


def test_closed_form_baseline_matches_the_floor_value(gd_setup):
    params, _, _, _ = gd_setup
    want = (params.l1_floor * math.sqrt(params.steps - 1)
            + params.delta1 + params.delta2)
    assert math.isclose(population_risk_closed_gd(0, params), want,
                        rel_tol=1e-12)
    # before any step block exists the risk equals the zero-vector risk
    assert population_risk_closed_gd(1, params) \
        == population_risk_closed_gd(0, params)


def test_closed_form_point_domain(gd_setup):
    params, _, _, _ = gd_setup
    for t in (2, 3, 4):
        with pytest.raises(InvalidClosedForm):
            population_risk_closed_gd(t, params)
    with pytest.raises(OutOfRange):
        population_risk_closed_gd(params.steps, params, u0_index=99)
    short = GdParams(2, 4, 4, dprime=8)
    with pytest.raises(InvalidClosedForm):
        population_risk_closed_gd(0, short)
    # length-1 suffix window is the last iterate itself
    assert population_risk_closed_gd(("suffix", 1), params) \
        == population_risk_closed_gd(params.steps, params)


def test_closed_form_excess_is_positive_beyond_the_warmup(gd_setup):
    params, _, _, _ = gd_setup
    base = population_risk_closed_gd(0, params)
    for t in range(5, params.steps + 1):
        assert population_risk_closed_gd(t, params) > base


def test_gap_report_rows_and_arithmetic(gd_setup):
    params, codebook, dataset, traj = gd_setup
    reports = gap_report(traj, dataset, params, codebook,
                         suffix_lengths=(1, 2), n_samples=500, seed=0)
    assert [r.suffix_length for r in reports] == [1, 2]
    for r in reports:
        assert r.family == "gd"
        assert math.isclose(r.excess_empirical,
                            r.empirical - r.baseline_empirical, rel_tol=1e-12)
        assert math.isclose(r.excess_population,
                            r.population - r.baseline_population,
                            rel_tol=1e-9)
        assert r.population_stderr > 0.0
        assert {t.name for t in r.thresholds} == {
            "population-excess-last-iterate", "population-excess-any-suffix"}


def test_gap_report_smallstep_thresholds():
    p = SmallstepParams(eta=0.02, steps=100)
    traj = run_smallstep(p)
    (rep,) = gap_report(traj, None, p, suffix_lengths=(10,))
    assert rep.family == "smallstep"
    (thr,) = rep.thresholds
    assert thr.name == "value-any-suffix"
    assert math.isclose(thr.target, p.risk_threshold, rel_tol=1e-12)
    assert thr.satisfied  # this family meets its designed bound at any scale


def test_risk_report_serialization(gd_setup):
    params, codebook, dataset, traj = gd_setup
    (rep,) = gap_report(traj, dataset, params, codebook, suffix_lengths=(1,),
                        n_samples=500, seed=0)
    payload = json.loads(rep.to_json())
    assert payload["family"] == "gd"
    assert payload["suffix_length"] == 1
    row = rep.to_csv_row()
    fields = row.split(",")
    assert fields[0] == "gd"
    assert len(fields) == len(RiskReport.CSV_HEADER.split(","))
    # values reparse to the exact floats
    assert float(fields[2]) == rep.empirical


if __name__ == "__main__":
    p = GdParams(2, 4, 8, dprime=8)
    print("baseline", population_risk_closed_gd(0, p))
    print("final", population_risk_closed_gd(8, p))
