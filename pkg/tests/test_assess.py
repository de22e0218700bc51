import numpy as np
import pytest
from scipy import stats

import oracles
from helpers import point_draws
from usualmvpa import assess, dist, simulate


def test_table4_published_columns():
    o = oracles.TABLE4_OBSERVED
    gp = assess.chisq_proportions(o, oracles.TABLE4_EXPECTED_GP)
    nb = assess.chisq_proportions(o, oracles.TABLE4_EXPECTED_NB)
    assert gp[0] == pytest.approx(oracles.TABLE4_HOMOGENEITY_GP, rel=1e-12)
    assert nb[0] == pytest.approx(oracles.TABLE4_HOMOGENEITY_NB, rel=1e-12)
    assert gp[1] == nb[1] == 8
    # the published NB statistic is reproduced, the published GP one is not
    assert nb[0] == pytest.approx(oracles.TABLE4_CHISQ_NB, rel=0.005)
    assert nb[2] < 1e-6 and gp[2] > 0.8


def test_table4_goodness_of_fit_variant():
    o = oracles.TABLE4_OBSERVED
    gp = assess.chisq_proportions(o, oracles.TABLE4_EXPECTED_GP, "goodness_of_fit")
    nb = assess.chisq_proportions(o, oracles.TABLE4_EXPECTED_NB, "goodness_of_fit")
    assert gp[0] == pytest.approx(oracles.TABLE4_GOF_GP, rel=1e-12)
    assert nb[0] == pytest.approx(oracles.TABLE4_GOF_NB, rel=1e-12)


def test_chisq_zero_iff_equal():
    e = np.array([10.0, 20, 30, 5, 5, 5, 5, 5, 15])
    for method in ("homogeneity", "goodness_of_fit"):
        assert assess.chisq_proportions(e, e, method)[0] == 0.0
        assert assess.chisq_proportions(e, e, method)[2] == 1.0
        bumped = e.copy()
        bumped[0] += 1
        assert assess.chisq_proportions(bumped, e, method)[0] > 0


def test_chisq_errors():
    with pytest.raises(ValueError, match="pool"):
        assess.chisq_proportions(np.ones(9), np.r_[0.0, np.ones(8)])
    with pytest.raises(ValueError):
        assess.chisq_proportions(np.ones(9), np.ones(9), "g-test")


def test_combo_table():
    y1 = np.zeros((40, 2), int)
    assert assess.bout_combo_table(y1).tolist() == [40] + [0] * 8
    y1 = np.array([[0, 0], [1, 0], [5, 0], [0, 1], [0, 3], [1, 1], [1, 2], [4, 1], [2, 9]])
    assert assess.bout_combo_table(y1).tolist() == [1] * 9
    assert assess.COMBO_LABELS[2] == "2+,0"


def test_combo_table_sums_to_n(small_cohort):
    panel = small_cohort[2]
    assert assess.bout_combo_table(panel.y1).sum() == panel.n


def test_ppp_ties_and_negation():
    assert assess.ppp_value(3.0, np.full(50, 3.0)) == 0.0
    rng = np.random.default_rng(0)
    rep = rng.normal(size=999)
    p = assess.ppp_value(0.3, rep)
    assert assess.ppp_value(-0.3, -rep) == pytest.approx(1 - p)
    with pytest.raises(ValueError):
        assess.ppp_value(1.0, [])


def test_within_person_statistics():
    y1 = np.array([[0, 2], [3, 3], [1, 4]])
    assert assess.within_person_range(y1) == pytest.approx(5 / 3)
    assert assess.within_person_sd(y1) == pytest.approx(np.mean([np.sqrt(2), 0, np.sqrt(4.5)]))


def test_ks_cases():
    x = np.arange(1.0, 51.0)
    assert assess.ks_y2(x, x) == (0.0, 1.0)
    rng = np.random.default_rng(1)
    d, p = assess.ks_y2(np.exp(rng.normal(0, 1, 500)), np.exp(rng.normal(1, 1, 500)))
    assert p < 1e-6
    with pytest.raises(ValueError):
        assess.ks_y2(np.zeros(5), x)
    s = assess.ks_summary([0.1, 0.2, 0.3, 0.4, 0.5])
    assert s.loc[0, "median"] == 0.3 and s.loc[0, "mean"] == pytest.approx(0.3)


def _state(lam=0.2):
    return simulate.reference_truth(lam=lam, gamma=np.array([0.4, 0.3]), beta=np.array([2.5, 0.1]))


def test_single_draw_archive_replicates():
    rng = np.random.default_rng(2)
    Z = np.column_stack([np.ones(50), rng.normal(size=50)])
    reps = assess.replicate_datasets(point_draws(_state()), Z, 3, rng)
    assert len(reps) == 3 and all(r.draw == 0 for r in reps)
    assert not np.array_equal(reps[0].y1, reps[1].y1)
    for r in reps:
        assert np.array_equal(r.y1 > 0, r.y2 > 0)
    with pytest.raises(ValueError):
        assess.replicate_datasets(point_draws(_state()), Z, 0, rng)


def test_replicates_are_reproducible():
    Z = np.ones((20, 1))
    st = simulate.reference_truth(gamma=np.array([0.5]), beta=np.array([2.5]))
    a = assess.replicate_datasets(point_draws(st, 5), Z, 4, np.random.default_rng(3))
    b = assess.replicate_datasets(point_draws(st, 5), Z, 4, np.random.default_rng(3))
    assert all(np.array_equal(x.y2, y.y2) for x, y in zip(a, b))


def test_replicate_moments():
    rng = np.random.default_rng(4)
    st = _state()
    Z = np.column_stack([np.ones(40), rng.normal(size=40)])
    reps = assess.replicate_datasets(point_draws(st), Z, 1000, rng)
    y = np.array([r.y1.mean() for r in reps])
    s11 = st.Sigma_b[0, 0]
    mu1 = np.exp(Z @ st.gamma + s11 / 2)
    assert abs(y.mean() - mu1.mean()) < 4 * y.std(ddof=1) / np.sqrt(y.size)
    # zero fraction against E exp(-theta) integrated over b1 by quadrature
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    b1 = nodes * np.sqrt(s11)
    p0 = dist.genpois_p_zero(np.exp(Z @ st.gamma)[:, None] * np.exp(b1)[None, :], st.lam) @ weights
    p0 = p0.mean() / weights.sum()
    z = np.array([np.mean(r.y1 == 0) for r in reps])
    assert abs(z.mean() - p0) < 4 * z.std(ddof=1) / np.sqrt(z.size)


def test_predictive_check(small_cohort, small_fit):
    panel = small_cohort[2]
    chk = assess.posterior_predictive_check(small_fit, panel, M=60, rng=np.random.default_rng(5))
    assert chk.combo["observed"].sum() == panel.n
    assert chk.combo["expected"].sum() == pytest.approx(panel.n)
    assert chk.chisq[1] == 8 and 0 <= chk.chisq[2] <= 1
    assert set(chk.ppc["statistic"]) == set(assess.STATISTICS)
    assert np.all((chk.ppc["ppp"] >= 0) & (chk.ppc["ppp"] <= 1))
    assert chk.ks_pvalues.size == 60
    assert 0.1 < chk.ks_pvalues.mean() < 0.9


def test_ks_well_specified_mean():
    # replicates drawn from the generating value: KS p-values are near uniform
    rng = np.random.default_rng(6)
    st = simulate.reference_truth(gamma=np.array([0.8]), beta=np.array([2.8]))
    Z = np.ones((1057, 1))
    obs, _ = simulate.simulate_panel(st, Z, rng)
    reps = assess.replicate_datasets(point_draws(st), Z, 200, rng)
    p = np.array([assess.ks_y2(obs.y2, r.y2)[1] for r in reps])
    assert 0.3 < p.mean() < 0.65
    assert stats.kstest(p, "uniform").statistic < 0.35
