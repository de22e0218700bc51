import numpy as np
import pytest
from sklearn.base import clone

from usualmvpa import TwoPartBoutModel
from usualmvpa.mcmc import PriorConfig
from usualmvpa.model import check_panel, resolve_prior


def test_params_and_clone():
    m = TwoPartBoutModel(n_iter=300, n_burnin=100, prior="set2")
    p = m.get_params()
    assert p["n_iter"] == 300 and p["prior"] == "set2" and p["count_model"] == "genpois"
    c = clone(m).set_params(thin=3)
    assert c.thin == 3 and m.thin == 5


def test_check_panel():
    y1, y2 = check_panel([[0, 2]], [[0.0, 4.0]])
    assert y1.dtype == np.int64
    with pytest.raises(ValueError):
        check_panel([[1, 0]], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        check_panel([[1.5, 0]], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        check_panel([[1, 0]], [[1.0, 0.0, 2.0]])
    with pytest.raises(ValueError):
        check_panel([[1, 0]], [[1.0, 0.0]], n=3)


def test_resolve_prior():
    assert resolve_prior(None) is resolve_prior("paper")
    pc = PriorConfig(iw_df=5.0)
    assert resolve_prior(pc) is pc
    with pytest.raises(ValueError):
        resolve_prior("flat")


def test_fit_predict(small_cohort):
    _, design, panel, _ = small_cohort
    m = TwoPartBoutModel(n_chains=2, n_iter=400, n_burnin=200, thin=2, random_state=3)
    m.fit(design.Z, panel.y1, panel.y2, feature_names=design.columns)
    assert m.n_features_in_ == design.Z.shape[1] and m.gamma_.shape == (design.Z.shape[1],)
    assert m.convergence_ is not None
    pred = m.predict(design.Z[:10], L=50, random_state=0)
    assert pred.shape == (10,) and np.all(pred > 0)
    c = m.compliance(design.Z, L=50, random_state=0)
    assert 0 <= c.lower <= c.mean <= c.upper <= 1
    w = m.compliance(design.Z, L=50, random_state=0, weights=np.ones(panel.n))
    assert w.mean == c.mean
    assert any(r["param"] == "gamma[bmi]" for r in m.summary())
    with pytest.raises(ValueError):
        m.predict(design.Z[:, :3])


def test_unfitted_and_bad_model():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        TwoPartBoutModel().predict(np.ones((2, 1)))
    with pytest.raises(ValueError):
        TwoPartBoutModel(count_model="zip").fit(np.ones((3, 1)), [[1, 1]] * 3, [[1.0, 1.0]] * 3)
