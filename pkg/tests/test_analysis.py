import numpy as np
import pytest

from noisydiff.analysis import BATTERIES, analyze, analyze_series, battery
from noisydiff.dataio import IngestSpec, write_series_csv
from noisydiff.errors import InvalidHypothesis
from noisydiff.estimate import OptimizerConfig


def test_batteries_parse_for_their_models(model_1d, model_2d):
    from noisydiff.analysis import _hypotheses

    for model in (model_1d, model_2d):
        hyps = _hypotheses(model, battery(model.name))
        assert set(hyps) == set(BATTERIES[model.name])
        assert all(h.r >= 1 for h in hyps.values())
    assert _hypotheses(model_2d, ["independence"])["independence"].r == 5


def test_unknown_battery():
    with pytest.raises(InvalidHypothesis):
        battery("custom")


def test_trivial_hypothesis_rejected(obs_1d, model_1d):
    with pytest.raises(InvalidHypothesis):
        analyze_series(obs_1d, model_1d, ["alpha:;beta:"])


def test_battery_on_alternative_data(obs_1d_h1, model_1d):
    rep = analyze_series(obs_1d_h1, model_1d, battery("paper-1d"), kinds=("lrt", "wald"),
                         opt_cfg=OptimizerConfig(n_starts=4))
    tests = {(t["label"], t["kind"]): t for t in rep.test_table()}
    assert tests[("ou", "lrt")]["p_value"] < 1e-3
    assert tests[("ou", "wald")]["dof"] == 1
    # every fit shares the unrestricted estimates
    for fit in rep.fits.values():
        assert np.array_equal(fit.alpha_hat, rep.full_fit.alpha_hat)
    rows = {r["parameter"]: r for r in rep.coefficient_table()}
    assert rows["alpha2"]["ou"] == 0.0
    assert rows["beta2"]["centricity"] == 0.0


def test_analyze_records_provenance(obs_1d, model_1d, tmp_path):
    path = write_series_csv(obs_1d, tmp_path / "s.csv")
    spec = IngestSpec(path, h_n=obs_1d.scheme.h_n, columns=["y1"], tau=1.9)
    rep = analyze(spec, model_1d, {"ou": "alpha:2"}, opt_cfg=OptimizerConfig(n_starts=2))
    prov = rep.to_dict()["provenance"]
    assert prov["rows"] == obs_1d.values.shape[0]
    assert prov["settings"]["hypotheses"] == {"ou": "alpha:2;beta:"}
    again = analyze(spec, model_1d, {"ou": "alpha:2"}, opt_cfg=OptimizerConfig(n_starts=2))
    assert again.provenance["config_hash"] == prov["config_hash"]
    assert again.to_dict()["tests"] == rep.to_dict()["tests"]
