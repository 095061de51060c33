import numpy as np

from munidistress.pipeline import PipelineConfig, run_pipeline


def test_fixed_params_skip_search(small_synth):
    res = run_pipeline(small_synth[0], PipelineConfig(params={"penalty": "l2", "C": 5.0}))
    assert res.search is None
    assert res.evaluation.params == {"penalty": "l2", "C": 5.0}
    assert res.n_lag_imputed == 600  # first panel year has no predecessor


def test_split_is_a_partition(small_synth):
    res = run_pipeline(small_synth[0], PipelineConfig(grid={"penalty": ["l2"], "C": [1, 5]},
                                                      k=3, seed=2))
    n = len(res.features)
    assert len(np.intersect1d(res.train_idx, res.test_idx)) == 0
    assert len(res.train_idx) + len(res.test_idx) == n
    assert res.evaluation.n_test == len(res.test_idx)
    cv = res.evaluation.extra["cv"]
    assert cv["best_params"] == res.search.best.params
    assert cv["roc"]["n_curves"] == 3


def test_standardizer_sees_training_rows_only(small_synth):
    res = run_pipeline(small_synth[0], PipelineConfig(params={"penalty": "l2", "C": 1.0}))
    col = res.standardizer.columns[0]
    np.testing.assert_allclose(res.standardizer.means[0], res.train.column(col).mean())
    assert res.standardizer.means[0] != res.features.column(col).mean()
