import json
import math
import os

import numpy as np
import pytest

import datscore


def test_statistics():
    assert datscore.hwe_exact_test(25, 50, 25) == pytest.approx(1.0)
    r = datscore.fisher_exact_test([[10, 0, 0], [0, 0, 10]])
    assert r["p_value"] == pytest.approx(2 / math.comb(20, 10), rel=1e-12)
    w = datscore.welch_t_test([1, 2, 3, 4, 5], [3, 4, 5, 6, 7])
    assert w["t"] == pytest.approx(-2.0)
    assert datscore.student_t_upper(0.0, 5.0) == pytest.approx(0.5)
    assert datscore.auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True]) == pytest.approx(0.75)
    p = datscore.paired_one_sided_t([0.9, 0.8, 0.7], [0.1, 0.3, 0.2])
    assert p["t"] > 0 and p["df"] == 2
    assert datscore.stratify([(0, "NC", True), (24, "MCI", False), (36, "DAT", False)]) == ("pNC", "DAT+")


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        datscore.paired_one_sided_t([1.0], [2.0])
    with pytest.raises(OSError):
        datscore.read_plink(str(tmp_path / "absent"))


def test_lasso_and_mkl():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((80, 10))
    x = (x - x.mean(0)) / x.std(0)
    y = np.sign(x[:, 0] + 0.5 * x[:, 1] + 0.3 * rng.standard_normal(80))
    y = y - y.mean()
    path = datscore.lasso_path(x, y, 2)
    assert path["entry_order"][0] == 0
    labels = np.where(x[:, 0] > 0, 1.0, -1.0)
    ids = [f"roi:r{i}" for i in range(10)]
    model = datscore.fit_mkl(x, labels, ids)
    assert abs(model.beta.sum() - 1) < 1e-10
    assert all(b >= a - 1e-8 for a, b in zip(model.elbo_trace, model.elbo_trace[1:]))
    prob = model.predict_proba(x)
    assert ((prob >= 0.5) == (labels > 0)).mean() > 0.9


def test_simulate_run_and_score(tmp_path):
    paths = datscore.simulate(str(tmp_path / "data"), seed=3)
    assert os.path.exists(str(paths["genotype_prefix"]) + ".bed")
    g = datscore.read_plink(paths["genotype_prefix"])
    assert g["values"].shape == (543, 10000)

    cfg = datscore.default_config()
    assert cfg["k_per_modality"] == 17
    cfg["inputs"] = {k: str(paths[k]) for k in ("genotype_prefix", "volumes", "timelines", "covariates", "apoe")}
    cfg["output_dir"] = str(tmp_path / "run")
    cfg["subbag"]["f"] = 3
    cfg["repetitions"] = 1
    cfg["modalities"] = ["mri"]
    summary = datscore.run_pipeline(cfg)
    assert summary["modalities"]["mri"]["train"]["auc"] > 0.8
    assert len(summary["modalities"]["mri"]["features"]) == 17

    rows, warnings = datscore.score_new_subjects(
        str(tmp_path / "run"), "mri", volumes=str(paths["volumes"]), covariates=str(paths["covariates"]))
    assert len(rows) == 543
    assert warnings
    assert all(0.0 <= r["score"] <= 1.0 for r in rows if r["status"] == "scored")

    with open(tmp_path / "cfg.json", "w") as fh:
        json.dump(cfg, fh)
    again = datscore.run_pipeline(str(tmp_path / "cfg.json"), resume=True)
    assert again == summary

    bad = dict(cfg, unknown_key=1)
    with pytest.raises(datscore.ValidationError):
        datscore.run_pipeline(bad)
