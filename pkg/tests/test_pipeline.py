import hashlib
import json

import numpy as np
import pytest
from scipy import stats

from slim.cli import main
from slim.model import Dataset
from slim.pipeline import (
    STEPS,
    RunConfig,
    parse_generator,
    random_entry_mask,
    read_csv,
    run_workflow,
    summarize_samples,
    worker_count,
    write_csv,
)

FAST = dict(samples=60, burnin=30, m_top=2, n_eval=10, overrides={"n_rep": 20})


def _fit(tmp_path, name, **kw):
    cfg = RunConfig(generator="lingam-suite d=3 N=120", seed=3, out=str(tmp_path / name), **{**FAST, **kw})
    return run_workflow(cfg)


def test_summarize_trivial_cases():
    lo, med, hi = summarize_samples([-1.0, 0.0, 1.0])
    assert med == 0.0
    assert summarize_samples([2.5] * 7) == (2.5, 2.5, 2.5)
    with pytest.raises(ValueError):
        summarize_samples([])


def test_summarize_gamma_quantiles():
    x = np.random.default_rng(0).gamma(3.0, 1.0, 10_000)
    got = summarize_samples(x)
    ref = stats.gamma(3.0).ppf([0.025, 0.5, 0.975])
    # 0.01 on the probability scale of the known distribution
    assert np.allclose(stats.gamma(3.0).cdf(got), [0.025, 0.5, 0.975], atol=0.01)
    assert np.all(np.abs(np.array(got) - ref) / ref < 0.05)


def test_summarize_matrices_elementwise():
    x = np.random.default_rng(1).normal(size=(500, 2, 3))
    lo, med, hi = summarize_samples(x)
    assert med.shape == (2, 3) and np.all(lo < med) and np.all(med < hi)


def test_csv_round_trip_with_missing(tmp_path):
    X = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    M = np.array([[1, 0, 1], [1, 1, 1]], dtype=bool)
    write_csv(Dataset(X, ["a", "b"], M), tmp_path / "x.csv")
    back = read_csv(tmp_path / "x.csv")
    assert back.names == ["a", "b"]
    assert np.array_equal(back.mask, M)
    assert np.array_equal(back.values[M], X[M])


@pytest.mark.parametrize(
    "text,msg",
    [("a,b\n1,2\n3\n", "expected 2 fields"), ("a,b\n1,x\n", "non-numeric"), ("a,a\n1,2\n", "unique"), ("a,b\n", "header")],
)
def test_csv_errors(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ValueError, match=msg):
        read_csv(p)


def test_parse_generator_specs():
    data, truth = parse_generator("lingam-suite d=4 N=30 dense=1", 0)
    assert data.values.shape == (4, 30) and truth.R.sum() == 6
    assert parse_generator("toy-latent variant=u N=20", 0)[1].source_kinds == ["laplace"] * 3
    assert parse_generator("nonlinear-toy", 0)[0].n == 100
    for bad in ["", "nope d=3", "lingam-suite d", "lingam-suite q=3"]:
        with pytest.raises(ValueError):
            parse_generator(bad, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(model="x", generator="g").validate()
    with pytest.raises(ValueError):
        RunConfig(data="a.csv", generator="g").validate()
    with pytest.raises(ValueError):
        RunConfig(generator="g", latents=1).validate()
    with pytest.raises(ValueError):
        RunConfig(generator="g", overrides={"bogus": 1}).validate()
    with pytest.raises(ValueError):
        RunConfig(generator="g", test_fraction=1.0).validate()
    assert RunConfig(model="dag-latent", generator="g").validate().latents == 1


def test_config_hyperparameters():
    cfg = RunConfig(generator="g", samples=7, burnin=3, beta_m=0.3, overrides={"s_s": 5.0})
    hp = cfg.hyperparameters("dag")
    assert (hp.n_samples, hp.n_burnin, hp.beta_m, hp.s_s) == (7, 3, 0.3, 5.0)
    assert cfg.hyperparameters("factor").beta_m == 0.9


def test_worker_count(monkeypatch):
    monkeypatch.setenv("SLIM_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("SLIM_WORKERS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("SLIM_WORKERS", "x")
    with pytest.raises(ValueError):
        worker_count()


def test_random_entry_mask():
    m = random_entry_mask((4, 50), 0.2, 0)
    assert (~m).sum() == 40
    assert np.array_equal(m, random_entry_mask((4, 50), 0.2, 0))


def test_workflow_steps_manifest_and_determinism(tmp_path):
    a = _fit(tmp_path, "a")
    b = _fit(tmp_path, "b")
    assert a.manifest["steps"] == list(STEPS)
    files = a.manifest["files"]
    for name in ["truth.json", "partition.json", "fm.json", "candidates.json", "dag_0.json", "edges.json",
                 "testloglik.csv", "comparison.json"]:
        assert name in files
    for name, digest in files.items():
        content = (a.out / name).read_bytes()
        assert hashlib.sha256(content).hexdigest() == digest
        assert content == (b.out / name).read_bytes()
    assert a.manifest["files"] == b.manifest["files"]
    rep = json.loads((a.out / "comparison.json").read_text())
    assert rep["selected"] in ("fm", "dag")
    assert (rep["median_ratio"] > 0) == (rep["selected"] == "dag") or rep["tie"]


def test_workflow_seed_changes_output(tmp_path):
    a = _fit(tmp_path, "a")
    cfg = RunConfig(generator="lingam-suite d=3 N=120", seed=4, out=str(tmp_path / "c"), **FAST)
    c = run_workflow(cfg)
    assert a.manifest["files"]["fm.json"] != c.manifest["files"]["fm.json"]


def test_workflow_fm_only_and_parallel_workers(tmp_path, monkeypatch):
    fm = _fit(tmp_path, "fm", model="fm")
    assert fm.manifest["steps"] == list(STEPS[:3]) and fm.report is None
    serial = _fit(tmp_path, "s")
    monkeypatch.setenv("SLIM_WORKERS", "2")
    par = _fit(tmp_path, "p")
    assert serial.manifest["files"] == par.manifest["files"]


def test_workflow_from_csv(tmp_path):
    data, _ = parse_generator("lingam-suite d=3 N=100", 1)
    write_csv(data, tmp_path / "d.csv")
    res = run_workflow(RunConfig(data=str(tmp_path / "d.csv"), out=str(tmp_path / "o"), **FAST))
    assert "truth.json" not in res.manifest["files"]
    edges = json.loads((res.out / "edges.json").read_text())
    assert all(e["parent"] in data.names and e["child"] in data.names for e in edges)


def test_workflow_cslim_and_snim(tmp_path):
    cs = RunConfig(model="cslim", generator="factor-model d=3 N=40", out=str(tmp_path / "cs"), **FAST)
    res = run_workflow(cs)
    assert set(res.report.labels) == {"fm", "cslim"}
    sn = RunConfig(model="snim", generator="lingam-suite d=3 N=30", out=str(tmp_path / "sn"),
                   **{**FAST, "samples": 6, "burnin": 6, "n_eval": 3})
    res = run_workflow(sn)
    assert len(res.dag_chains) == 6
    assert res.manifest["steps"] == ["partition", "candidate_selection", "dag_inference", "dag_summary"]


def test_cli_generate_fit_metrics_compare(tmp_path, capsys):
    gen_dir = tmp_path / "g"
    assert main(["generate", "--generator", "lingam-suite d=3 N=120", "--seed", "2", "--out", str(gen_dir)]) == 0
    assert json.loads(capsys.readouterr().out)["d"] == 3
    out = tmp_path / "f"
    rc = main(["fit", "--data", str(gen_dir / "data.csv"), "--samples", "60", "--burnin", "30", "--m-top", "2",
               "--hp", "n_rep=20", "--out", str(out)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == list(STEPS) and summary["selected"] in ("fm", "dag")
    assert main(["metrics", "--edges", str(out / "edges.json"), "--truth", str(gen_dir / "truth.json"),
                 "--out", str(tmp_path / "m.json")]) == 0
    m = json.loads((tmp_path / "m.json").read_text())
    assert {"tpr", "fpr", "reversed", "structural_errors", "auc"} <= set(m)
    assert main(["compare", "--loglik", str(out / "testloglik.csv"), "--out", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["labels"] == ["fm", "dag"]


def test_cli_error_json(tmp_path, capsys):
    rc = main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "FileNotFoundError" and "missing.csv" in err["message"]
    rc = main(["fit", "--model", "nope", "--generator", "x", "--out", "o"])
    assert rc != 0
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "UsageError"


def test_cli_metrics_unknown_name(tmp_path, capsys):
    main(["generate", "--generator", "lingam-suite d=2 N=10", "--out", str(tmp_path)])
    (tmp_path / "e.json").write_text(json.dumps([{"parent": "zz", "child": "x1"}]))
    capsys.readouterr()
    assert main(["metrics", "--edges", str(tmp_path / "e.json"), "--truth", str(tmp_path / "truth.json")]) == 1
    assert "zz" in json.loads(capsys.readouterr().err)["message"]


@pytest.mark.acceptance
def test_full_pipeline_default_chains_under_ten_minutes(tmp_path):
    import time

    t = time.time()
    res = run_workflow(RunConfig(generator="lingam-suite d=5 N=500", seed=0, out=str(tmp_path / "full")))
    elapsed = time.time() - t
    print(f"full default pipeline: {elapsed:.0f} s")
    assert res.manifest["steps"] == list(STEPS)
    assert elapsed < 600
