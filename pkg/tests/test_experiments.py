import json
from pathlib import Path

import jsonschema
import pytest

from ganssl_lab.config import ExperimentConfig, load_config
from ganssl_lab.errors import ConfigError
from ganssl_lab.experiments import (
    EXIT_OK,
    EXIT_VERIFY,
    run_case_study_1d,
    run_case_study_2d,
    run_verification_suite,
    verification_reports,
)
from ganssl_lab.report import load_schema


def small_1d(**kw):
    cfg = ExperimentConfig(study="case1d", eps=[0.2, 0.0])
    c = cfg.case1d
    c.steps, c.hidden, c.batch, c.eval_samples = 15, [8, 8], 64, 1000
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def small_2d(**kw):
    cfg = ExperimentConfig(study="case2d")
    c = cfg.case2d
    c.rounds, c.batch, c.feature_dims, c.generator_hidden = 40, 32, [2, 8, 8], [8]
    c.checkpoint_every, c.snapshot_size, c.test_resolution, c.map_cells, c.replicates = 20, 32, 11, 20, 2
    for k, v in kw.items():
        setattr(c, k, v)
    return cfg


def artifact_bytes(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_case1d_layout_and_summary(tmp_path):
    res = run_case_study_1d(small_1d(), tmp_path / "run")
    files = set(artifact_bytes(res.out_dir))
    for sub in ("eps_0", "eps_0.2"):
        for name in ("history.csv", "final_density.csv", "summary.json", "plot_density.svg"):
            assert f"{sub}/{name}" in files
    assert {"config.toml", "summary.json", "plot_densities.svg", "data_density.csv"} <= files
    summary = json.loads((res.out_dir / "summary.json").read_text())
    jsonschema.validate(summary, load_schema())
    assert [r["eps"] for r in summary["metrics"]["tv_by_eps"]] == [0.0, 0.2]
    assert load_config(res.out_dir / "config.toml").eps == [0.2, 0.0]


def test_case1d_rerun_is_bitwise_identical(tmp_path):
    a = run_case_study_1d(small_1d(), tmp_path / "a")
    b = run_case_study_1d(load_config(a.out_dir / "config.toml"), tmp_path / "b")
    assert artifact_bytes(a.out_dir) == artifact_bytes(b.out_dir)


def test_case1d_workers_do_not_change_results(tmp_path):
    a = run_case_study_1d(small_1d(), tmp_path / "a")
    b = run_case_study_1d(small_1d(workers=2), tmp_path / "b")
    fa, fb = artifact_bytes(a.out_dir), artifact_bytes(b.out_dir)
    # config echo and digests legitimately differ in the workers field
    for name in fa:
        if name.endswith(".csv") or name.endswith(".svg"):
            assert fa[name] == fb[name], name


def test_case1d_empty_eps_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        run_case_study_1d(small_1d(eps=[]), tmp_path / "run")


def test_case2d_layout_and_coverage(tmp_path):
    res = run_case_study_2d(small_2d(), tmp_path / "run", "violated")
    files = set(artifact_bytes(res.out_dir))
    for seed in (0, 1):
        for name in ("history.csv", "decision_map.csv", "generated_20.csv", "generated_40.csv", "summary.json", "plot_samples.svg"):
            assert f"seed_{seed}/{name}" in files
    summary = json.loads((res.out_dir / "summary.json").read_text())
    jsonschema.validate(summary, load_schema())
    m = summary["metrics"]
    assert m["scenario"] == "violated"
    assert m["coverage"]["counts"]["12"] == 0 and not m["coverage"]["satisfied"]
    assert len(m["accuracy_by_subdomain"]["12"]) == 2
    svg = (res.out_dir / "seed_0" / "plot_samples.svg").read_text()
    assert 'fill="blue"' in svg and 'stroke="gray"' in svg


def test_case2d_satisfied_coverage_report(tmp_path):
    res = run_case_study_2d(small_2d(replicates=1), tmp_path / "run", "satisfied")
    assert res.summary["metrics"]["coverage"]["satisfied"]


def test_case2d_rerun_is_bitwise_identical(tmp_path):
    a = run_case_study_2d(small_2d(replicates=1), tmp_path / "a", "violated")
    b = run_case_study_2d(load_config(a.out_dir / "config.toml"), tmp_path / "b")
    assert artifact_bytes(a.out_dir) == artifact_bytes(b.out_dir)


def test_case2d_zero_unlabeled_supervised_fallback(tmp_path):
    res = run_case_study_2d(small_2d(unlabeled=0, rounds=400, replicates=1), tmp_path / "run", "satisfied")
    acc = res.summary["metrics"]["accuracy_by_seed"][0]["accuracy"]
    assert min(acc.values()) >= 0.95


def test_case2d_bad_scenario(tmp_path):
    with pytest.raises(ConfigError):
        run_case_study_2d(small_2d(), tmp_path / "run", "sideways")
    with pytest.raises(ConfigError):
        run_case_study_2d(small_2d(uncovered=["99"]), tmp_path / "run", "violated")


def test_verify_default_all_pass(tmp_path):
    res = run_verification_suite(ExperimentConfig(study="verify"), tmp_path / "v")
    assert res.exit_code == EXIT_OK
    assert res.summary["failures"] == 0
    records = json.loads((res.out_dir / "verification.json").read_text())
    assert len(records) == len(res.reports) and all(r["status"] != "fail" for r in records)
    jsonschema.validate(json.loads((res.out_dir / "summary.json").read_text()), load_schema())


def test_verify_corrupted_closed_form_fails(tmp_path):
    cfg = ExperimentConfig(study="verify")
    cfg.verify.corrupt_closed_form = True
    res = run_verification_suite(cfg, tmp_path / "v")
    assert res.exit_code == EXIT_VERIFY
    failed = {r.proposition for r in res.reports if not r.passed}
    assert failed == {"prop1"}


def test_verify_seed_sweep_same_pass_set():
    sets = []
    for seed in range(10):
        cfg = ExperimentConfig(study="verify", seed=seed)
        sets.append([(r.proposition, r.status) for r in verification_reports(cfg)])
    assert all(s == sets[0] for s in sets)
