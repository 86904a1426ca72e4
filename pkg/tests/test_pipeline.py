import pytest

from premreg import config
from premreg import io as io_mod
from premreg.errors import DataError, DomainError
from premreg.pipeline import FitJob, FitRunner, PipelineCallbacks, load_dataset, staged_directory
from premreg.prem import PremConfig

FAST = PremConfig(n_permutations=4, max_iterations=30)


def test_staged_directory_publishes_on_success(tmp_path):
    target = tmp_path / "out"
    with staged_directory(target) as staging:
        (staging / "a.csv").write_text("x\n", encoding="utf-8")
    assert (target / "a.csv").read_text(encoding="utf-8") == "x\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out"]


def test_staged_directory_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with staged_directory(target) as staging:
            (staging / "a.csv").write_text("x\n", encoding="utf-8")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_unknown_method_is_a_domain_error():
    with pytest.raises(DomainError):
        FitJob(source="phones", method="ridge")


def test_csv_source_needs_a_response(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2\n2,3\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_dataset(FitJob(source=path))
    assert load_dataset(FitJob(source=path, response="y")).payload.n == 2


def test_prem_run_writes_every_artifact(tmp_path):
    stages, logs = [], []
    runner = FitRunner(PipelineCallbacks(on_stage_start=stages.append, on_log=logs.append))
    out_dir = tmp_path / "phones_prem"

    outputs = runner.run(FitJob(source="phones", out_dir=out_dir, config=FAST, seed=7, n_simulations=19))

    assert stages == ["Load", "Fit", "Diagnostics", "Export"]
    names = {path.name for path in outputs}
    assert names == {
        io_mod.REPORT_NAME,
        io_mod.RESIDUALS_NAME,
        io_mod.ENVELOPE_NAME,
        io_mod.WEIGHTS_NAME,
        io_mod.MIXING_NAME,
        io_mod.LIKPATH_NAME,
        config.CONFIG_NAME,
    }
    assert all(path.exists() for path in outputs)
    report = io_mod.load_report(out_dir / io_mod.REPORT_NAME)
    assert report["dataset"]["n"] == 24
    assert report["fit"]["method"] == "prem"
    assert report["settings"]["n_permutations"] == 4
    assert all(1 <= row <= 24 for row in report["outlier_rows"])
    assert any("Exported" in line for line in logs)


def test_least_squares_run_skips_weights(tmp_path):
    out_dir = tmp_path / "ls"
    outputs = FitRunner().run(FitJob(source="hbk", method="ls", out_dir=out_dir))
    names = {path.name for path in outputs}
    assert io_mod.WEIGHTS_NAME not in names
    assert io_mod.MIXING_NAME not in names
    assert io_mod.load_report(out_dir / io_mod.REPORT_NAME)["fit"]["method"] == "LS"


def test_failed_run_reports_and_writes_nothing(tmp_path):
    path = tmp_path / "collinear.csv"
    path.write_text("a,b,y\n1,2,1\n2,4,3\n3,6,2\n4,8,5\n", encoding="utf-8")
    errors = []
    runner = FitRunner(PipelineCallbacks(on_error=lambda name, exc: errors.append(name)))
    out_dir = tmp_path / "out"
    with pytest.raises(DataError):
        runner.run(FitJob(source=path, response="y", out_dir=out_dir, config=FAST))
    assert errors == ["fit"]
    assert not out_dir.exists()


def test_profile_run_rejects_bad_coefficient(tmp_path):
    with pytest.raises(DomainError):
        FitRunner().run_profile(FitJob(source="phones"), 5, (0.0, 1.0, 3), "pr", tmp_path / "p.csv")


def test_profile_run_writes_the_slice(tmp_path):
    target = tmp_path / "slice" / "profile.csv"
    FitRunner().run_profile(FitJob(source="phones", config=FAST), 1, (0.0, 2.0, 5), "pr", target)
    lines = target.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "beta_value,loglik"
    assert len(lines) == 6


def test_run_saves_the_resolved_config(tmp_path):
    out_dir = tmp_path / "runs" / "hbk_l1"
    FitRunner().run(FitJob(source="hbk", method="l1", out_dir=out_dir, config=FAST, seed=5, threads=2))

    saved = config.load_config(out_dir / config.CONFIG_NAME)
    assert saved.fit.n_permutations == 4
    assert saved.fit.max_iterations == 30
    assert saved.fit.seed == 5
    assert saved.runtime.threads == 2
    assert saved.runtime.out_dir == str(tmp_path / "runs")
    assert saved.fit.prem_config().n_permutations == FAST.n_permutations


def test_ci_run_dispatches_on_method(tmp_path):
    runner = FitRunner()
    for method in ("ls", "ml_t4"):
        target = tmp_path / f"{method}.csv"
        runner.run_ci(FitJob(source="phones", method=method, threads=1), 0.95, target)
        lines = target.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "coefficient,estimate,lower,upper"
        assert len(lines) == 3
    with pytest.raises(DomainError):
        runner.run_ci(FitJob(source="phones", method="l1"), 0.95, tmp_path / "l1.csv")
    assert not (tmp_path / "l1.csv").exists()
