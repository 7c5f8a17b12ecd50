"""End-to-end CLI tests (in-process, via main())."""

import json
import os

import pytest

from peergrade.cli import main
from peergrade.data import save_dataset, save_truth, ta_truth
from peergrade.synth import GeneratorConfig, generate
from tests.conftest import ad_shaped_dataset


def run(argv):
    return main(argv)


def read_fit(path):
    with open(path) as fh:
        return json.load(fh)


GENERATED_FILES = {"exercises.csv", "groups.csv", "grades.csv", "truth.csv", "config.json"}


class TestGenerate:
    def test_fig1_left_writes_five_files(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert run(["generate", "--protocol", "fig1-left", "--k", "6",
                    "--seed", "7", "--out", str(out)]) == 0
        assert set(os.listdir(out)) == GENERATED_FILES

    def test_same_invocation_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["generate", "--protocol", "fig2-left", "--k", "4", "--seed", "3"]
        assert run(argv + ["--out", str(a)]) == 0
        assert run(argv + ["--out", str(b)]) == 0
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_infeasible_assignment_exits_1(self, tmp_path, capsys):
        rc = run(["generate", "--k", "200", "--graders", "10", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "graders" in capsys.readouterr().err

    def test_unknown_protocol_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["generate", "--protocol", "fig9", "--out", str(tmp_path / "x")])
        assert err.value.code == 2

    def test_unknown_flag_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["generate", "--frobnicate", "--out", str(tmp_path / "x")])
        assert err.value.code == 2

    def test_json_format(self, tmp_path):
        out = tmp_path / "d"
        assert run(["generate", "--submissions", "6", "--graders", "5", "--exercises", "1",
                    "--k", "2", "--format", "json", "--out", str(out)]) == 0
        assert (out / "dataset.json").exists()


@pytest.fixture
def tiny_dir(tmp_path, tiny_dataset):
    d = tmp_path / "tiny"
    save_dataset(tiny_dataset, str(d), "csv")
    save_truth(ta_truth(tiny_dataset), str(tmp_path / "truth.csv"))
    return d, tmp_path / "truth.csv"


class TestFit:
    def test_mean_matches_hand_means(self, tiny_dir, tmp_path, capsys):
        d, _ = tiny_dir
        out = tmp_path / "fit.json"
        assert run(["fit", "--data", str(d), "--model", "mean",
                    "--roles", "peer", "--out", str(out)]) == 0
        doc = read_fit(out)
        scores = {r["submission"]: r["score"] for r in doc["scores"]}
        assert scores == {"s0": 5.0, "s1": 7.0}  # raw-scale grades (max 10)
        assert "converged" in capsys.readouterr().out

    def test_bt_on_self_grades_exits_1(self, tiny_dir, tmp_path, capsys):
        d, _ = tiny_dir
        rc = run(["fit", "--data", str(d), "--model", "bt", "--roles", "self",
                  "--out", str(tmp_path / "f.json")])
        assert rc == 1
        assert "self grades induce no rankings" in capsys.readouterr().err

    def test_hyper_file_echoed(self, tmp_path):
        ds, truth = generate(GeneratorConfig(n_submissions=8, n_graders=8,
                                             n_exercises=1, grades_per_submission=3, seed=2))
        d = tmp_path / "data"
        save_dataset(ds, str(d), "csv")
        hyper_path = tmp_path / "h.json"
        hyper_path.write_text('{"mu_score": 0.4, "var_score": 0.05}\n')
        out = tmp_path / "fit.json"
        assert run(["fit", "--data", str(d), "--model", "umt",
                    "--hyper-file", str(hyper_path), "--out", str(out)]) == 0
        doc = read_fit(out)
        assert doc["config"]["hyper"]["mu_score"] == 0.4
        assert doc["config"]["hyper"]["var_score"] == 0.05

    @pytest.mark.parametrize("model", ["median", "ust", "borda", "thurstone", "pl", "sn", "smt"])
    def test_all_models_run(self, model, tmp_path):
        ds = ad_shaped_dataset(n_exercises=2, n_groups=8, peers_per_submission=3)
        d = tmp_path / "data"
        save_dataset(ds, str(d), "csv")
        out = tmp_path / "fit.json"
        argv = ["fit", "--data", str(d), "--model", model, "--out", str(out)]
        if model in ("borda", "thurstone", "pl"):
            argv += ["--epochs", "20"]
        assert run(argv) == 0
        assert read_fit(out)["model"] == model

    def test_exam_models_need_exam_grades(self, tiny_dir, tmp_path, capsys):
        d, _ = tiny_dir
        rc = run(["fit", "--data", str(d), "--model", "exam-direct",
                  "--out", str(tmp_path / "f.json")])
        assert rc == 1
        assert "exam" in capsys.readouterr().err


class TestEvaluate:
    def test_perfect_fit_all_zeros(self, tmp_path, capsys):
        ds, truth = generate(GeneratorConfig(n_submissions=6, n_graders=6,
                                             n_exercises=2, grades_per_submission=2, seed=4))
        fit_path = tmp_path / "fit.json"
        from peergrade.cardinal import ModelFit, save_fit

        save_fit(ModelFit("oracle", dict(truth.scores), {}, {}, [], 0, True), str(fit_path))
        truth_path = tmp_path / "truth.csv"
        save_truth(truth, str(truth_path))
        assert run(["evaluate", "--fit", str(fit_path), "--truth", str(truth_path)]) == 0
        out = capsys.readouterr().out
        assert "0.000000" in out

    def test_mismatched_submissions_exit_1(self, tiny_dir, tmp_path, capsys):
        d, truth_path = tiny_dir
        from peergrade.cardinal import ModelFit, save_fit

        fit_path = tmp_path / "fit.json"
        save_fit(ModelFit("x", {("e0", "zzz"): 0.5}, {}, {}, [], 0, True), str(fit_path))
        assert run(["evaluate", "--fit", str(fit_path), "--truth", str(truth_path)]) == 1

    def test_per_exercise_row_count(self, tmp_path, capsys):
        ds, truth = generate(GeneratorConfig(n_submissions=6, n_graders=6,
                                             n_exercises=3, grades_per_submission=2, seed=4))
        from peergrade.cardinal import ModelFit, save_fit

        fit_path = tmp_path / "fit.json"
        save_fit(ModelFit("oracle", dict(truth.scores), {}, {}, [], 0, True), str(fit_path))
        truth_path = tmp_path / "truth.csv"
        save_truth(truth, str(truth_path))
        out_csv = tmp_path / "eval.csv"
        assert run(["evaluate", "--fit", str(fit_path), "--truth", str(truth_path),
                    "--metric", "kendall", "--per-exercise", "--out", str(out_csv)]) == 0
        rows = out_csv.read_text().splitlines()
        # header + 3 exercises + aggregate
        assert len(rows) == 5


class TestExperiment:
    ARGS = ["experiment", "--protocol", "fig1-left", "--replicates", "3",
            "--seed", "1", "--k", "2", "3", "--estimators", "mean,umt"]

    def test_same_seed_identical_csv(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(self.ARGS + ["--out", str(a)]) == 0
        assert run(self.ARGS + ["--out", str(b)]) == 0
        assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()

    def test_jobs_invariance(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(self.ARGS + ["--jobs", "1", "--out", str(a)]) == 0
        assert run(self.ARGS + ["--jobs", "8", "--out", str(b)]) == 0
        assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()

    def test_invalid_protocol_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["experiment", "--protocol", "fig7-left", "--out", str(tmp_path / "x")])
        assert err.value.code == 2

    def test_real_data_eval(self, tmp_path):
        ds = ad_shaped_dataset(n_exercises=2, n_groups=8, peers_per_submission=3)
        d = tmp_path / "data"
        save_dataset(ds, str(d), "csv")
        out = tmp_path / "rep"
        assert run(["experiment", "--protocol", "real-data-eval", "--data", str(d),
                    "--estimators", "mean,median", "--out", str(out)]) == 0
        text = (out / "report.csv").read_text()
        assert "self+peer" in text

    def test_real_data_eval_needs_data(self, tmp_path, capsys):
        assert run(["experiment", "--protocol", "real-data-eval",
                    "--out", str(tmp_path / "x")]) == 1
        assert "--data" in capsys.readouterr().err


class TestAnalyze:
    @pytest.mark.filterwarnings("ignore:r_homework.* not computable")
    def test_diagnostics_match_hand_computation(self, tiny_dir, tmp_path):
        # two graders with identical biases: correlations degenerate on purpose
        d, _ = tiny_dir
        out = tmp_path / "an"
        assert run(["analyze", "--data", str(d), "--out", str(out)]) == 0
        rows = {}
        import csv as csvmod

        with open(out / "analysis.csv") as fh:
            for row in csvmod.DictReader(fh):
                rows[row["grader"]] = row
        # raw 0-10 scale: s0 grades {bob 5, alice(self) 10, ta1 6},
        # s1 grades {alice 7, bob(self) 9, ta1 8}
        assert float(rows["alice"]["deviation_bias"]) == pytest.approx(1.5)
        assert float(rows["alice"]["deviation_variance"]) == pytest.approx(18.0)
        assert float(rows["bob"]["mean_given_grade"]) == pytest.approx(7.0)
        assert float(rows["ta1"]["deviation_bias"]) == pytest.approx(-0.75)

    def test_json_schema(self, tmp_path):
        ds = ad_shaped_dataset(n_exercises=2, n_groups=8, peers_per_submission=3)
        d = tmp_path / "data"
        save_dataset(ds, str(d), "csv")
        out = tmp_path / "an"
        assert run(["analyze", "--data", str(d), "--format", "json", "--out", str(out)]) == 0
        doc = json.loads((out / "analysis.json").read_text())
        assert set(doc) == {"graders", "skipped_graders", "correlations"}
        assert {"grader", "mean_given_grade", "deviation_bias",
                "deviation_variance", "n_deviations"} <= set(doc["graders"][0])
        assert "r_exam_bias" in doc["correlations"]

    def test_exam_correlations_omitted_without_exams(self, tmp_path):
        ds = ad_shaped_dataset(n_exercises=2, n_groups=8, peers_per_submission=3,
                               with_exams=False)
        d = tmp_path / "data"
        save_dataset(ds, str(d), "csv")
        out = tmp_path / "an"
        assert run(["analyze", "--data", str(d), "--format", "json", "--out", str(out)]) == 0
        doc = json.loads((out / "analysis.json").read_text())
        assert "r_exam_bias" not in doc["correlations"]
        assert "r_homework_bias" in doc["correlations"]


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 3, "seed": 5, "submissions": 8,
                                   "graders": 8, "exercises": 1}))
        a, b = tmp_path / "a", tmp_path / "b"
        # config only
        assert run(["generate", "--config", str(cfg), "--out", str(a)]) == 0
        conf_a = json.loads((a / "config.json").read_text())
        assert conf_a["grades_per_submission"] == 3
        assert conf_a["seed"] == 5
        # explicit flag beats config
        assert run(["generate", "--config", str(cfg), "--k", "2", "--out", str(b)]) == 0
        conf_b = json.loads((b / "config.json").read_text())
        assert conf_b["grades_per_submission"] == 2

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus_key": 1}')
        assert run(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
        assert "unknown config key" in capsys.readouterr().err
