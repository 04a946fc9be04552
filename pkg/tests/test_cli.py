import numpy as np
import pytest

from bnpipeline.bayesnet import Dag, read_structure, write_structure
from bnpipeline.cli import main
from bnpipeline.config import ConfigError, dump_config, load_config, parse_config_text
from bnpipeline.dataset import Dataset, Schema, VariableSpec, write_csv, write_schema
from bnpipeline.simulate import sample_dataset

CONFIG = """\
[data]
dataset = tiny.csv
schema = tiny.schema

[selection]
min_mi = {min_mi}
min_cmi = {min_cmi}
keep = {keep}

[learn]
learners = hc, chowliu, tan, naive, bd
user_structures = truth=truth.structure

[split]
seed = 5
test_fraction = 0.15
fold_count = 4
fold_fraction = 0.1

[mcmc]
chains = 2
adapt_iters = 50
burnin_iters = 50
sample_iters = 300

[predict]
mode = mcmc
cv_mode = exact

[output]
dir = out
rhat_threshold = {rhat}
"""


def tiny_problem():
    """Four linked 3-state variables plus one independent noise column."""
    specs = [VariableSpec("T", ("1", "2", "3"), "target")]
    specs += [VariableSpec(n, ("1", "2", "3")) for n in ("P", "Q", "R", "NOISE")]
    schema = Schema(tuple(specs))
    linked = schema.restrict(["T", "P", "Q", "R"])
    dag = Dag(linked.names, (("T", "P"), ("T", "Q"), ("Q", "R")))
    channel = np.array([
        [0.8, 0.1, 0.1],
        [0.1, 0.8, 0.1],
        [0.1, 0.1, 0.8],
    ])
    tables = {"T": np.array([[0.4, 0.35, 0.25]]), "P": channel, "Q": channel, "R": channel}
    core = sample_dataset(dag, linked, tables, 240, seed=8)
    rng = np.random.default_rng(9)
    records = np.column_stack([core.records, rng.integers(0, 3, 240)])
    return dag, Dataset(schema, records)


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    dag, data = tiny_problem()
    write_csv(data, tmp_path / "tiny.csv")
    write_schema(data.schema, tmp_path / "tiny.schema")
    write_structure(dag, tmp_path / "truth.structure")
    (tmp_path / "pipeline.ini").write_text(
        CONFIG.format(min_mi=0.05, min_cmi=0.08, keep="", rhat="1.1"), encoding="utf-8"
    )
    return tmp_path


def run(*args):
    return main(list(args))


class TestConfigFile:
    def test_round_trip(self, workspace):
        cfg = load_config("pipeline.ini")
        text = dump_config(cfg)
        again = parse_config_text(text)
        assert again == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("[data]\ndataset = a\nschema = b\nbogus = 1\n[split]\nseed = 1\n")

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="outside"):
            parse_config_text("dataset = a\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required"):
            parse_config_text("[data]\ndataset = a\nschema = b\n")

    def test_bad_learner(self):
        text = "[data]\ndataset = a\nschema = b\n[split]\nseed = 1\n[learn]\nlearners = pc\n"
        with pytest.raises(ConfigError, match="unknown learner"):
            parse_config_text(text)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("[split]\nseed = 1\nseed = 2\n")

    def test_overrides(self, workspace):
        cfg = load_config("pipeline.ini", out_override="elsewhere", seed_override=99)
        assert cfg.out_dir == "elsewhere"
        assert cfg.seed == 99


class TestPipelinePhases:
    def test_full_sequence(self, workspace):
        for cmd in ("select", "learn", "compare", "cv", "fit-predict", "report"):
            assert run(cmd, "--config", "pipeline.ini") == 0

        out = workspace / "out"
        ' selection drops the independent noise column '
        selected = (out / "selected_variables.txt").read_text().split()
        assert "NOISE" not in selected
        assert set(selected) == {"T", "P", "Q", "R"}
        assert "NOISE" in (out / "selection_report.txt").read_text()

        for name in (
            "score_mi.csv", "score_cmi.csv", "score_delta.csv", "hist_mi.csv", "hist_cmi.csv",
            "bf_pairwise.csv", "bf_chain.csv", "surviving_models.txt",
            "cv_metrics.csv", "chosen_model.txt", "split_plan.csv",
            "fitted_network.csv", "predictions.csv", "final_metrics.csv", "rhat.csv",
            "report.md", "effective_config.ini",
        ):
            assert (out / name).is_file(), name

        # every structure file loads back into a valid DAG over the selection
        for path in sorted((out / "structures").glob("*.structure")):
            dag = read_structure(path)
            assert set(dag.nodes) == set(selected)
        labels = {p.stem for p in (out / "structures").glob("*.structure")}
        assert {"hc", "chowliu", "tan", "naive", "bd", "truth"} <= labels
        for label in labels:
            assert (out / f"sensitivity_{label}.csv").is_file()

        # user structure passes through as the canonical rewrite
        truth = read_structure(workspace / "truth.structure")
        stored = read_structure(out / "structures" / "truth.structure")
        assert set(stored.edges) == set(truth.edges)

        # prediction rows match the held-out test set: 15% of 240
        pred_lines = (out / "predictions.csv").read_text().splitlines()
        assert len(pred_lines) == 1 + 36

        rhat_lines = (out / "rhat.csv").read_text().splitlines()
        assert rhat_lines[0] == "parameter,r_hat"
        assert len(rhat_lines) == 1 + 3  # a 3-state root target

        report = (out / "report.md").read_text()
        assert "Cross-validation metrics" in report
        assert "Chosen model" in report

    def test_keep_override_retains_variable(self, workspace):
        (workspace / "keep.ini").write_text(
            CONFIG.format(min_mi=0.05, min_cmi=0.08, keep="NOISE", rhat="1.1")
            .replace("truth=truth.structure", ""),
            encoding="utf-8",
        )
        assert run("select", "--config", "keep.ini") == 0
        selected = (workspace / "out" / "selected_variables.txt").read_text().split()
        assert "NOISE" in selected

    def test_select_handles_two_variable_schema(self, workspace, tmp_path):
        schema = Schema((
            VariableSpec("T", ("1", "2"), "target"),
            VariableSpec("P", ("1", "2")),
        ))
        rng = np.random.default_rng(0)
        write_csv(Dataset(schema, rng.integers(0, 2, size=(40, 2))), workspace / "two.csv")
        write_schema(schema, workspace / "two.schema")
        cfg = (workspace / "pipeline.ini").read_text().replace(
            "dataset = tiny.csv", "dataset = two.csv"
        ).replace("schema = tiny.schema", "schema = two.schema")
        (workspace / "two.ini").write_text(cfg, encoding="utf-8")
        assert run("select", "--config", "two.ini") == 0
        hist = (workspace / "out" / "hist_cmi.csv").read_text().splitlines()
        assert hist == ["bin_left,bin_right,count"]

    def test_zero_thresholds_drop_nothing(self, workspace):
        (workspace / "zero.ini").write_text(
            CONFIG.format(min_mi=0.0, min_cmi=0.0, keep="", rhat="1.1"), encoding="utf-8"
        )
        assert run("select", "--config", "zero.ini") == 0
        report = (workspace / "out" / "selection_report.txt").read_text()
        assert "proposed drop list: (none)" in report

    def test_naive_only_learner_writes_exactly_the_star(self, workspace):
        (workspace / "naive.ini").write_text(
            CONFIG.format(min_mi=0.05, min_cmi=0.08, keep="", rhat="1.1")
            .replace("learners = hc, chowliu, tan, naive, bd", "learners = naive")
            .replace("user_structures = truth=truth.structure", ""),
            encoding="utf-8",
        )
        for cmd in ("select", "learn"):
            assert run(cmd, "--config", "naive.ini") == 0
        files = sorted((workspace / "out" / "structures").glob("*.structure"))
        assert [p.stem for p in files] == ["naive"]
        dag = read_structure(files[0])
        for f in ("P", "Q", "R"):
            assert dag.parents(f) == ("T",)
        assert dag.parents("T") == ()

    def test_naive_benchmark_added_when_missing(self, workspace):
        (workspace / "nonaive.ini").write_text(
            CONFIG.format(min_mi=0.05, min_cmi=0.08, keep="", rhat="1.1")
            .replace("learners = hc, chowliu, tan, naive, bd", "learners = chowliu"),
            encoding="utf-8",
        )
        for cmd in ("select", "learn", "compare"):
            assert run(cmd, "--config", "nonaive.ini") == 0
        labels = (workspace / "out" / "surviving_models.txt").read_text().split()
        assert "naive" in labels
        assert (workspace / "out" / "structures" / "naive.structure").is_file()

    def test_select_idempotent_bytes(self, workspace):
        assert run("select", "--config", "pipeline.ini") == 0
        first = {
            p.name: p.read_bytes() for p in (workspace / "out").iterdir() if p.is_file()
        }
        assert run("select", "--config", "pipeline.ini") == 0
        for p in (workspace / "out").iterdir():
            if p.is_file():
                assert p.read_bytes() == first[p.name]

    def test_effective_config_reproduces_run(self, workspace):
        for cmd in ("select", "learn", "compare", "cv"):
            assert run(cmd, "--config", "pipeline.ini") == 0
        chosen = (workspace / "out" / "chosen_model.txt").read_bytes()
        cv_bytes = (workspace / "out" / "cv_metrics.csv").read_bytes()
        # rerun the cv phase purely from the recorded effective config
        effective = workspace / "out" / "effective_config.ini"
        assert run("cv", "--config", str(effective)) == 0
        assert (workspace / "out" / "chosen_model.txt").read_bytes() == chosen
        assert (workspace / "out" / "cv_metrics.csv").read_bytes() == cv_bytes

    def test_seed_changes_split(self, workspace):
        for cmd in ("select", "learn", "compare"):
            assert run(cmd, "--config", "pipeline.ini") == 0
        assert run("cv", "--config", "pipeline.ini") == 0
        plan_a = (workspace / "out" / "split_plan.csv").read_text()
        assert run("cv", "--config", "pipeline.ini", "--seed", "77") == 0
        plan_b = (workspace / "out" / "split_plan.csv").read_text()
        assert plan_a != plan_b


class TestExitCodes:
    def test_missing_config_is_2(self, workspace):
        assert run("select", "--config", "nope.ini") == 2

    def test_unknown_key_is_2(self, workspace):
        (workspace / "bad.ini").write_text("[data]\nwat = 1\n", encoding="utf-8")
        assert run("select", "--config", "bad.ini") == 2

    def test_phase_order_violation_is_2(self, workspace):
        assert run("cv", "--config", "pipeline.ini") == 2

    def test_corrupt_dataset_cell_is_3(self, workspace):
        text = (workspace / "tiny.csv").read_text().splitlines()
        text[3] = text[3].replace("1", "9", 1)
        (workspace / "tiny.csv").write_text("\n".join(text) + "\n", encoding="utf-8")
        assert run("select", "--config", "pipeline.ini") == 3

    def test_rhat_threshold_is_4(self, workspace):
        (workspace / "strict.ini").write_text(
            CONFIG.format(min_mi=0.05, min_cmi=0.08, keep="", rhat="0.5"), encoding="utf-8"
        )
        for cmd in ("select", "learn", "compare", "cv"):
            assert run(cmd, "--config", "strict.ini") == 0
        assert run("fit-predict", "--config", "strict.ini") == 4
        # outputs are still written for inspection before the failure exit
        assert (workspace / "out" / "rhat.csv").is_file()

    def test_bad_hist_bins_is_2(self, workspace):
        cfg = (workspace / "pipeline.ini").read_text().replace(
            "[selection]", "[selection]\nhist_bins = 0"
        )
        (workspace / "bins.ini").write_text(cfg, encoding="utf-8")
        assert run("select", "--config", "bins.ini") == 2

    def test_unknown_monitor_node_is_2(self, workspace):
        cfg = (workspace / "pipeline.ini").read_text().replace(
            "[mcmc]", "[mcmc]\nmonitor = GHOST"
        )
        (workspace / "monitor.ini").write_text(cfg, encoding="utf-8")
        for cmd in ("select", "learn", "compare", "cv"):
            assert run(cmd, "--config", "monitor.ini") == 0
        assert run("fit-predict", "--config", "monitor.ini") == 2

    def test_target_mismatch_is_2(self, workspace):
        cfg = (workspace / "pipeline.ini").read_text().replace(
            "[data]", "[data]\ntarget = WRONG"
        )
        (workspace / "mismatch.ini").write_text(cfg, encoding="utf-8")
        assert run("select", "--config", "mismatch.ini") == 2
