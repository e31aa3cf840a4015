import csv
import json
from pathlib import Path

import pytest

from bopf.engine import EventLog
from bopf.experiment import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    ExperimentConfig,
    build_sim_config,
    replay,
    run_experiment,
)
from bopf.metrics import factor_of_improvement
from bopf.workload import dump_trace

from conftest import one_task_job

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def minimal(**override):
    data = {
        "name": "t",
        "seed": 1,
        "policy": "drf",
        "mode": "task",
        "horizon": 200.0,
        "cluster": {"capacity": [20.0, 40.0]},
        "workload": {
            "lq": [{"id": "lq0", "period": 100.0, "window": 20.0, "bursts": 2, "demand": [100.0, 200.0]}],
            "tq": [{"id": "tq0", "jobs": 5, "task_demand": [1.0, 2.0]}],
        },
    }
    data.update(override)
    return data


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "runs"))
    return tmp_path / "runs"


class TestConfigParsing:
    def test_shipped_configs_parse(self):
        for p in sorted(CONFIGS.glob("*.toml")):
            cfg = ExperimentConfig.load(p)
            assert cfg.policies and cfg.seeds

    @pytest.mark.parametrize("patch,path", [
        ({"policy": "fifo"}, "policy"),
        ({"seed": "one"}, "seed"),
        ({"mode": "batch"}, "mode"),
        ({"horizon": -1.0}, "horizon"),
        ({"cluster": {"capacity": [1.0, "x"]}}, "cluster.capacity"),
        ({"cluster": {"capacity": [1.0], "cores": 3}}, "cluster.cores"),
        ({"workers": 0}, "workers"),
    ])
    def test_errors_name_field_path(self, patch, path):
        with pytest.raises(ConfigError, match=rf"<config>: {path.replace('.', '[.]')}:"):
            ExperimentConfig.from_dict(minimal(**patch))

    def test_nested_array_path(self):
        data = minimal()
        data["workload"]["lq"][0]["window"] = "long"
        with pytest.raises(ConfigError, match=r"workload\.lq\[0\]\.window"):
            ExperimentConfig.from_dict(data)

    def test_seed_required(self):
        data = minimal()
        del data["seed"]
        with pytest.raises(ConfigError, match="seed: required"):
            ExperimentConfig.from_dict(data)

    def test_policy_and_policies_exclusive(self):
        with pytest.raises(ConfigError, match="either"):
            ExperimentConfig.from_dict(minimal(policies=["drf"]))

    def test_bad_toml(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("name = [")
        with pytest.raises(ConfigError, match="bad.toml"):
            ExperimentConfig.load(p)

    def test_output_root_from_env(self, out_root):
        cfg = ExperimentConfig.from_dict(minimal(output="elsewhere"))
        assert cfg.output_dir() == out_root / "t"

    def test_output_without_env(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_ROOT_ENV)
        assert ExperimentConfig.from_dict(minimal(output="o")).output_dir() == Path("o") / "t"
        assert ExperimentConfig.from_dict(minimal()).output_dir() == Path("runs") / "t"


class TestRuns:
    def test_minimal_artifacts(self, out_root):
        cfg = ExperimentConfig.load(CONFIGS / "minimal.toml")
        (res,) = run_experiment(cfg)
        d = Path(res.directory)
        assert {p.name for p in d.iterdir()} == {"events.jsonl", "alloc.csv", "summary.json"}
        summary = json.loads((d / "summary.json").read_text())
        assert summary["policy"] == "drf"
        assert summary["config"]["seed"] == 1
        assert not (cfg.output_dir() / "comparison.csv").exists()

    def test_replay_identical(self, out_root):
        (res,) = run_experiment(ExperimentConfig.from_dict(minimal()))
        d = Path(res.directory)
        assert replay(d / "events.jsonl").to_json() == (d / "summary.json").read_text()

    def test_deterministic_bytes(self, tmp_path, monkeypatch):
        outs = []
        for i in range(2):
            monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / f"r{i}"))
            (res,) = run_experiment(ExperimentConfig.from_dict(minimal(policy="bopf")))
            outs.append((Path(res.directory) / "events.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_sweep_comparison(self, out_root):
        cfg = ExperimentConfig.from_dict(minimal()).with_policies(["drf", "sp", "bopf"])
        results = run_experiment(cfg, workers=1)
        rows = list(csv.DictReader((cfg.output_dir() / "comparison.csv").open()))
        assert [r["policy"] for r in rows] == ["drf", "sp", "bopf"]
        drf_log = EventLog.read(Path(results[0].directory) / "events.jsonl")
        for r, res in zip(rows, results):
            log = EventLog.read(Path(res.directory) / "events.jsonl")
            assert float(r["lq_factor"]) == factor_of_improvement(drf_log, log, "LQ")
            assert float(r["tq_factor"]) == factor_of_improvement(drf_log, log, "TQ")
        assert float(rows[0]["lq_factor"]) == 1.0

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        cfg = ExperimentConfig.from_dict(minimal(seed=[1, 2])).with_policies(["drf", "bopf"])
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "a"))
        serial = run_experiment(cfg, workers=1)
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "b"))
        parallel = run_experiment(cfg, workers=2)
        assert [r.line().split(" dir=")[0] for r in serial] == [r.line().split(" dir=")[0] for r in parallel]

    def test_trace_workload(self, tmp_path):
        dump_trace([one_task_job("a", (1.0, 1.0), 5.0)], tmp_path / "t.jsonl")
        data = minimal()
        data["workload"] = {"traces": ["t.jsonl"]}
        cfg = ExperimentConfig.from_dict(data, base_dir=tmp_path)
        sim = build_sim_config(cfg, "drf", 1)
        assert [q.id for q in sim.queues] == ["trace"]

    def test_missing_trace(self, tmp_path):
        data = minimal()
        data["workload"] = {"traces": ["nope.jsonl"]}
        cfg = ExperimentConfig.from_dict(data, base_dir=tmp_path)
        with pytest.raises(FileNotFoundError, match="nope.jsonl"):
            build_sim_config(cfg, "drf", 1)
