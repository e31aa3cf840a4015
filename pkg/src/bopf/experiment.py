"""Config-driven experiment runs: TOML in, per-run artifact directories out.

A config names a workload (a named scenario, explicit synthetic queues,
and/or trace files), one or more policies and one or more seeds.  Every
``(policy, seed)`` pair runs in its own engine and writes ``events.jsonl``,
``alloc.csv`` and ``summary.json`` into its own directory; a multi-policy
sweep also writes ``comparison.csv`` next to them.

Example::

    name = "motivational"
    seed = 0
    policies = ["drf", "sp", "bopf"]
    mode = "fluid"

    [workload]
    scenario = "motivational"
    params = { tq_jobs = 200 }
"""
from __future__ import annotations

import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from .core import ClusterConfig, InvalidConfigError, QueueSpec
from .engine import MODES, EventLog, SimConfig, run
from .allocation import POLICIES
from .metrics import RunSummary, avg_completion, summarize
from .scenarios import BUILDERS
from .workload import PROFILES, StageShape, load_trace, queues_from_trace, synth_lq, synth_tq

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ROOT_ENV = "BOPF_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class ConfigError(InvalidConfigError):
    """A config value is missing or has the wrong type; the message names the field path."""


# ------------------------------------------------------------ field access


_MISSING = object()


class _Table:
    """Typed access to one TOML table, carrying its dotted path for errors."""

    def __init__(self, data: Any, path: str, source: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: {path or '<root>'}: expected a table")
        self.data = data
        self.path = path
        self.source = source
        self.seen: set[str] = set()

    def _where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def fail(self, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{self.source}: {self._where(key)}: {msg}")

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default: Any = _MISSING) -> Any:
        self.seen.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise self.fail(key, "required field is missing")
            return default
        return self.data[key]

    def string(self, key: str, default: Any = _MISSING) -> Any:
        v = self.raw(key, default)
        if v is not default and not isinstance(v, str):
            raise self.fail(key, f"expected a string, got {type(v).__name__}")
        return v

    def integer(self, key: str, default: Any = _MISSING, minimum: Optional[int] = None) -> Any:
        v = self.raw(key, default)
        if v is default:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.fail(key, f"expected an integer, got {type(v).__name__}")
        if minimum is not None and v < minimum:
            raise self.fail(key, f"must be >= {minimum}")
        return v

    def number(self, key: str, default: Any = _MISSING, positive: bool = False) -> Any:
        v = self.raw(key, default)
        if v is default or v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.fail(key, f"expected a number, got {type(v).__name__}")
        if positive and not v > 0:
            raise self.fail(key, "must be positive")
        return float(v)

    def numbers(self, key: str, default: Any = _MISSING) -> Any:
        v = self.raw(key, default)
        if v is default or v is None:
            return v
        if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise self.fail(key, "expected a nonempty array of numbers")
        return [float(x) for x in v]

    def table(self, key: str) -> "_Table":
        return _Table(self.raw(key), self._where(key), self.source)

    def tables(self, key: str) -> list["_Table"]:
        v = self.raw(key, [])
        if not isinstance(v, list):
            raise self.fail(key, "expected an array of tables")
        return [_Table(x, f"{self._where(key)}[{i}]", self.source) for i, x in enumerate(v)]

    def reject_unknown(self) -> None:
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise self.fail(extra[0], "unknown field")


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    mode: str = "fluid"
    horizon: Optional[float] = None
    output: Optional[str] = None
    workers: int = 1
    cluster: Optional[dict] = None
    workload: dict = field(default_factory=dict)
    base_dir: str = "."
    source: str = "<config>"
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, source: str = "<config>", base_dir: Union[str, Path] = ".",
                  name: Optional[str] = None) -> "ExperimentConfig":
        root = _Table(data, "", source)
        cfg_name = root.string("name", name or "experiment")
        if root.has("policy") and root.has("policies"):
            raise root.fail("policy", "give either policy or policies, not both")
        if root.has("policy"):
            policies = [root.string("policy")]
        else:
            policies = root.raw("policies")
            if not isinstance(policies, list) or not all(isinstance(p, str) for p in policies):
                raise root.fail("policies", "expected an array of policy names")
        if not policies:
            raise root.fail("policies", "at least one policy is required")
        for i, p in enumerate(policies):
            if p not in POLICIES:
                raise root.fail(f"policies[{i}]" if root.has("policies") else "policy",
                                f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
        seed = root.raw("seed")
        seeds = seed if isinstance(seed, list) else [seed]
        if not seeds or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
            raise root.fail("seed", "expected an integer or a nonempty array of integers")
        mode = root.string("mode", "fluid")
        if mode not in MODES:
            raise root.fail("mode", f"expected one of {', '.join(MODES)}")
        horizon = root.number("horizon", None, positive=True)
        output = root.string("output", None)
        workers = root.integer("workers", 1, minimum=1)
        cluster = _parse_cluster(root.table("cluster")) if root.has("cluster") else None
        workload = _parse_workload(root.table("workload"))
        if cluster is None and "scenario" not in workload:
            raise root.fail("cluster", "required unless workload.scenario is given")
        root.reject_unknown()
        return cls(cfg_name, tuple(policies), tuple(seeds), mode, horizon, output, workers,
                   cluster, workload, str(base_dir), source, data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, source=str(path), base_dir=path.parent, name=path.stem)

    def with_policies(self, policies: Sequence[str]) -> "ExperimentConfig":
        bad = [p for p in policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"{self.source}: policies: unknown policy {bad[0]!r}")
        if not policies:
            raise ConfigError(f"{self.source}: policies: at least one policy is required")
        return replace(self, policies=tuple(policies))

    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV) or self.output or DEFAULT_OUTPUT_ROOT
        return Path(root) / self.name

    def provenance(self, seed: int) -> dict:
        return {"experiment": self.name, "seed": seed, "config": self.raw}


def _parse_cluster(t: _Table) -> dict:
    out = {
        "capacity": t.numbers("capacity"),
        "resources": t.raw("resources", []),
        "n_min": t.integer("n_min", 1, minimum=1),
        "tick": t.number("tick", 1.0, positive=True),
    }
    if not isinstance(out["resources"], list) or not all(isinstance(r, str) for r in out["resources"]):
        raise t.fail("resources", "expected an array of names")
    if any(c <= 0 for c in out["capacity"]):
        raise t.fail("capacity", "every capacity must be positive")
    if out["resources"] and len(out["resources"]) != len(out["capacity"]):
        raise t.fail("resources", "length does not match capacity")
    t.reject_unknown()
    return out


def _parse_workload(t: _Table) -> dict:
    out: dict[str, Any] = {}
    if t.has("scenario"):
        name = t.string("scenario")
        if name not in BUILDERS:
            raise t.fail("scenario", f"unknown scenario {name!r}; choose from {', '.join(sorted(BUILDERS))}")
        out["scenario"] = name
        params = t.raw("params", {})
        if not isinstance(params, dict):
            raise t.fail("params", "expected a table")
        out["params"] = dict(params)
    traces = t.raw("traces", [])
    if not isinstance(traces, list) or not all(isinstance(p, str) for p in traces):
        raise t.fail("traces", "expected an array of paths")
    out["traces"] = list(traces)
    out["lq"] = [_parse_lq(x) for x in t.tables("lq")]
    out["tq"] = [_parse_tq(x) for x in t.tables("tq")]
    if not (out.get("scenario") or out["traces"] or out["lq"] or out["tq"]):
        raise t.fail("scenario", "workload defines no queues (need scenario, traces, lq or tq)")
    t.reject_unknown()
    return out


def _parse_lq(t: _Table) -> dict:
    out = {
        "id": t.string("id"),
        "period": t.number("period", positive=True),
        "demand": t.numbers("demand"),
        "window": t.number("window", positive=True),
        "bursts": t.integer("bursts", minimum=1),
        "tasks": t.raw("tasks", [10]),
        "durations": t.numbers("durations", None),
        "start": t.number("start", 0.0),
        "jobs_per_burst": t.integer("jobs_per_burst", 1, minimum=1),
        "sla": t.number("sla", 1.0, positive=True),
        "demand_std": t.numbers("demand_std", None),
        "declared": t.numbers("declared", None),
    }
    if not isinstance(out["tasks"], list) or not all(isinstance(n, int) and n >= 1 for n in out["tasks"]):
        raise t.fail("tasks", "expected an array of positive integers")
    if out["durations"] is None:
        out["durations"] = [out["window"] / len(out["tasks"])] * len(out["tasks"])
    if len(out["durations"]) != len(out["tasks"]):
        raise t.fail("durations", "length does not match tasks")
    if out["window"] > out["period"]:
        raise t.fail("window", "longer than the period")
    t.reject_unknown()
    return out


def _parse_tq(t: _Table) -> dict:
    out = {
        "id": t.string("id"),
        "jobs": t.integer("jobs", minimum=1),
        "profile": t.string("profile", "bb"),
        "task_demand": t.numbers("task_demand"),
        "arrival": t.number("arrival", None),
    }
    if out["profile"] not in PROFILES:
        raise t.fail("profile", f"unknown profile; choose from {', '.join(sorted(PROFILES))}")
    t.reject_unknown()
    return out


# -------------------------------------------------------------- building


def build_sim_config(cfg: ExperimentConfig, policy: str, seed: int) -> SimConfig:
    """Materialize the workload for one seed and wrap it in a ``SimConfig``."""
    wl = cfg.workload
    queues: list[QueueSpec] = []
    cluster = None
    horizon = cfg.horizon
    if "scenario" in wl:
        built = BUILDERS[wl["scenario"]](seed=seed, **wl["params"])
        cluster = built.cluster
        queues.extend(built.queues)
        if horizon is None:
            horizon = built.horizon
    if cfg.cluster is not None:
        c = cfg.cluster
        cluster = ClusterConfig(np.array(c["capacity"]), tuple(c["resources"]), c["n_min"], c["tick"])
    for i, spec in enumerate(wl["lq"]):
        shape = StageShape(tuple(spec["tasks"]), tuple(spec["durations"]))
        queues.append(synth_lq(
            spec["period"], spec["demand"], spec["window"], spec["bursts"], shape,
            seed=seed * 1000 + i, qid=spec["id"], start=spec["start"],
            jobs_per_burst=spec["jobs_per_burst"], sla_fraction=spec["sla"],
            demand_std=spec["demand_std"], declared=spec["declared"],
        ))
    for i, spec in enumerate(wl["tq"]):
        queues.append(synth_tq(spec["id"], spec["jobs"], spec["profile"], spec["task_demand"],
                               seed=seed * 1000 + 500 + i, arrival=spec["arrival"]))
    for p in wl["traces"]:
        path = Path(p) if Path(p).is_absolute() else Path(cfg.base_dir) / p
        if not path.is_file():
            raise FileNotFoundError(f"{cfg.source}: workload.traces: no such trace file: {path}")
        queues.extend(queues_from_trace(load_trace(path, cluster.k if cluster else None)))
    return SimConfig(cluster, tuple(queues), policy=policy, mode=cfg.mode, horizon=horizon,
                     meta=cfg.provenance(seed))


# ----------------------------------------------------------------- running


@dataclass(frozen=True)
class RunResult:
    policy: str
    seed: int
    directory: str
    lq_avg_completion: float
    tq_avg_completion: float
    min_deadline_fraction: float
    end_time: float
    truncated: bool

    def line(self) -> str:
        return (f"policy={self.policy} seed={self.seed} lq_avg={self.lq_avg_completion:.3f} "
                f"tq_avg={self.tq_avg_completion:.3f} deadline_min={self.min_deadline_fraction:.3f} "
                f"end={self.end_time:.3f} truncated={self.truncated} dir={self.directory}")


def run_dir(cfg: ExperimentConfig, policy: str, seed: int) -> Path:
    return cfg.output_dir() / f"{policy}-seed{seed}"


def write_artifacts(log: EventLog, directory: Union[str, Path]) -> RunSummary:
    """Write ``events.jsonl``, ``alloc.csv`` and ``summary.json`` for one run."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    log.write(d / "events.jsonl")
    (d / "alloc.csv").write_text(log.to_alloc_csv(), encoding="utf-8")
    summary = summarize(log)
    (d / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    return summary


def run_one(cfg: ExperimentConfig, policy: str, seed: int) -> RunResult:
    log = run(build_sim_config(cfg, policy, seed))
    d = run_dir(cfg, policy, seed)
    summary = write_artifacts(log, d)
    fractions = list(summary.deadline_fraction.values())
    return RunResult(
        policy=policy,
        seed=seed,
        directory=str(d),
        lq_avg_completion=avg_completion(log, "LQ"),
        tq_avg_completion=avg_completion(log, "TQ"),
        min_deadline_fraction=min(fractions) if fractions else math.nan,
        end_time=summary.end_time,
        truncated=summary.truncated,
    )


def _run_args(args: tuple) -> RunResult:
    return run_one(*args)


def baseline_policy(policies: Sequence[str]) -> str:
    """Reference policy for factor columns: DRF when present, else the first one."""
    return "drf" if "drf" in policies else policies[0]


COMPARISON_FIELDS = (
    "policy", "seed", "lq_avg_completion", "tq_avg_completion", "min_deadline_fraction",
    "baseline", "lq_factor", "tq_factor",
)


def comparison_csv(results: Sequence[RunResult]) -> str:
    """One row per run; factors are baseline average completion over this run's."""
    policies = list(dict.fromkeys(r.policy for r in results))
    base = baseline_policy(policies)
    ref = {r.seed: r for r in results if r.policy == base}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_FIELDS)
    for r in sorted(results, key=lambda r: (policies.index(r.policy), r.seed)):
        b = ref.get(r.seed)
        lq_f = b.lq_avg_completion / r.lq_avg_completion if b else math.nan
        tq_f = b.tq_avg_completion / r.tq_avg_completion if b else math.nan
        w.writerow([r.policy, r.seed, repr(r.lq_avg_completion), repr(r.tq_avg_completion),
                    repr(r.min_deadline_fraction), base, repr(lq_f), repr(tq_f)])
    return buf.getvalue()


def run_experiment(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    echo: Optional[Callable[[str], None]] = None,
) -> list[RunResult]:
    """Run every (policy, seed) pair; write comparison.csv when there are several policies.

    Runs are independent, so they go to a bounded process pool; results come
    back in submission order whatever the completion order.
    """
    jobs = [(cfg, p, s) for p in cfg.policies for s in cfg.seeds]
    n = min(workers or cfg.workers, len(jobs))
    if n <= 1:
        results = [_run_args(a) for a in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_args, jobs))
    if echo is not None:
        for r in results:
            echo(r.line())
    if len(cfg.policies) > 1:
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(comparison_csv(results), encoding="utf-8")
    return results


def replay(events_path: Union[str, Path]) -> RunSummary:
    """Recompute a run's summary from its event log alone."""
    return summarize(EventLog.read(events_path))
