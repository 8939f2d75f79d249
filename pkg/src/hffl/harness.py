"""Config-driven experiment runner.

A run directory holds everything needed to recompute its numbers::

    <output_root>/<name>/
        config.json        resolved configuration, defaults included
        trial_<k>/         per-trial artifacts (round records, checkpoints, reports)
        raw.csv            one row per (trial, key, arch, metric) measurement
        summary.csv        median/std over trials of every (key, arch, metric)
        record.json        RunRecord: config, raw rows, summary, artifact checksums
        FAILED             present only when the run aborted mid-way

The config file is TOML; see ``DEFAULTS`` for every recognised key.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds, datagen, federation, hierarchy, models, valuation
from .errors import CapacityError, ConfigError, FormatError, HfflError
from .levels import LevelConfig
from .models import ArchSpec, OptimizerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "HFFL_OUTPUT_ROOT"
KINDS = ("federation-baseline", "hffl", "hffl-plus", "shapley", "bounds")
KEY_NAMES = {"federation-baseline": "round", "hffl": "level", "hffl-plus": "level",
             "shapley": "agent", "bounds": "m"}

DEFAULTS = {
    "kind": "hffl",
    "name": "run",
    "seed": 0,
    "trials": 5,
    "rounds": 10,
    "output_dir": "runs",
    "data": {
        "source": "blobs",  # blobs | idx | csv
        "profile": "digits",
        "classes": 10,
        "dim": 5,
        "clusters_per_class": 3,
        "center_scale": 3.0,
        "spread": 1.0,
        "train_per_class": 1800,
        "test_per_class": 300,
        "seed": 0,
        "train_images": "", "train_labels": "", "test_images": "", "test_labels": "",
        "train_csv": "", "test_csv": "",
    },
    "levels": {"agents": [20, 10, 4], "quotas": [200, 500, 2000]},
    "family": [{"kind": "mlp", "hidden": [64], "activation": "relu"}],
    "optimizer": {"kind": "adam", "lr": None, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "batch_size": 32},
    "federation": {
        "local_epochs": 1,
        "literal": False,
        "baseline_epochs": 100,
        "workers": 1,
        "agents": 30,
        "per_agent": 20,
    },
    "shapley": {
        "fixture": "builtin",  # builtin | generated
        "learners": list(valuation.LearnerSpec.KINDS),
        "agents": 10,
        "per_agent": 1,
        "centers": [[0.0, 0.0], [2.0, 2.0]],
        "spread": 1.0,
        "test_per_class": 50,
    },
    "bounds": {
        "m": [50, 200, 500, 2000],
        "epsilon": [0.05, 0.1, 0.2],
        "family_size": 0,  # 0: size of [[family]]
        "loss_range": [0.0, 1.0],
        "mc_trials": 100,
        "mc_m": 200,
        "mc_epsilon": 0.1,
        "mc_loss": "zero_one",
        "mc_epochs": 20,
        "mc_fit_once": True,
    },
}


# -- configuration -----------------------------------------------------------

def _merge(defaults, given, path, errors):
    if not isinstance(defaults, dict):
        return given
    if not isinstance(given, dict):
        errors.append(f"{path or 'config'}: expected a table")
        return copy.deepcopy(defaults)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            errors.append(f"{where}: unknown key")
        elif isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, where, errors)
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment settings; ``raw`` holds the fully resolved dict."""

    raw: dict

    @classmethod
    def from_dict(cls, given: dict) -> "ExperimentConfig":
        errors: list[str] = []
        raw = _merge(DEFAULTS, given, "", errors)
        if raw["optimizer"]["lr"] is None:
            profile = raw["data"]["profile"]
            if profile not in models.DEFAULT_LEARNING_RATES:
                errors.append(f"data.profile: unknown profile {profile!r}")
                raw["optimizer"]["lr"] = 0.01
            else:
                raw["optimizer"]["lr"] = models.DEFAULT_LEARNING_RATES[profile]
        if raw["bounds"]["family_size"] == 0:
            raw["bounds"]["family_size"] = len(raw["family"]) if isinstance(raw["family"], list) else 1
        cfg = cls(raw)
        errors.extend(cfg._validate())
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
        return cfg

    def _validate(self) -> list[str]:
        r, errors = self.raw, []

        def check(cond, msg):
            if not cond:
                errors.append(msg)

        check(r["kind"] in KINDS, f"kind: must be one of {KINDS}, got {r['kind']!r}")
        check(isinstance(r["name"], str) and r["name"] and "/" not in r["name"], "name: must be a plain non-empty string")
        for key in ("seed", "trials", "rounds"):
            check(isinstance(r[key], int) and not isinstance(r[key], bool), f"{key}: must be an integer")
        if isinstance(r["trials"], int):
            check(r["trials"] >= 1, "trials: must be >= 1")
        if isinstance(r["rounds"], int):
            check(r["rounds"] >= 1, "rounds: must be >= 1")
        d = r["data"]
        check(d["source"] in ("blobs", "idx", "csv"), f"data.source: unknown source {d['source']!r}")
        if d["source"] == "blobs":
            for key in ("classes", "dim", "clusters_per_class", "train_per_class", "test_per_class"):
                check(isinstance(d[key], int) and d[key] >= 1, f"data.{key}: must be a positive integer")
            check(isinstance(d["classes"], int) and d["classes"] >= 2, "data.classes: must be >= 2")
            check(isinstance(d["spread"], (int, float)) and d["spread"] >= 0, "data.spread: must be >= 0")
            if all(isinstance(d[k], int) and d[k] >= 1 for k in ("clusters_per_class", "train_per_class", "test_per_class")):
                for key in ("train_per_class", "test_per_class"):
                    check(d[key] % d["clusters_per_class"] == 0,
                          f"data.{key}: must be a multiple of clusters_per_class")
        elif d["source"] == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                check(d[key] and Path(d[key]).is_file(), f"data.{key}: file not found: {d[key]!r}")
        elif d["source"] == "csv":
            for key in ("train_csv", "test_csv"):
                check(d[key] and Path(d[key]).is_file(), f"data.{key}: file not found: {d[key]!r}")
        try:
            LevelConfig(tuple(r["levels"]["agents"]), tuple(r["levels"]["quotas"]))
        except (ConfigError, TypeError) as exc:
            errors.append(f"levels: {exc}")
        if not isinstance(r["family"], list) or not r["family"]:
            errors.append("family: need at least one [[family]] entry")
        else:
            before = len(errors)
            for k, member in enumerate(r["family"]):
                if not isinstance(member, dict) or member.get("kind") not in ("logistic", "mlp"):
                    errors.append(f"family[{k}].kind: must be 'logistic' or 'mlp'")
                elif set(member) - {"kind", "hidden", "activation"}:
                    errors.append(f"family[{k}]: unknown keys {sorted(set(member) - {'kind', 'hidden', 'activation'})}")
            if len(errors) == before:
                names = [a.name for a in self.family(2, 2)]
                check(len(set(names)) == len(names), f"family: duplicate architectures {names}")
        try:
            self.optimizer()
        except (ConfigError, TypeError) as exc:
            errors.append(f"optimizer: {exc}")
        f = r["federation"]
        for key in ("local_epochs", "baseline_epochs", "workers", "agents", "per_agent"):
            check(isinstance(f[key], int) and f[key] >= (0 if key.endswith("epochs") else 1),
                  f"federation.{key}: must be a nonnegative integer" if key.endswith("epochs")
                  else f"federation.{key}: must be a positive integer")
        s = r["shapley"]
        check(s["fixture"] in ("builtin", "generated"), "shapley.fixture: must be 'builtin' or 'generated'")
        for name in s["learners"]:
            check(name in valuation.LearnerSpec.KINDS, f"shapley.learners: unknown learner {name!r}")
        b = r["bounds"]
        check(b["mc_loss"] in ("zero_one", "cross_entropy"), "bounds.mc_loss: must be 'zero_one' or 'cross_entropy'")
        check(len(b["loss_range"]) == 2 and b["loss_range"][1] > b["loss_range"][0], "bounds.loss_range: need [a, b] with b > a")
        check(isinstance(b["mc_epsilon"], (int, float)) and b["mc_epsilon"] > 0, "bounds.mc_epsilon: must be positive")
        return errors

    # typed views

    @property
    def kind(self) -> str:
        return self.raw["kind"]

    @property
    def name(self) -> str:
        return self.raw["name"]

    def levels(self) -> LevelConfig:
        return LevelConfig(tuple(self.raw["levels"]["agents"]), tuple(self.raw["levels"]["quotas"]))

    def family(self, dim: int, classes: int) -> list[ArchSpec]:
        out = []
        for member in self.raw["family"]:
            if member["kind"] == "logistic":
                out.append(ArchSpec.logistic(dim, classes))
            else:
                out.append(ArchSpec.mlp(dim, tuple(member.get("hidden", [64])), classes,
                                        member.get("activation", "relu")))
        return out

    def optimizer(self) -> OptimizerConfig:
        o = self.raw["optimizer"]
        return OptimizerConfig(o["kind"], float(o["lr"]), o["beta1"], o["beta2"], o["eps"], o["batch_size"])

    def federation(self, seed: int, track_agents: bool = False) -> federation.FederationConfig:
        f = self.raw["federation"]
        return federation.FederationConfig(
            opt=self.optimizer(), local_epochs=f["local_epochs"], literal=f["literal"],
            baseline_epochs=f["baseline_epochs"], track_agents=track_agents,
            workers=f["workers"], seed=seed,
        )

    def trial_seed(self, trial: int) -> int:
        return int(self.raw["seed"]) + trial


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            given = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(given)


def load_data(cfg: ExperimentConfig) -> tuple[datagen.Dataset, datagen.Dataset]:
    d = cfg.raw["data"]
    if d["source"] == "blobs":
        common = dict(classes=d["classes"], dim=d["dim"], clusters_per_class=d["clusters_per_class"],
                      center_scale=d["center_scale"], spread=d["spread"], center_seed=d["seed"])
        train = datagen.generate_cluster_blobs(per_class=d["train_per_class"], seed=[d["seed"], 1],
                                               name="blobs-train", **common)
        test = datagen.generate_cluster_blobs(per_class=d["test_per_class"], seed=[d["seed"], 2],
                                              name="blobs-test", **common)
    elif d["source"] == "idx":
        train = datagen.load_idx(d["train_images"], d["train_labels"], "idx-train")
        test = datagen.load_idx(d["test_images"], d["test_labels"], "idx-test")
    else:
        train = datagen.read_csv(d["train_csv"], "csv-train")
        test = datagen.read_csv(d["test_csv"], "csv-test", train.n_classes)
    return train, test


def check_capacity(cfg: ExperimentConfig, train: datagen.Dataset, test: datagen.Dataset | None = None) -> None:
    if cfg.kind in ("hffl", "hffl-plus"):
        need = cfg.levels().total_data
    elif cfg.kind == "federation-baseline":
        f = cfg.raw["federation"]
        need = f["agents"] * f["per_agent"]
    elif cfg.kind == "bounds":
        need = cfg.raw["bounds"]["mc_m"] * (2 if cfg.raw["bounds"]["mc_fit_once"] else 1)
        held_out = 10 * cfg.raw["bounds"]["mc_m"]
        if test is not None and len(test) < held_out:
            raise CapacityError(f"bounds check needs a held-out set of 10 x mc_m = {held_out}, {len(test)} available",
                                required=held_out, available=len(test))
    else:
        return
    if need > len(train):
        raise CapacityError(f"configuration needs {need} training examples, {len(train)} available",
                            required=need, available=len(train))


# -- records -----------------------------------------------------------------

@dataclass
class RunRecord:
    config: dict
    rows: list[dict]  # {"trial", "key", "arch", "metric", "value"}
    summary: list[dict] = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    failed: str | None = None
    run_dir: str | None = None

    @property
    def kind(self) -> str:
        return self.config["kind"]

    def to_json(self) -> str:
        doc = {"config": self.config, "rows": self.rows, "summary": self.summary,
               "artifacts": self.artifacts, "failed": self.failed}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_record(run_dir) -> RunRecord:
    path = Path(run_dir) / "record.json"
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{run_dir}: no run record ({exc.strerror})") from exc
    return RunRecord(doc["config"], doc["rows"], doc["summary"], doc["artifacts"], doc["failed"], str(run_dir))


def _sort_key(value):
    try:
        return (0, float(value), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(value))


def _group(rows, order):
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["key"], row["arch"], row["metric"]), []).append(row)
    arch_pos = {a: k for k, a in enumerate(order)}
    return sorted(groups.items(), key=lambda kv: (_sort_key(kv[0][0]), arch_pos.get(kv[0][1], len(arch_pos)),
                                                  kv[0][1], kv[0][2]))


def _arch_order(rows):
    seen = []
    for row in rows:
        if row["arch"] not in seen:
            seen.append(row["arch"])
    return seen


def summary_rows(rows: Sequence[dict]) -> list[dict]:
    """Median and population std over trials for every (key, arch, metric)."""
    out = []
    for (key, arch, metric), group in _group(rows, _arch_order(rows)):
        values = np.array([r["value"] for r in sorted(group, key=lambda r: r["trial"])], dtype=np.float64)
        out.append({"key": key, "arch": arch, "metric": metric, "median": float(np.median(values)),
                    "std": float(np.std(values)), "n": len(values)})
    return out


def summarize(records: Sequence[RunRecord]) -> list[dict]:
    """Pool several runs of one experiment kind.

    For each (key, arch, metric): the median and std over all pooled trials,
    and ``run_std``, the std of the per-run medians.
    """
    if not records:
        raise ConfigError("nothing to summarize")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ConfigError(f"cannot summarize runs of different kinds: {sorted(kinds)}")
    tagged = [dict(row, run=k) for k, rec in enumerate(records) for row in rec.rows]
    order = _arch_order(tagged)
    out = []
    for (key, arch, metric), group in _group(tagged, order):
        values = np.array([r["value"] for r in sorted(group, key=lambda r: (r["run"], r["trial"]))])
        per_run = [np.median([r["value"] for r in group if r["run"] == k])
                   for k in range(len(records)) if any(r["run"] == k for r in group)]
        out.append({"key": key, "arch": arch, "metric": metric, "median": float(np.median(values)),
                    "std": float(np.std(values)), "run_std": float(np.std(per_run)),
                    "runs": len(per_run), "n": len(values)})
    return out


def summary_csv(table: Sequence[dict], key_name: str = "key") -> str:
    buf = io.StringIO()
    if not table:
        return ""
    cols = [c for c in table[0] if c != "key"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key_name] + cols)
    for row in table:
        w.writerow([row["key"]] + [repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()


def _raw_csv(rows, key_name):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", key_name, "arch", "metric", "value"])
    for r in rows:
        w.writerow([r["trial"], r["key"], r["arch"], r["metric"], repr(float(r["value"]))])
    return buf.getvalue()


# -- experiment kinds --------------------------------------------------------

def _row(trial, key, arch, metric, value):
    return {"trial": trial, "key": key, "arch": arch, "metric": metric, "value": float(value)}


def _jsonl_writer(path, arch):
    def write(level, m):
        rec = m.to_record(level)
        rec["arch"] = arch
        with open(path, "a") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return write


def _trial_hffl(cfg, trial, train, test, trial_dir, rows):
    seed = cfg.trial_seed(trial)
    levels = cfg.levels()
    part = datagen.partition(train, levels, seed)
    subs = datagen.level_subsample(part, levels, seed)
    family = cfg.family(train.dim, train.n_classes)
    fcfg = cfg.federation(seed)
    rounds = cfg.raw["rounds"]
    if cfg.kind == "hffl-plus":
        report = hierarchy.run_hffl_plus(train, levels, part, subs, family, rounds, test, fcfg)
        (trial_dir / "hffl_plus.json").write_text(report.to_json())
        (trial_dir / "hffl_plus.csv").write_text(report.to_csv())
        runs = report.runs
    else:
        runs = {}
        for k, arch in enumerate(family):
            runs[arch.name] = hierarchy.run_hffl(
                train, levels, part, subs, arch, rounds, test,
                fcfg if len(family) == 1 else replace(fcfg, seed=hierarchy.family_seed(seed, k)),
            )
    for name, reports in runs.items():
        hierarchy.write_checkpoints(reports, trial_dir / name)
        log_path = trial_dir / "rounds.jsonl"
        for r in reports:
            for m in r.rounds:
                _jsonl_writer(log_path, name)(r.level, m)
            rows.append(_row(trial, r.level, name, "score", r.score))
    if cfg.kind == "hffl-plus":
        for lvl in levels.levels():
            rows.append(_row(trial, lvl, "hffl+", "score", report.winner_score(lvl)))
            for arch in family:
                rows.append(_row(trial, lvl, arch.name, "won", float(report.winners[lvl] == arch)))


def _trial_federation_baseline(cfg, trial, train, test, trial_dir, rows):
    seed = cfg.trial_seed(trial)
    f = cfg.raw["federation"]
    order = np.random.default_rng(seed).permutation(len(train))
    n, per = f["agents"], f["per_agent"]
    participants = federation.ParticipantSet(
        train, tuple(((1, j + 1), order[j * per:(j + 1) * per]) for j in range(n)))
    fcfg = cfg.federation(seed, track_agents=True)
    for k, arch in enumerate(cfg.family(train.dim, train.n_classes)):
        init = models.init_params(arch, hierarchy.init_seed(seed))
        base = np.array(list(federation.local_baseline(participants, init, fcfg, test).values()))
        rows.append(_row(trial, 0, arch.name, "median_agent_accuracy", np.median(base)))
        rows.append(_row(trial, 0, arch.name, "agent_std", np.std(base)))
        log_path = trial_dir / "rounds.jsonl"
        final, metrics = federation.run_federation(
            init, participants, cfg.raw["rounds"], test, fcfg, level=1,
            on_round=lambda m, name=arch.name: _jsonl_writer(log_path, name)(1, m))
        models.save_checkpoint(final, trial_dir / f"{arch.name}.ckpt")
        for m in metrics:
            acc = np.array(list(m.agent_accuracies.values()))
            rows.append(_row(trial, m.round, arch.name, "median_agent_accuracy", np.median(acc)))
            rows.append(_row(trial, m.round, arch.name, "agent_std", np.std(acc)))
            rows.append(_row(trial, m.round, arch.name, "global_accuracy", m.accuracy))


def builtin_fixture():
    """The frozen 10-agent valuation fixture: (train, ownership, test, expected)."""
    base = Path(__file__).parent / "data"
    expected = json.loads((base / "shapley_fixture_expected.json").read_text())
    train = datagen.read_csv(base / "shapley_fixture_train.csv", "shapley-fixture-train", 2)
    test = datagen.read_csv(base / "shapley_fixture_test.csv", "shapley-fixture-test", 2)
    return train, np.array(expected["ownership"]), test, expected


def _trial_shapley(cfg, trial, trial_dir, rows):
    s = cfg.raw["shapley"]
    if s["fixture"] == "builtin":
        train, owners, test, _ = builtin_fixture()
    else:
        seed = cfg.trial_seed(trial)
        train, owners = datagen.agent_blobs(s["agents"], s["per_agent"], s["centers"], s["spread"], seed)
        test = datagen.generate_blobs(len(s["centers"]), s["test_per_class"], s["centers"], s["spread"],
                                      [seed, 2], "agent-blobs-test")
    for name in s["learners"]:
        learner = valuation.LearnerSpec(name)
        report = valuation.agent_contribution(train, owners, learner, test)
        (trial_dir / f"shapley_{name}.csv").write_text(report.to_csv())
        (trial_dir / f"shapley_{name}.json").write_text(report.to_json())
        loo = valuation.loo_value(train, owners, learner, test)
        for agent, phi in report.as_dict().items():
            rows.append(_row(trial, agent, name, "phi", phi))
            rows.append(_row(trial, agent, name, "loo", loo[agent]))


def _run_bounds(cfg, train, test, run_dir, rows):
    b = cfg.raw["bounds"]
    table = bounds.bound_table(b["m"], b["epsilon"], b["family_size"], tuple(b["loss_range"]))
    for entry in table:
        rows.append(_row(0, entry["m"], f"eps={entry['epsilon']!r}", "delta", entry["delta"]))
    family = cfg.family(train.dim, train.n_classes)
    result = bounds.empirical_gap(train, test, family, b["mc_trials"], cfg.trial_seed(0), m=b["mc_m"],
                                  epsilon=b["mc_epsilon"], loss=b["mc_loss"], epochs=b["mc_epochs"],
                                  opt=cfg.optimizer(), fit_once=b["mc_fit_once"])
    arch = f"mc-eps={b['mc_epsilon']!r}"
    for t, gap in enumerate(result.gaps):
        rows.append(_row(t, b["mc_m"], arch, "max_gap", gap))
    rows.append(_row(0, b["mc_m"], arch, "violation_rate", result.violation_rate))
    rows.append(_row(0, b["mc_m"], arch, "delta_bound", result.delta))


def output_root(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or cfg.raw["output_dir"])


def _checksums(run_dir: Path) -> dict:
    out = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_file() and path.name != "record.json":
            out[path.relative_to(run_dir).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def run_experiment(cfg: ExperimentConfig, run_dir=None, overwrite: bool = False) -> RunRecord:
    """Execute every trial of ``cfg`` and persist the run directory.

    Configuration and capacity problems raise before anything is written.
    A failure during training leaves the partial results plus a ``FAILED``
    marker and re-raises.
    """
    train = test = None
    if cfg.kind != "shapley" or cfg.raw["shapley"]["fixture"] == "generated":
        try:
            train, test = load_data(cfg)
        except FormatError as exc:
            raise ConfigError(f"data: {exc}") from exc
        check_capacity(cfg, train, test)
    run_dir = Path(run_dir) if run_dir is not None else output_root(cfg) / cfg.name
    if run_dir.exists() and any(run_dir.iterdir()) and not overwrite:
        raise ConfigError(f"run directory {run_dir} already exists and is not empty")
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in ("FAILED", "record.json", "raw.csv", "summary.csv"):
        (run_dir / stale).unlink(missing_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n")

    rows: list[dict] = []
    record = RunRecord(cfg.raw, rows, run_dir=str(run_dir))
    key_name = KEY_NAMES[cfg.kind]
    try:
        if cfg.kind == "bounds":
            _run_bounds(cfg, train, test, run_dir, rows)
        else:
            trials = 1 if cfg.kind == "shapley" and cfg.raw["shapley"]["fixture"] == "builtin" else cfg.raw["trials"]
            for trial in range(trials):
                trial_dir = run_dir / f"trial_{trial}"
                if trial_dir.exists():
                    for old in trial_dir.rglob("rounds.jsonl"):
                        old.unlink()
                trial_dir.mkdir(exist_ok=True)
                log.info("%s: trial %d/%d", cfg.name, trial + 1, trials)
                if cfg.kind in ("hffl", "hffl-plus"):
                    _trial_hffl(cfg, trial, train, test, trial_dir, rows)
                elif cfg.kind == "federation-baseline":
                    _trial_federation_baseline(cfg, trial, train, test, trial_dir, rows)
                else:
                    _trial_shapley(cfg, trial, trial_dir, rows)
    except (HfflError, ValueError, ArithmeticError) as exc:
        record.failed = f"{type(exc).__name__}: {exc}"
        (run_dir / "FAILED").write_text(record.failed + "\n")
        raise
    finally:
        record.summary = summary_rows(rows)
        (run_dir / "raw.csv").write_text(_raw_csv(rows, key_name))
        (run_dir / "summary.csv").write_text(summary_csv(record.summary, key_name))
        record.artifacts = _checksums(run_dir)
        (run_dir / "record.json").write_text(record.to_json())
    return record
