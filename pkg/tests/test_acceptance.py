"""End-to-end acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from hffl import bounds, datagen, harness, models, valuation
from hffl.bounds import BoundQuery
from hffl.datagen import Dataset
from hffl.federation import FederationConfig, ParticipantSet, aggregate, run_federation
from hffl.models import ArchSpec, OptimizerConfig, ParamVector
from hffl.valuation import CoalitionGame, LearnerSpec

criterion = pytest.mark.criterion

LAYOUT = {"agents": [20, 10, 4], "quotas": [200, 500, 2000]}
SLACK = 0.005


def medians(record, arch, metric="score"):
    return {r["key"]: r["median"] for r in record.summary if r["arch"] == arch and r["metric"] == metric}


@pytest.fixture(scope="module")
def hffl_run(tmp_path_factory):
    cfg = harness.ExperimentConfig.from_dict({"kind": "hffl", "name": "acceptance-hffl", "trials": 5,
                                              "rounds": 10, "levels": LAYOUT})
    start = time.perf_counter()
    rec = harness.run_experiment(cfg, tmp_path_factory.mktemp("hffl") / "run")
    return rec, time.perf_counter() - start


@criterion(1, "fairness monotonicity: median f1 <= f2 <= f3 (0.5pp slack), one strict increase, < 5 min")
def test_fairness_monotonicity(hffl_run):
    rec, elapsed = hffl_run
    med = medians(rec, "mlp-64")
    f1, f2, f3 = med[1], med[2], med[3]
    print(f"\nlevel medians {f1:.4f} {f2:.4f} {f3:.4f}, {elapsed:.1f}s")
    assert f1 <= f2 + SLACK and f2 <= f3 + SLACK
    assert f1 < f2 or f2 < f3
    assert elapsed < 300


THIRTY_AGENTS = {
    "kind": "federation-baseline", "name": "acceptance-federation", "trials": 5, "rounds": 9,
    "data": {"dim": 20, "clusters_per_class": 1, "center_scale": 2.0},
    "federation": {"agents": 30, "per_agent": 20, "local_epochs": 3, "baseline_epochs": 100},
}


@criterion(2, "federation benefit: median agent accuracy +10pp over local baseline, agent std shrinks >= 50%")
def test_federation_benefit(tmp_path):
    rec = harness.run_experiment(harness.ExperimentConfig.from_dict(THIRTY_AGENTS), tmp_path / "run")
    acc = medians(rec, "mlp-64", "median_agent_accuracy")
    std = medians(rec, "mlp-64", "agent_std")
    print(f"\nmedian agent accuracy {acc[0]:.4f} -> {acc[9]:.4f}, std {std[0]:.4f} -> {std[9]:.4f}")
    assert acc[9] - acc[0] >= 0.10
    assert std[9] <= 0.5 * std[0]


@criterion(3, "HFFL+ dominance: winner score >= every single-architecture score at every level")
def test_hffl_plus_dominance(tmp_path):
    cfg = harness.ExperimentConfig.from_dict({
        "kind": "hffl-plus", "name": "acceptance-plus", "trials": 5, "rounds": 10, "levels": LAYOUT,
        "family": [{"kind": "logistic"}, {"kind": "mlp", "hidden": [64]}, {"kind": "mlp", "hidden": [32, 32]}],
    })
    rec = harness.run_experiment(cfg, tmp_path / "run")
    plus = {(r["trial"], r["key"]): r["value"] for r in rec.rows if r["arch"] == "hffl+"}
    singles = [r for r in rec.rows if r["metric"] == "score" and r["arch"] != "hffl+"]
    assert len(plus) == 15 and len(singles) == 45
    for r in singles:
        assert plus[(r["trial"], r["key"])] >= r["value"]
    for (trial, lvl), v in plus.items():
        assert v == max(r["value"] for r in singles if r["trial"] == trial and r["key"] == lvl)


def permutation_average(n, table):
    phi = np.zeros(n)
    orders = list(itertools.permutations(range(n)))
    for order in orders:
        mask = 0
        for k in order:
            phi[k] += table[mask | 1 << k] - table[mask]
            mask |= 1 << k
    return phi / len(orders)


def swap_players(mask, a, b):
    ba, bb = mask >> a & 1, mask >> b & 1
    mask &= ~((1 << a) | (1 << b))
    return mask | bb << a | ba << b


@criterion(4, "Shapley axioms to 1e-9 on random games n <= 8; subset formula vs permutation average to 1e-12")
def test_shapley_axioms():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        for _ in range(5):
            t = rng.uniform(0, 1, 2 ** n)
            phi = valuation.shapley_exact(CoalitionGame.from_table(list(range(n)), t)).values
            assert abs(phi.sum() - (t[-1] - t[0])) <= 1e-9
            if n >= 2:
                sym = (t + np.array([t[swap_players(m, 0, 1)] for m in range(2 ** n)])) / 2
                ps = valuation.shapley_exact(CoalitionGame.from_table(list(range(n)), sym)).values
                assert abs(ps[0] - ps[1]) <= 1e-9
                half = rng.uniform(0, 1, 2 ** (n - 1))
                dummy = np.concatenate([half, half])  # top player adds nothing
                pd = valuation.shapley_exact(CoalitionGame.from_table(list(range(n)), dummy)).values
                assert abs(pd[-1]) <= 1e-9
            if n <= 7:
                np.testing.assert_allclose(phi, permutation_average(n, t), rtol=0, atol=1e-12)


@criterion(5, "Shapley phenomena on the fixture: 1-NN and stump rankings invert a pair; some phi < 0")
def test_shapley_phenomena():
    train, owners, test, _ = harness.builtin_fixture()
    phi = {k: valuation.agent_contribution(train, owners, LearnerSpec(k), test).values for k in LearnerSpec.KINDS}
    nn, stump = phi["one_nearest_neighbor"], phi["decision_stump"]
    inversions = [(i, j) for i in range(10) for j in range(10) if nn[i] > nn[j] and stump[i] < stump[j]]
    print(f"\n{len(inversions)} inverted pairs; min phi per learner "
          + ", ".join(f"{k}={v.min():.4f}" for k, v in phi.items()))
    assert inversions
    assert any(v.min() < 0 for v in phi.values())


@criterion(6, "LOO duplicate-zero: two agents with identical data get LOO 0 under 1-NN (1e-9)")
def test_loo_duplicate_zero():
    base, owners = datagen.agent_blobs(6, 3, [(0, 0), (2, 2)], 1.0, seed=0)
    dup = owners == 1
    x = np.vstack([base.features, base.features[dup]])
    y = np.concatenate([base.labels, base.labels[dup]])
    own = np.concatenate([owners, np.full(dup.sum(), 7)])
    test = datagen.generate_blobs(2, 100, [(0, 0), (2, 2)], 1.0, seed=1)
    loo = valuation.loo_value(Dataset(x, y, n_classes=2), own, LearnerSpec("one_nearest_neighbor"), test)
    assert abs(loo[1]) <= 1e-9 and abs(loo[7]) <= 1e-9


def fd_worst(arch, seed, coords=50, h=1e-5):
    rng = np.random.default_rng(seed)
    p = models.init_params(arch, seed)
    x = rng.normal(size=(32, arch.input_dim))
    y = rng.integers(0, arch.n_classes, 32)
    _, g = models.loss_and_grad(p, x, y)
    worst = 0.0
    for k in rng.choice(arch.n_params, size=min(coords, arch.n_params), replace=False):
        e = np.zeros(arch.n_params)
        e[k] = h
        lp = models.loss_and_grad(ParamVector(p.values + e, arch), x, y)[0]
        lm = models.loss_and_grad(ParamVector(p.values - e, arch), x, y)[0]
        fd = (lp - lm) / (2 * h)
        worst = max(worst, abs(fd - g[k]) / max(abs(fd) + abs(g[k]), 1e-8))
    return worst


@criterion(7, "numerics: FD gradients 1e-5 relative; single-agent federation = centralized SGD 1e-12; "
              "aggregation bit-exact under permutation")
def test_numerical_soundness():
    for arch in (ArchSpec.logistic(5, 2), ArchSpec.logistic(5, 10), ArchSpec.mlp(5, 64, 10),
                 ArchSpec.mlp(5, (64, 64), 10), ArchSpec.mlp(784, 128, 10)):
        assert fd_worst(arch, 1) < 1e-5, arch.name

    data = datagen.generate_cluster_blobs(10, 20, 5, 1, seed=0)
    arch = ArchSpec.mlp(5, 16, 10)
    w0 = models.init_params(arch, 0)
    cfg = FederationConfig(OptimizerConfig(lr=0.1), literal=True)
    fed, _ = run_federation(w0, ParticipantSet(data, (((1, 1), np.arange(len(data))),)), 5, data, cfg)
    w = w0.values
    for _ in range(5):
        w = w - 0.1 * models.loss_and_grad(ParamVector(w, arch), data.features, data.labels)[1]
    np.testing.assert_allclose(fed.values, w, rtol=0, atol=1e-12)

    rng = np.random.default_rng(0)
    ups = {(1, j): ParamVector(rng.normal(size=arch.n_params), arch) for j in range(1, 31)}
    ref = aggregate(ups).values.tobytes()
    keys = list(ups)
    for _ in range(20):
        perm = rng.permutation(len(keys))
        assert aggregate({keys[i]: ups[keys[i]] for i in perm}).values.tobytes() == ref
        assert aggregate([ups[keys[i]] for i in perm]).values.tobytes() == aggregate(list(ups.values())).values.tobytes()


@criterion(8, "bounds: delta_for reference 1e-12; epsilon round trip 1e-12; Monte-Carlo violation rate <= delta")
def test_bounds():
    assert abs(bounds.delta_for(BoundQuery(200, 0.1, 10)) - 20 * math.exp(-4)) <= 1e-12
    for m, delta, f in [(200, 0.05, 10), (50, 0.5, 1), (2000, 1e-6, 3), (500, 0.9, 100)]:
        eps = bounds.epsilon_for(m, delta, f)
        assert abs(bounds.delta_for(BoundQuery(m, eps, f)) - delta) <= 1e-12

    cfg = harness.ExperimentConfig.from_dict({"family": [{"kind": "logistic"}, {"kind": "mlp", "hidden": [64]},
                                                         {"kind": "mlp", "hidden": [64, 64]}]})
    train, test = harness.load_data(cfg)
    family = cfg.family(train.dim, train.n_classes)
    res = bounds.empirical_gap(train, test, family, trials=100, seed=0, m=200, epsilon=0.1,
                               fit_once=True, epochs=5, opt=cfg.optimizer())
    print(f"\nviolation rate {res.violation_rate:.3f}, delta {res.delta:.4f}, max gap {res.gaps.max():.4f}")
    assert res.delta < 1
    assert res.violation_rate <= res.delta


REPRO_TOML = """
kind = "hffl-plus"
name = "repro"
trials = 2
rounds = 3
[data]
train_per_class = 300
test_per_class = 60
[levels]
agents = [4, 2]
quotas = [20, 60]
[[family]]
kind = "logistic"
[[family]]
kind = "mlp"
hidden = [16]
"""


@criterion(9, "reproducibility: repeated `hffl run` gives byte-identical summary CSVs")
def test_reproducibility(tmp_path):
    config = tmp_path / "repro.toml"
    config.write_text(REPRO_TOML)
    outputs = []
    for name in ("a", "b"):
        run_dir = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "hffl.cli", "run", str(config), "--run-dir", str(run_dir)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((run_dir / "summary.csv").read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b"\n") > 1
