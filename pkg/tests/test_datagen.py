import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hffl import datagen, models
from hffl.datagen import Dataset
from hffl.errors import CapacityError, ConfigError, FormatError
from hffl.levels import LevelConfig

THREE_LEVELS = LevelConfig((20, 10, 4), (200, 500, 2000))


def write_idx(path, magic, dims, payload: bytes):
    # independent byte writer: big-endian magic, dims, raw bytes
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


class TestDataset:
    def test_rejects_mismatched_rows(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((3, 2)), np.zeros(2, dtype=int))

    def test_rejects_nan(self):
        with pytest.raises(ConfigError):
            Dataset(np.array([[np.nan, 0.0]]), np.array([0]))

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 1)), np.array([0, 3]), n_classes=3)

    def test_arrays_are_read_only(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 1]))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_csv_round_trip(self, tmp_path):
        ds = datagen.generate_blobs(2, 5, [[0, 0], [3, 1]], 0.7, seed=3)
        path = tmp_path / "blobs.csv"
        ds.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x0,x1,label"
        back = datagen.read_csv(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestGenerateBlobs:
    def test_zero_spread_puts_points_on_centers(self):
        ds = datagen.generate_blobs(2, 1, [(0, 0), (10, 10)], 0.0, seed=0)
        np.testing.assert_array_equal(ds.features, [[0, 0], [10, 10]])
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_same_seed_identical(self):
        a = datagen.generate_blobs(2, 10, [(0, 0), (1, 1)], 1.0, seed=7)
        b = datagen.generate_blobs(2, 10, [(0, 0), (1, 1)], 1.0, seed=7)
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_center_count_must_match(self):
        with pytest.raises(ConfigError):
            datagen.generate_blobs(3, 10, [(0, 0), (1, 1)], 1.0, seed=0)

    def test_size(self):
        ds = datagen.generate_blobs(4, 25, np.zeros((4, 3)), 1.0, seed=0)
        assert ds.features.shape == (100, 3)
        assert np.bincount(ds.labels).tolist() == [25] * 4

    def test_mlp_separates_well_spaced_blobs(self):
        angles = np.linspace(0, 2 * np.pi, 10, endpoint=False)
        centers = 20 * np.c_[np.cos(angles), np.sin(angles)]
        ds = datagen.generate_blobs(10, 600, centers, 1.0, seed=0)
        assert len(ds) == 6000
        arch = models.ArchSpec.mlp(2, 32, 10)
        p, _ = models.train(models.init_params(arch, 0), ds.features, ds.labels, 5,
                            models.OptimizerConfig(lr=0.01), np.random.default_rng(0))
        assert models.score(p, ds) > 0.9

    def test_cluster_blobs_share_centers_across_seeds(self):
        a = datagen.generate_cluster_blobs(3, 4, 2, clusters_per_class=2, spread=0.0, seed=1, center_seed=5)
        b = datagen.generate_cluster_blobs(3, 4, 2, clusters_per_class=2, spread=0.0, seed=2, center_seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        assert set(a.labels.tolist()) == {0, 1, 2}


class TestIdx:
    def test_hand_built_pair_round_trips(self, tmp_path):
        pixels = bytes([0, 255, 128, 7, 1, 2, 3, 4])  # two 2x2 images
        write_idx(tmp_path / "img", 0x803, (2, 2, 2), pixels)
        write_idx(tmp_path / "lab", 0x801, (2,), bytes([3, 9]))
        ds = datagen.load_idx(tmp_path / "img", tmp_path / "lab")
        assert ds.features.shape == (2, 4)
        back = np.rint(ds.features * 255).astype(np.uint8).tobytes()
        assert back == pixels
        assert ds.labels.tolist() == [3, 9]
        assert ds.features.min() >= 0 and ds.features.max() <= 1

    def test_images_with_label_magic_rejected(self, tmp_path):
        write_idx(tmp_path / "img", 0x801, (1, 1, 1), b"\x00")
        write_idx(tmp_path / "lab", 0x801, (1,), b"\x00")
        with pytest.raises(FormatError, match="magic"):
            datagen.load_idx(tmp_path / "img", tmp_path / "lab")

    def test_truncated_pixels(self, tmp_path):
        write_idx(tmp_path / "img", 0x803, (2, 2, 2), b"\x00" * 7)
        write_idx(tmp_path / "lab", 0x801, (2,), b"\x00\x01")
        with pytest.raises(FormatError, match="pixels"):
            datagen.load_idx(tmp_path / "img", tmp_path / "lab")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "img").write_bytes(b"\x00\x00\x08")
        with pytest.raises(FormatError, match="header"):
            datagen.read_idx_images(tmp_path / "img")

    def test_count_mismatch(self, tmp_path):
        write_idx(tmp_path / "img", 0x803, (2, 1, 1), b"\x00\x01")
        write_idx(tmp_path / "lab", 0x801, (3,), b"\x00\x01\x02")
        with pytest.raises(FormatError, match="count"):
            datagen.load_idx(tmp_path / "img", tmp_path / "lab")

    def test_official_test_set_if_available(self, mnist_dir):
        ds = datagen.load_idx(mnist_dir / "t10k-images-idx3-ubyte", mnist_dir / "t10k-labels-idx1-ubyte")
        assert ds.features.shape == (10_000, 784)
        assert set(np.unique(ds.labels).tolist()) == set(range(10))


def _big():
    return Dataset(np.arange(20_000, dtype=float)[:, None], np.zeros(20_000, dtype=int), "big", 2)


class TestPartition:
    def test_three_level_layout_is_disjoint(self):
        part = datagen.partition(_big(), THREE_LEVELS, seed=0)
        all_idx = np.concatenate([part[a] for a in part.agents()])
        assert len(all_idx) == 20 * 200 + 10 * 500 + 4 * 2000 == 17_000
        assert len(np.unique(all_idx)) == 17_000
        for (lvl, _), idx in part.assignments.items():
            assert len(idx) == THREE_LEVELS.quota(lvl)

    def test_identity_partition(self):
        ds = Dataset(np.zeros((7, 1)), np.zeros(7, dtype=int), n_classes=2)
        part = datagen.partition(ds, LevelConfig((1,), (7,)), seed=3)
        assert sorted(part[(1, 1)].tolist()) == list(range(7))

    def test_determinism(self):
        a = datagen.partition(_big(), THREE_LEVELS, 11)
        b = datagen.partition(_big(), THREE_LEVELS, 11)
        c = datagen.partition(_big(), THREE_LEVELS, 12)
        assert all(np.array_equal(a[k], b[k]) for k in a.agents())
        assert not all(np.array_equal(a[k], c[k]) for k in a.agents())

    def test_capacity_error_reports_counts(self):
        ds = Dataset(np.zeros((100, 1)), np.zeros(100, dtype=int), n_classes=2)
        with pytest.raises(CapacityError) as err:
            datagen.partition(ds, THREE_LEVELS, 0)
        assert err.value.required == 17_000 and err.value.available == 100
        assert "17000" in str(err.value)

    @settings(max_examples=30, deadline=None)
    @given(agents=st.lists(st.integers(1, 4), min_size=1, max_size=3),
           base=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
    def test_disjoint_and_valid(self, agents, base, seed):
        quotas = tuple(base * (k + 1) for k in range(len(agents)))
        levels = LevelConfig(tuple(agents), quotas)
        n = levels.total_data + 3
        ds = Dataset(np.zeros((n, 1)), np.zeros(n, dtype=int), n_classes=2)
        part = datagen.partition(ds, levels, seed)
        idx = np.concatenate([part[a] for a in part.agents()])
        assert len(idx) == len(set(idx.tolist())) == levels.total_data
        assert idx.min() >= 0 and idx.max() < n


class TestLevelSubsample:
    def setup_method(self):
        self.part = datagen.partition(_big(), THREE_LEVELS, 0)
        self.subs = datagen.level_subsample(self.part, THREE_LEVELS, 0)

    def test_top_agent_level_one_subset(self):
        s1 = self.subs.get((3, 1), 1)
        assert len(s1) == 200
        assert set(s1.tolist()) <= set(self.part[(3, 1)].tolist())

    def test_own_level_is_full_assignment(self):
        for agent in self.part.agents():
            np.testing.assert_array_equal(self.subs.get(agent, agent[0]), self.part[agent])

    def test_nested(self):
        for j in range(1, 5):
            s1 = set(self.subs.get((3, j), 1).tolist())
            s2 = set(self.subs.get((3, j), 2).tolist())
            s3 = set(self.subs.get((3, j), 3).tolist())
            assert s1 <= s2 <= s3
            assert len(s2) == 500

    def test_deterministic(self):
        again = datagen.level_subsample(self.part, THREE_LEVELS, 0)
        for agent in self.part.agents():
            for lvl in range(1, agent[0] + 1):
                np.testing.assert_array_equal(self.subs.get(agent, lvl), again.get(agent, lvl))


class TestAgentBlobs:
    def test_ownership(self):
        ds, owners = datagen.agent_blobs(10, 2, [(0, 0), (2, 2)], 1.0, seed=1)
        assert len(ds) == 20
        assert np.bincount(owners).tolist() == [0] + [2] * 10
