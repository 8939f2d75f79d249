"""Datasets, IDX loading and seeded partitioning of training data among agents."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigError, FormatError
from .levels import LevelConfig

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    n_classes: int | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or len(y) != len(x):
            raise ConfigError(f"{len(x)} feature rows but labels have shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            if len(y) and not np.all(np.equal(np.mod(y, 1), 0)):
                raise ConfigError("labels must be integer class ids")
        y = y.astype(np.int64)
        if not np.all(np.isfinite(x)):
            raise ConfigError("features contain NaN or Inf")
        k = self.n_classes
        if k is None:
            k = max(2, int(y.max()) + 1) if len(y) else 2
        if k < 2:
            raise ConfigError(f"need at least two classes, got {k}")
        if len(y) and (y.min() < 0 or y.max() >= k):
            raise ConfigError(f"labels must lie in [0, {k})")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "n_classes", int(k))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], name or self.name, self.n_classes)

    def to_csv(self, path) -> None:
        """Write one example per row, label in the last column."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(self.dim)] + ["label"])
            for row, label in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_csv(path, name: str | None = None, n_classes: int | None = None) -> Dataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][-1] != "label":
        raise FormatError(f"{path}: expected a header row ending in 'label'")
    body = rows[1:]
    x = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64).reshape(len(body), len(rows[0]) - 1)
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    return Dataset(x, y, name or Path(path).stem, n_classes)


def generate_blobs(classes: int, per_class: int, centers, spread: float, seed: int,
                   name: str = "blobs") -> Dataset:
    """Isotropic Gaussian clouds, one per class, listed class by class.

    ``spread`` is the per-coordinate standard deviation; ``spread=0`` places
    every example exactly on its center.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if classes < 2:
        raise ConfigError(f"classes must be >= 2, got {classes}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if centers.ndim != 2 or len(centers) != classes:
        raise ConfigError(f"need one center per class: {classes} classes, centers shape {centers.shape}")
    if spread < 0:
        raise ConfigError(f"spread must be nonnegative, got {spread}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((classes, per_class, centers.shape[1]))
    x = (centers[:, None, :] + spread * noise).reshape(classes * per_class, -1)
    y = np.repeat(np.arange(classes), per_class)
    return Dataset(x, y, name, classes)


def random_centers(classes: int, dim: int, scale: float, seed: int) -> np.ndarray:
    """Class centers drawn uniformly from the cube [-scale, scale]^dim."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(classes, dim))


def generate_cluster_blobs(classes: int, per_class: int, dim: int, clusters_per_class: int = 1,
                           center_scale: float = 3.0, spread: float = 1.0, seed: int = 0,
                           center_seed: int = 0, name: str = "blobs") -> Dataset:
    """Blobs where each class is a union of ``clusters_per_class`` clouds.

    Centers depend only on ``center_seed``, so train and test sets drawn with
    different ``seed`` values share one distribution.
    """
    if clusters_per_class < 1 or per_class % clusters_per_class:
        raise ConfigError(
            f"per_class={per_class} must be a positive multiple of clusters_per_class={clusters_per_class}"
        )
    centers = random_centers(classes * clusters_per_class, dim, center_scale, center_seed)
    raw = generate_blobs(classes * clusters_per_class, per_class // clusters_per_class, centers, spread, seed)
    return Dataset(raw.features, raw.labels % classes, name, classes)


# -- IDX ---------------------------------------------------------------------

def _read_header(buf: bytes, path, expected_magic: int, ndim: int) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(buf) < need:
        raise FormatError(f"{path}: header: file has {len(buf)} bytes, header needs {need}")
    magic = struct.unpack(">I", buf[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: magic: expected 0x{expected_magic:08x}, found 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need])


def read_idx_images(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    count, rows, cols = _read_header(buf, path, IDX_IMAGES_MAGIC, 3)
    body = buf[16:]
    expected = count * rows * cols
    if len(body) != expected:
        raise FormatError(f"{path}: pixels: header promises {expected} bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (count,) = _read_header(buf, path, IDX_LABELS_MAGIC, 1)
    body = buf[8:]
    if len(body) != count:
        raise FormatError(f"{path}: labels: header promises {count} bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8)


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Load an IDX image/label pair; pixels are scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(f"count: {len(images)} images but {len(labels)} labels")
    if len(labels) and labels.max() > 9:
        raise FormatError(f"{labels_path}: labels: value {int(labels.max())} outside 0-9")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), name, 10)


# -- partitioning ------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Disjoint index lists per agent, keyed by (level, agent) from 1."""

    assignments: dict
    seed: int
    source: str = ""

    def __getitem__(self, key) -> np.ndarray:
        return self.assignments[key]

    def agents(self) -> list[tuple[int, int]]:
        return sorted(self.assignments)


@dataclass(frozen=True)
class LevelSubsample:
    """``subsets[(i, j)][l]`` is the level-``l`` training subset of agent (i, j)."""

    subsets: dict = field(default_factory=dict)
    seed: int = 0

    def get(self, agent: tuple[int, int], level: int) -> np.ndarray:
        return self.subsets[agent][level]


def partition(data: Dataset, levels: LevelConfig, seed: int) -> Partition:
    """Assign ``m_l`` indices to every level-``l`` agent, without replacement."""
    required = levels.total_data
    if required > len(data):
        raise CapacityError(
            f"partition needs {required} examples but {data.name} has {len(data)}",
            required=required, available=len(data),
        )
    order = np.random.default_rng(seed).permutation(len(data))
    assignments = {}
    pos = 0
    for agent in levels.all_agents():
        m = levels.quota(agent[0])
        assignments[agent] = _frozen(order[pos:pos + m])
        pos += m
    return Partition(assignments, int(seed), data.name)


def level_subsample(part: Partition, levels: LevelConfig, seed: int) -> LevelSubsample:
    """Draw the nested per-level subsets S^l_ij once for the whole run.

    Each agent shuffles its own assignment once; its level-``l`` subset is the
    first ``m_l`` entries of that shuffle, which makes the subsets nested.
    """
    subsets = {}
    for agent in sorted(part.assignments):
        own_level, j = agent
        own = part.assignments[agent]
        if len(own) != levels.quota(own_level):
            raise ConfigError(
                f"agent {agent} holds {len(own)} examples, level {own_level} quota is {levels.quota(own_level)}"
            )
        rng = np.random.default_rng([int(seed), own_level, j])
        shuffled = own[rng.permutation(len(own))]
        per_level = {lvl: _frozen(shuffled[: levels.quota(lvl)]) for lvl in range(1, own_level)}
        per_level[own_level] = own
        subsets[agent] = per_level
    return LevelSubsample(subsets, int(seed))


def agent_blobs(n_agents: int, per_agent: int, centers, spread: float, seed: int,
                name: str = "agent-blobs") -> tuple[Dataset, np.ndarray]:
    """Small labelled point set split among agents, ``per_agent`` points each.

    Returns the dataset and an ownership array mapping each row to an agent
    id in ``1..n_agents``.
    """
    centers = np.asarray(centers, dtype=np.float64)
    classes = len(centers)
    total = n_agents * per_agent
    per_class = -(-total // classes)
    pool = generate_blobs(classes, per_class, centers, spread, seed, name)
    rng = np.random.default_rng([int(seed), 1])
    rows = rng.permutation(len(pool))[:total]
    ownership = np.repeat(np.arange(1, n_agents + 1), per_agent)
    return pool.subset(rows, name), ownership
