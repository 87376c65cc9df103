"""Synthetic blob datasets, label corruption, meta-set splitting and the
jitter/dropout view augmentations.

Everything here is a pure function of its arguments and seed: repeated calls
return byte-identical results. Corruption only rewrites y_obs; y_true, ids
and features are never touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .util import ConfigError, dumps_deterministic, fmt_float

CENTER_RADIUS = 2.0


@dataclass(frozen=True)
class NoiseSpec:
    mode: str  # "none" | "symmetric" | "asymmetric"
    rate: float = 0.0
    pair_map: dict | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"mode": self.mode, "rate": self.rate, "seed": self.seed}
        if self.pair_map is not None:
            d["pair_map"] = {str(k): int(v) for k, v in sorted(self.pair_map.items())}
        return d


@dataclass(frozen=True)
class LabeledSample:
    id: int
    x: np.ndarray
    y_true: int
    y_obs: int


@dataclass
class Dataset:
    x: np.ndarray        # (N, D)
    y_true: np.ndarray   # (N,)
    y_obs: np.ndarray    # (N,)
    ids: np.ndarray      # (N,)
    num_classes: int
    noise_spec: NoiseSpec | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(int(self.ids[i]), self.x[i], int(self.y_true[i]), int(self.y_obs[i]))

    def validate(self, contiguous_ids: bool = False) -> None:
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite features")
        for arr in (self.y_true, self.y_obs):
            if arr.min(initial=0) < 0 or arr.max(initial=0) >= self.num_classes:
                raise ValueError("class index out of range")
        if len(np.unique(self.ids)) != self.n:
            raise ValueError("duplicate sample ids")
        if contiguous_ids and not np.array_equal(np.sort(self.ids), np.arange(self.n)):
            raise ValueError("ids not contiguous from 0")


@dataclass
class MetaSet:
    """Clean held-out samples driving the outer meta-objective."""

    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    @property
    def m(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ViewPair:
    weak: np.ndarray
    strong: np.ndarray
    source_id: int


def class_centers(num_classes: int, dim: int, radius: float = CENTER_RADIUS) -> np.ndarray:
    """Fixed per-class centers, evenly spaced on a circle in the first two dims."""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def make_blobs(num_classes: int, per_class: int, dim: int, spread: float,
               seed: int, radius: float = CENTER_RADIUS) -> Dataset:
    """Isotropic Gaussian blobs, one fixed center per class, clean labels."""
    if num_classes < 2 or per_class < 1 or dim < 2:
        raise ConfigError("need num_classes >= 2, per_class >= 1, dim >= 2")
    if spread < 0:
        raise ConfigError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = class_centers(num_classes, dim, radius)
    n = num_classes * per_class
    y = np.repeat(np.arange(num_classes), per_class)
    x = centers[y] + spread * rng.standard_normal((n, dim))
    return Dataset(x=x, y_true=y, y_obs=y.copy(), ids=np.arange(n),
                   num_classes=num_classes, noise_spec=NoiseSpec("none", seed=seed))


def inject_symmetric_noise(ds: Dataset, rate: float, seed: int) -> Dataset:
    """Flip each label with probability rate to a uniform draw over the
    other C-1 classes, so the observed-label change rate is exactly rate."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("noise rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    flip = rng.random(ds.n) < rate
    draw = rng.integers(0, ds.num_classes - 1, size=ds.n)
    draw = draw + (draw >= ds.y_true)  # skip the true class
    y_obs = np.where(flip, draw, ds.y_true)
    spec = NoiseSpec("symmetric", rate=rate, seed=seed)
    return Dataset(ds.x, ds.y_true, y_obs.astype(np.int64), ds.ids,
                   ds.num_classes, noise_spec=spec)


def inject_asymmetric_noise(ds: Dataset, rate: float, pair_map: dict,
                            seed: int) -> Dataset:
    """Flip each label with probability rate to pair_map[y_true].

    pair_map may be partial; classes without an entry are never corrupted.
    Self-mappings are rejected.
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("noise rate must lie in [0, 1]")
    target = np.arange(ds.num_classes)
    for src, dst in pair_map.items():
        src, dst = int(src), int(dst)
        if not (0 <= src < ds.num_classes and 0 <= dst < ds.num_classes):
            raise ConfigError("pair_map class out of range: %d -> %d" % (src, dst))
        if src == dst:
            raise ConfigError("pair_map must not map a class to itself: %d" % src)
        target[src] = dst
    rng = np.random.default_rng(seed)
    flip = rng.random(ds.n) < rate
    mapped = target[ds.y_true]
    y_obs = np.where(flip, mapped, ds.y_true)
    spec = NoiseSpec("asymmetric", rate=rate,
                     pair_map={int(k): int(v) for k, v in pair_map.items()}, seed=seed)
    return Dataset(ds.x, ds.y_true, y_obs.astype(np.int64), ds.ids,
                   ds.num_classes, noise_spec=spec)


def split_meta(ds: Dataset, m: int, seed: int) -> tuple[Dataset, MetaSet]:
    """Carve out m clean samples (true labels), round-robin over classes.

    The split is disjoint by id and as class-balanced as m allows; the
    training remainder keeps its original ids and observed labels.
    """
    if m < 0 or m > ds.n:
        raise ConfigError("meta size must lie in [0, N]")
    rng = np.random.default_rng(seed)
    pools = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.y_true == c)
        pools.append(list(rng.permutation(idx)))
    chosen: list[int] = []
    c = 0
    while len(chosen) < m:
        if pools[c % ds.num_classes]:
            chosen.append(int(pools[c % ds.num_classes].pop()))
        c += 1
    chosen_arr = np.array(sorted(chosen), dtype=np.int64)
    mask = np.zeros(ds.n, dtype=bool)
    mask[chosen_arr] = True
    meta = MetaSet(x=ds.x[mask].copy(), y=ds.y_true[mask].copy(), ids=ds.ids[mask].copy())
    train = Dataset(ds.x[~mask].copy(), ds.y_true[~mask].copy(), ds.y_obs[~mask].copy(),
                    ds.ids[~mask].copy(), ds.num_classes, noise_spec=ds.noise_spec)
    return train, meta


@dataclass(frozen=True)
class AugmentConfig:
    sigma_weak: float
    sigma_strong: float
    p_drop: float

    def __post_init__(self):
        if self.sigma_weak < 0 or self.sigma_strong < 0 or not 0 <= self.p_drop <= 1:
            raise ConfigError("invalid augmentation parameters")


def default_augment_config(spread: float) -> AugmentConfig:
    return AugmentConfig(sigma_weak=0.05 * spread, sigma_strong=0.15 * spread, p_drop=0.1)


def augment(x: np.ndarray, strength: str, seed: int, cfg: AugmentConfig) -> np.ndarray:
    """One augmented view of a single input vector.

    weak: Gaussian jitter sigma_weak. strong: Gaussian jitter sigma_strong,
    then each coordinate zeroed independently with probability p_drop.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if strength == "weak":
        return x + cfg.sigma_weak * rng.standard_normal(x.shape)
    if strength == "strong":
        out = x + cfg.sigma_strong * rng.standard_normal(x.shape)
        return out * (rng.random(x.shape) >= cfg.p_drop)
    raise ValueError("strength must be 'weak' or 'strong'")


def make_views(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator):
    """Weak and strong views for a whole (N, D) block, drawn in a fixed order."""
    x = np.asarray(x, dtype=np.float64)
    weak = x + cfg.sigma_weak * rng.standard_normal(x.shape)
    strong = x + cfg.sigma_strong * rng.standard_normal(x.shape)
    strong = strong * (rng.random(x.shape) >= cfg.p_drop)
    return weak, strong


def view_pairs(x: np.ndarray, ids: np.ndarray, cfg: AugmentConfig,
               rng: np.random.Generator) -> list[ViewPair]:
    weak, strong = make_views(x, cfg, rng)
    return [ViewPair(weak[i], strong[i], int(ids[i])) for i in range(len(ids))]


def displaced_blobs(num_classes: int, per_class: int, dim: int, spread: float,
                    seed: int, radius_factor: float = 2.5,
                    angle_frac: float = 0.5) -> Dataset:
    """Blobs from centers pushed outside the in-distribution hull.

    Centers sit at radius_factor times the training radius, rotated by
    angle_frac of the inter-class angle so they fall between the training
    cones rather than straight behind a training cluster.
    """
    if num_classes < 2 or per_class < 1 or dim < 2:
        raise ConfigError("need num_classes >= 2, per_class >= 1, dim >= 2")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * (np.arange(num_classes) + angle_frac) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = radius_factor * CENTER_RADIUS * np.cos(angles)
    centers[:, 1] = radius_factor * CENTER_RADIUS * np.sin(angles)
    n = num_classes * per_class
    y = np.repeat(np.arange(num_classes), per_class)
    x = centers[y] + spread * rng.standard_normal((n, dim))
    return Dataset(x=x, y_true=y, y_obs=y.copy(), ids=np.arange(n),
                   num_classes=num_classes, noise_spec=NoiseSpec("none", seed=seed))


def dataset_csv_text(ds: Dataset) -> str:
    """Flat CSV rendering: header `id,y_true,y_obs,x0..x{D-1}`, one row each."""
    header = "id,y_true,y_obs," + ",".join("x%d" % d for d in range(ds.dim))
    lines = [header]
    for i in range(ds.n):
        cells = [str(int(ds.ids[i])), str(int(ds.y_true[i])), str(int(ds.y_obs[i]))]
        cells += [fmt_float(v) for v in ds.x[i]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, csv_path, json_path, seed: int | None = None) -> None:
    """Write the flat CSV plus a sidecar JSON descriptor."""
    with open(csv_path, "w") as fh:
        fh.write(dataset_csv_text(ds))
    sidecar = {
        "num_classes": ds.num_classes,
        "dim": ds.dim,
        "noise_spec": ds.noise_spec.to_dict() if ds.noise_spec else None,
        "seed": seed,
    }
    with open(json_path, "w") as fh:
        fh.write(dumps_deterministic(sidecar))


def load_dataset(csv_path, json_path) -> Dataset:
    with open(json_path) as fh:
        sidecar = json.load(fh)
    with open(csv_path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    dim = int(sidecar["dim"])
    expected = "id,y_true,y_obs," + ",".join("x%d" % d for d in range(dim))
    if rows[0] != expected:
        raise ConfigError("dataset CSV header mismatch")
    n = len(rows) - 1
    ids = np.empty(n, dtype=np.int64)
    y_true = np.empty(n, dtype=np.int64)
    y_obs = np.empty(n, dtype=np.int64)
    x = np.empty((n, dim))
    for i, row in enumerate(rows[1:]):
        cells = row.split(",")
        ids[i], y_true[i], y_obs[i] = int(cells[0]), int(cells[1]), int(cells[2])
        x[i] = [float(v) for v in cells[3:]]
    spec = None
    if sidecar.get("noise_spec"):
        raw = sidecar["noise_spec"]
        pm = raw.get("pair_map")
        spec = NoiseSpec(raw["mode"], rate=float(raw.get("rate", 0.0)),
                         pair_map={int(k): int(v) for k, v in pm.items()} if pm else None,
                         seed=raw.get("seed"))
    return Dataset(x=x, y_true=y_true, y_obs=y_obs, ids=ids,
                   num_classes=int(sidecar["num_classes"]), noise_spec=spec)
