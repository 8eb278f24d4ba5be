"""Dataset types, file IO, preprocessing, synthetic generation, and fold splits.

A dataset is a collection of labeled bags. Each bag holds one or more
feature-vector instances and a single binary label; a positive label means
the bag contains at least one instance of the target class, a negative
label means it contains none.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError

DENSE_CSV = "dense-csv"
SPARSE_BAG = "sparse-bag"
FORMATS = (DENSE_CSV, SPARSE_BAG)

_LABEL_TOKENS = {"+1": 1, "1": 1, "-1": -1}


@dataclass(frozen=True, eq=False)
class Instance:
    """One feature vector; ``instance_id`` is unique within its bag."""

    instance_id: int
    features: np.ndarray

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise DataError("instance features must be a nonempty 1-D vector")
        if not np.all(np.isfinite(feats)):
            raise DataError(f"instance {self.instance_id}: non-finite feature value")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def dim(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True, eq=False)
class Bag:
    """A labeled group of instances; the label applies to the bag as a whole."""

    bag_id: int
    label: int
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.label not in (-1, 1):
            raise DataError(f"bag {self.bag_id}: label must be +1 or -1, got {self.label!r}")
        if not self.instances:
            raise DataError(f"bag {self.bag_id}: must contain at least one instance")
        ids = [inst.instance_id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise DataError(f"bag {self.bag_id}: duplicate instance ids")
        if len({inst.dim for inst in self.instances}) != 1:
            raise DataError(f"bag {self.bag_id}: mixed feature dimensions")

    def __len__(self) -> int:
        return len(self.instances)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        """Instances stacked as rows, in bag order."""
        mat = np.vstack([inst.features for inst in self.instances])
        mat.setflags(write=False)
        return mat

    @cached_property
    def instance_ids(self) -> np.ndarray:
        ids = np.array([inst.instance_id for inst in self.instances], dtype=np.int64)
        ids.setflags(write=False)
        return ids

    @cached_property
    def _by_id(self) -> dict[int, Instance]:
        return {inst.instance_id: inst for inst in self.instances}

    def instance_by_id(self, instance_id: int) -> Instance:
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise DataError(f"bag {self.bag_id}: no instance {instance_id}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered collection of bags sharing one feature dimension."""

    dim: int
    bags: tuple[Bag, ...]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "bags", tuple(self.bags))
        if self.dim < 1:
            raise DataError("dataset dimension must be positive")
        seen: set[int] = set()
        for bag in self.bags:
            if bag.bag_id in seen:
                raise DataError(f"duplicate bag id {bag.bag_id}")
            seen.add(bag.bag_id)
            if bag.instances[0].dim != self.dim:
                raise DataError(
                    f"bag {bag.bag_id}: dimension {bag.instances[0].dim} != dataset dim {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.bags)

    @cached_property
    def bag_by_id(self) -> dict[int, Bag]:
        return {bag.bag_id: bag for bag in self.bags}

    @cached_property
    def positive_bags(self) -> tuple[Bag, ...]:
        return tuple(b for b in self.bags if b.label > 0)

    @cached_property
    def negative_bags(self) -> tuple[Bag, ...]:
        return tuple(b for b in self.bags if b.label < 0)

    @property
    def n_instances(self) -> int:
        return sum(len(b) for b in self.bags)

    def all_features(self) -> np.ndarray:
        """All instances stacked as rows, in dataset order."""
        return np.vstack([b.feature_matrix for b in self.bags])


@dataclass(frozen=True)
class FoldSplit:
    """Assignment of every bag to one of ``k`` folds."""

    k: int
    assignments: Mapping[int, int]

    def fold_of(self, bag_id: int) -> int:
        return self.assignments[bag_id]

    def bag_ids_in(self, fold: int) -> tuple[int, ...]:
        return tuple(b for b, f in self.assignments.items() if f == fold)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Exact structural and bit-level feature equality."""
    if a.dim != b.dim or len(a.bags) != len(b.bags):
        return False
    for ba, bb in zip(a.bags, b.bags):
        if ba.bag_id != bb.bag_id or ba.label != bb.label or len(ba) != len(bb):
            return False
        if not np.array_equal(ba.instance_ids, bb.instance_ids):
            return False
        if not np.array_equal(ba.feature_matrix, bb.feature_matrix):
            return False
    return True


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

def load_dataset(path: str | Path, fmt: str = DENSE_CSV, name: str | None = None) -> Dataset:
    """Load a dataset file.

    dense-csv: one instance per line, ``bag_id,label,f1,...,fd``.
    sparse-bag: ``bag_id label idx:val ...`` with 1-based indices and a
    mandatory ``#dim d`` header; omitted entries are zero.

    Lines starting with ``#`` are comments in both formats.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if fmt == DENSE_CSV:
        rows = _parse_dense(lines)
    else:
        rows = _parse_sparse(lines)
    if not rows:
        raise DataError(f"{path}: no instances found")
    return _group_rows(rows, name if name is not None else path.stem)


def _parse_label(token: str, lineno: int) -> int:
    label = _LABEL_TOKENS.get(token.strip())
    if label is None:
        raise ParseError(lineno, f"unknown label value {token.strip()!r}")
    return label


def _parse_dense(lines: Sequence[str]) -> list[tuple[int, int, int, np.ndarray]]:
    rows = []
    dim: int | None = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) < 3:
            raise ParseError(lineno, "expected bag_id,label,f1[,f2,...]")
        try:
            bag_id = int(parts[0])
        except ValueError:
            raise ParseError(lineno, f"bad bag id {parts[0].strip()!r}") from None
        label = _parse_label(parts[1], lineno)
        try:
            feats = np.array([float(p) for p in parts[2:]], dtype=np.float64)
        except ValueError:
            raise ParseError(lineno, "bad feature value") from None
        if dim is None:
            dim = feats.size
        elif feats.size != dim:
            raise ParseError(lineno, f"dimension mismatch: expected {dim} features, got {feats.size}")
        rows.append((lineno, bag_id, label, feats))
    return rows


def _parse_sparse(lines: Sequence[str]) -> list[tuple[int, int, int, np.ndarray]]:
    header_lineno = None
    for i, raw in enumerate(lines):
        if raw.strip():
            header_lineno = i
            break
    if header_lineno is None:
        return []
    header = lines[header_lineno].strip()
    if not header.startswith("#dim"):
        raise ParseError(header_lineno + 1, "missing '#dim d' header")
    try:
        dim = int(header.split()[1])
    except (IndexError, ValueError):
        raise ParseError(header_lineno + 1, "malformed '#dim d' header") from None
    if dim < 1:
        raise ParseError(header_lineno + 1, "dimension must be positive")

    rows = []
    for lineno, raw in enumerate(lines[header_lineno + 1:], start=header_lineno + 2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) < 2:
            raise ParseError(lineno, "expected 'bag_id label [idx:val ...]'")
        try:
            bag_id = int(toks[0])
        except ValueError:
            raise ParseError(lineno, f"bad bag id {toks[0]!r}") from None
        label = _parse_label(toks[1], lineno)
        feats = np.zeros(dim, dtype=np.float64)
        seen: set[int] = set()
        for tok in toks[2:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected idx:val, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(lineno, f"bad entry {tok!r}") from None
            if not 1 <= idx <= dim:
                raise ParseError(lineno, f"index {idx} out of range 1..{dim}")
            if idx in seen:
                raise ParseError(lineno, f"duplicate index {idx}")
            seen.add(idx)
            feats[idx - 1] = val
        rows.append((lineno, bag_id, label, feats))
    return rows


def _group_rows(rows: list[tuple[int, int, int, np.ndarray]], name: str) -> Dataset:
    labels: dict[int, int] = {}
    feats_by_bag: dict[int, list[np.ndarray]] = {}
    order: list[int] = []
    for lineno, bag_id, label, feats in rows:
        if bag_id not in labels:
            labels[bag_id] = label
            feats_by_bag[bag_id] = []
            order.append(bag_id)
        elif labels[bag_id] != label:
            raise ParseError(lineno, f"conflicting label for bag {bag_id}")
        feats_by_bag[bag_id].append(feats)
    bags = tuple(
        Bag(bid, labels[bid], tuple(Instance(i, f) for i, f in enumerate(feats_by_bag[bid])))
        for bid in order
    )
    return Dataset(dim=bags[0].instances[0].dim, bags=bags, name=name)


def save_dataset(
    ds: Dataset,
    path: str | Path,
    fmt: str = DENSE_CSV,
    header_comments: Iterable[str] = (),
) -> None:
    """Write a dataset; features use full-precision decimal text so a
    save/load round-trip is bit-exact."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    lines = [f"# {c}" for c in header_comments]
    if fmt == SPARSE_BAG:
        lines.insert(0, f"#dim {ds.dim}")
    for bag in ds.bags:
        label = "+1" if bag.label > 0 else "-1"
        for inst in bag.instances:
            if fmt == DENSE_CSV:
                feats = ",".join(repr(float(x)) for x in inst.features)
                lines.append(f"{bag.bag_id},{label},{feats}")
            else:
                entries = " ".join(
                    f"{i + 1}:{float(x)!r}" for i, x in enumerate(inst.features) if x != 0.0
                )
                lines.append(f"{bag.bag_id} {label} {entries}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_truth(truth: Mapping[int, int], path: str | Path, header_comments: Iterable[str] = ()) -> None:
    """Write the synthetic ground-truth sidecar: one ``bag_id instance_id`` per line."""
    lines = [f"# {c}" for c in header_comments]
    lines += [f"{bid} {iid}" for bid, iid in truth.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path: str | Path) -> dict[int, int]:
    truth: dict[int, int] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 2:
            raise ParseError(lineno, "expected 'bag_id instance_id'")
        try:
            truth[int(toks[0])] = int(toks[1])
        except ValueError:
            raise ParseError(lineno, "bad integer") from None
    return truth


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def feature_means(ds: Dataset) -> np.ndarray:
    """Per-dimension mean over all instances."""
    return ds.all_features().mean(axis=0)


def standardize(ds: Dataset, means: np.ndarray | None = None) -> Dataset:
    """Center each feature dimension, then scale every instance to unit
    Euclidean norm.

    ``means`` lets callers reuse centering statistics computed on a training
    split; by default the dataset's own means are used. Vectors that are
    exactly zero after centering are left as zero vectors.
    """
    if not ds.bags:
        raise DataError("cannot standardize an empty dataset")
    mu = feature_means(ds) if means is None else np.asarray(means, dtype=np.float64)
    if mu.shape != (ds.dim,):
        raise DataError(f"means have shape {mu.shape}, expected ({ds.dim},)")
    new_bags = []
    for bag in ds.bags:
        insts = []
        for inst in bag.instances:
            centered = inst.features - mu
            norm = float(np.linalg.norm(centered))
            if norm > 0.0:
                centered = centered / norm
            insts.append(Instance(inst.instance_id, centered))
        new_bags.append(Bag(bag.bag_id, bag.label, tuple(insts)))
    return Dataset(ds.dim, tuple(new_bags), ds.name)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    n = np.linalg.norm(v)
    while n == 0.0:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
    return v / n


def _bag_from_matrix(bag_id: int, label: int, feats: np.ndarray) -> Bag:
    return Bag(bag_id, label, tuple(Instance(i, row) for i, row in enumerate(feats)))


def synth_generate(
    n_pos: int,
    n_neg: int,
    bag_size: int,
    d: int,
    signal_sep: float,
    seed: int,
) -> tuple[Dataset, dict[int, int]]:
    """Generate a planted-signal dataset.

    Negative bags are pure draws from a standard spherical Gaussian.
    Each positive bag holds one "signal" instance drawn around a point at
    distance ``signal_sep`` from the origin along a direction fixed per
    dataset, plus background draws. Returns the dataset and a ground-truth
    map ``bag_id -> signal instance_id`` for evaluation only.
    """
    if min(n_pos, n_neg, bag_size, d) < 1:
        raise ValueError("n_pos, n_neg, bag_size, and d must all be positive")
    if signal_sep < 0:
        raise ValueError("signal_sep must be nonnegative")
    rng = np.random.default_rng(seed)
    direction = _random_unit(rng, d)
    bags = []
    truth: dict[int, int] = {}
    for bid in range(n_pos):
        feats = rng.standard_normal((bag_size, d))
        slot = int(rng.integers(bag_size))
        feats[slot] = signal_sep * direction + rng.standard_normal(d)
        truth[bid] = slot
        bags.append(_bag_from_matrix(bid, 1, feats))
    for j in range(n_neg):
        bags.append(_bag_from_matrix(n_pos + j, -1, rng.standard_normal((bag_size, d))))
    name = f"synth-p{n_pos}-n{n_neg}-m{bag_size}-d{d}-s{signal_sep:g}-r{seed}"
    return Dataset(d, tuple(bags), name), truth


def synth_generate_confounded(
    n_pos: int,
    n_neg: int,
    bag_size: int,
    d: int,
    signal_sep: float,
    clutter_sep: float,
    seed: int,
) -> tuple[Dataset, dict[int, int]]:
    """Planted-signal dataset with one far-out "clutter" instance per
    positive bag, placed along a bag-specific random direction.

    Clutter sits far from every negative instance but is not shared across
    positive bags, which is exactly the trap for farthest-from-negatives
    selection heuristics.
    """
    if bag_size < 2:
        raise ValueError("confounded bags need at least 2 instances")
    if min(n_pos, n_neg, d) < 1:
        raise ValueError("n_pos, n_neg, and d must all be positive")
    if signal_sep < 0 or clutter_sep < 0:
        raise ValueError("separations must be nonnegative")
    rng = np.random.default_rng(seed)
    direction = _random_unit(rng, d)
    bags = []
    truth: dict[int, int] = {}
    for bid in range(n_pos):
        feats = rng.standard_normal((bag_size, d))
        slots = rng.choice(bag_size, size=2, replace=False)
        feats[slots[0]] = signal_sep * direction + rng.standard_normal(d)
        feats[slots[1]] = clutter_sep * _random_unit(rng, d) + rng.standard_normal(d)
        truth[bid] = int(slots[0])
        bags.append(_bag_from_matrix(bid, 1, feats))
    for j in range(n_neg):
        bags.append(_bag_from_matrix(n_pos + j, -1, rng.standard_normal((bag_size, d))))
    name = f"synthc-p{n_pos}-n{n_neg}-m{bag_size}-d{d}-s{signal_sep:g}-c{clutter_sep:g}-r{seed}"
    return Dataset(d, tuple(bags), name), truth


# ---------------------------------------------------------------------------
# Fold splitting
# ---------------------------------------------------------------------------

def kfold_split(ds: Dataset, k: int, seed: int) -> FoldSplit:
    """Stratified k-fold assignment of bags, deterministic under ``seed``.

    Fold sizes differ by at most one, and so do per-fold positive counts.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    pos = [b.bag_id for b in ds.bags if b.label > 0]
    neg = [b.bag_id for b in ds.bags if b.label < 0]
    if len(pos) < k or len(neg) < k:
        raise DataError(
            f"too few bags for {k} folds: {len(pos)} positive, {len(neg)} negative"
        )
    rng = np.random.default_rng(seed)
    pos_sh = [pos[i] for i in rng.permutation(len(pos))]
    neg_sh = [neg[i] for i in rng.permutation(len(neg))]
    assignments: dict[int, int] = {}
    for i, bid in enumerate(pos_sh):
        assignments[bid] = i % k
    for j, bid in enumerate(neg_sh):
        assignments[bid] = (len(pos_sh) + j) % k
    return FoldSplit(k, assignments)


def split_dataset(ds: Dataset, split: FoldSplit, fold: int) -> tuple[Dataset, Dataset]:
    """Partition into (train, test) where ``fold`` is held out."""
    if not 0 <= fold < split.k:
        raise ValueError(f"fold {fold} out of range [0, {split.k})")
    train = tuple(b for b in ds.bags if split.assignments[b.bag_id] != fold)
    test = tuple(b for b in ds.bags if split.assignments[b.bag_id] == fold)
    return Dataset(ds.dim, train, ds.name), Dataset(ds.dim, test, ds.name)
