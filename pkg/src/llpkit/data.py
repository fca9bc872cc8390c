"""Instances, bags, datasets: CSV ingestion, bagging, synthetic blobs.

Supervision model: a bag is an ordered group of instances annotated only
with the number of positive labels it contains.  Ground-truth instance
labels may travel along (bagging keeps them so held-out folds can be
scored), but training objectives only ever see a bag's feature matrix and
its positive count; see :mod:`llpkit.objectives`.

File formats
------------
Instance CSV: header ``f0,f1,...,f{d-1}[,label]``, one instance per row,
UTF-8, decimal point.  The label column, when present, holds 0 or 1.

Bag CSV (written by the ``bag`` CLI command): header line ``bag_id,y,n``,
then for each bag one summary row ``bag_id,y,n`` followed by exactly ``n``
instance rows ``bag_id,instance_id,f0,...,f{d-1}[,label]``.  The summary
row's ``n`` says how many instance rows follow, so the two row kinds never
need to be distinguished by shape.
"""

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import FormatError, UsageError


@dataclass(frozen=True, eq=False)
class Instance:
    """One feature vector, optionally with its ground-truth binary label."""

    features: np.ndarray
    true_label: int | None = None
    instance_id: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise UsageError(f"features must be a nonempty vector, got {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise UsageError("features contain non-finite values")
        object.__setattr__(self, "features", feats)
        if self.true_label is not None and self.true_label not in (0, 1):
            raise UsageError(f"label must be 0 or 1, got {self.true_label!r}")


@dataclass(frozen=True, eq=False)
class Bag:
    """Instances plus the count of positives among them (the supervision)."""

    instances: tuple[Instance, ...]
    positive_count: int

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        n = len(self.instances)
        if n < 1:
            raise UsageError("a bag needs at least one instance")
        if not 0 <= self.positive_count <= n:
            raise UsageError(
                f"positive count {self.positive_count} outside [0, {n}]"
            )
        dims = {inst.features.size for inst in self.instances}
        if len(dims) != 1:
            raise UsageError(f"mixed feature dimensions in one bag: {sorted(dims)}")

    @property
    def size(self) -> int:
        return len(self.instances)

    @cached_property
    def features(self) -> np.ndarray:
        """(n, d) feature matrix; the only instance data objectives see."""
        return np.vstack([inst.features for inst in self.instances])

    @property
    def instance_ids(self) -> tuple:
        return tuple(inst.instance_id for inst in self.instances)

    def true_labels(self) -> np.ndarray:
        """Ground-truth labels, for evaluation only."""
        labels = [inst.true_label for inst in self.instances]
        if any(lab is None for lab in labels):
            raise UsageError("bag contains unlabeled instances")
        return np.asarray(labels, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class BagDataset:
    """A collection of bags sharing one feature dimension."""

    bags: tuple[Bag, ...]
    feature_dim: int
    fold_assignment: dict[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        if not self.bags:
            raise UsageError("dataset needs at least one bag")
        for bag in self.bags:
            if bag.features.shape[1] != self.feature_dim:
                raise UsageError(
                    f"bag feature dimension {bag.features.shape[1]} does not "
                    f"match dataset dimension {self.feature_dim}"
                )
        if self.fold_assignment is not None:
            if set(self.fold_assignment) != set(range(len(self.bags))):
                raise UsageError("fold assignment must cover every bag exactly once")

    @property
    def num_bags(self) -> int:
        return len(self.bags)

    @property
    def num_instances(self) -> int:
        return sum(bag.size for bag in self.bags)

    @cached_property
    def stacked_features(self) -> np.ndarray:
        """All bags' features stacked into one (num_instances, d) matrix."""
        return np.vstack([bag.features for bag in self.bags])

    @cached_property
    def bag_slices(self) -> tuple[slice, ...]:
        """Row range of each bag inside :attr:`stacked_features`."""
        slices = []
        start = 0
        for bag in self.bags:
            slices.append(slice(start, start + bag.size))
            start += bag.size
        return tuple(slices)

    def folds(self) -> list[int]:
        if self.fold_assignment is None:
            raise UsageError("dataset has no fold assignment")
        return sorted(set(self.fold_assignment.values()))

    def fold_split(self, fold: int) -> tuple["BagDataset", list[Instance]]:
        """(training dataset, held-out instances) for one fold."""
        if self.fold_assignment is None:
            raise UsageError("dataset has no fold assignment")
        train = [b for i, b in enumerate(self.bags) if self.fold_assignment[i] != fold]
        held = [b for i, b in enumerate(self.bags) if self.fold_assignment[i] == fold]
        if not train or not held:
            raise UsageError(f"fold {fold} leaves an empty split")
        held_instances = [inst for bag in held for inst in bag.instances]
        return BagDataset(tuple(train), self.feature_dim), held_instances

    def all_instances(self) -> list[Instance]:
        return [inst for bag in self.bags for inst in bag.instances]

    def strip_labels(self) -> "BagDataset":
        """Copy with every ground-truth label removed (leak checks)."""
        bags = tuple(
            Bag(
                tuple(replace(inst, true_label=None) for inst in bag.instances),
                bag.positive_count,
            )
            for bag in self.bags
        )
        fold = dict(self.fold_assignment) if self.fold_assignment else None
        return BagDataset(bags, self.feature_dim, fold)


@dataclass(frozen=True)
class SyntheticSpec:
    """Two isotropic Gaussian blobs separated along the first axis."""

    num_instances: int
    feature_dim: int
    class_separation: float
    positive_prior: float
    seed: int

    def __post_init__(self):
        if self.num_instances < 2:
            raise UsageError("need at least 2 instances")
        if self.feature_dim < 1:
            raise UsageError("feature dimension must be positive")
        if self.class_separation < 0:
            raise UsageError("class separation must be nonnegative")
        if not 0.0 < self.positive_prior < 1.0:
            raise UsageError("positive prior must lie strictly inside (0, 1)")


def generate_synthetic(spec: SyntheticSpec) -> list[Instance]:
    """Labeled blobs: class 0 at the origin, class 1 shifted along axis 0.

    Both classes have unit isotropic covariance; labels are drawn first
    with probability ``positive_prior``.  Bit-identical for a given spec.
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.num_instances, spec.feature_dim
    labels = (rng.random(n) < spec.positive_prior).astype(np.int64)
    feats = rng.standard_normal((n, d))
    feats[:, 0] += spec.class_separation * labels
    return [
        Instance(feats[i], int(labels[i]), instance_id=i) for i in range(n)
    ]


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise FormatError(f"row {row}: column {col}: {text!r} is not a number") from exc
    if not math.isfinite(value):
        raise FormatError(f"row {row}: column {col}: non-finite value {text!r}")
    return value


def _parse_label(text: str, row: int) -> int:
    if text not in ("0", "1"):
        raise FormatError(f"row {row}: label must be 0 or 1, got {text!r}")
    return int(text)


def load_instances_csv(path) -> list[Instance]:
    """Read an instance CSV; labels are parsed when the column exists."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    has_label = header[-1] == "label"
    feature_names = header[:-1] if has_label else header
    expected = [f"f{i}" for i in range(len(feature_names))]
    if not feature_names or feature_names != expected:
        raise FormatError(
            f"{path}: header must be f0,...,f{{d-1}}[,label], got {header}"
        )
    if not rows[1:]:
        raise FormatError(f"{path}: no instance rows")
    dim = len(feature_names)
    instances = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(
                f"{path}: row {r} has {len(row)} columns, header declares "
                f"{len(header)}"
            )
        feats = [_parse_float(v, r, f"f{i}") for i, v in enumerate(row[:dim])]
        label = _parse_label(row[dim], r) if has_label else None
        instances.append(Instance(np.array(feats), label, instance_id=r - 2))
    return instances


def save_instances_csv(path, instances: list[Instance]) -> None:
    """Write instances in the loadable CSV format; labels only if all set."""
    if not instances:
        raise UsageError("nothing to write")
    dim = instances[0].features.size
    labeled = all(inst.true_label is not None for inst in instances)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"f{i}" for i in range(dim)]
        if labeled:
            header.append("label")
        writer.writerow(header)
        for inst in instances:
            if inst.features.size != dim:
                raise UsageError("instances have inconsistent dimensions")
            row = [repr(v) for v in inst.features.tolist()]
            if labeled:
                row.append(str(inst.true_label))
            writer.writerow(row)


def make_bags(
    instances: list[Instance], min_size: int, max_size: int, seed: int
) -> BagDataset:
    """Partition labeled instances into bags of uniform random sizes.

    Sizes are drawn uniformly from [min_size, max_size]; instances are
    consumed without replacement in a seeded shuffle order.  When fewer
    than ``min_size`` instances remain they are discarded; a final draw
    that exceeds the remainder is truncated to it (still >= min_size), so
    no usable instance is dropped.  Each bag's positive count is the number
    of label-1 instances it received.
    """
    if not instances:
        raise UsageError("no instances to bag")
    if any(inst.true_label is None for inst in instances):
        raise UsageError("bagging requires every instance to be labeled")
    if not 1 <= min_size <= max_size <= len(instances):
        raise UsageError(
            f"need 1 <= min_size <= max_size <= {len(instances)}, got "
            f"[{min_size}, {max_size}]"
        )
    dims = {inst.features.size for inst in instances}
    if len(dims) != 1:
        raise UsageError(f"mixed feature dimensions: {sorted(dims)}")

    # Identity within the dataset is positional: ids are reassigned from
    # input order so uniqueness holds regardless of what the caller set.
    pool = [replace(inst, instance_id=i) for i, inst in enumerate(instances)]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    bags = []
    pos = 0
    while len(pool) - pos >= min_size:
        size = int(rng.integers(min_size, max_size + 1))
        size = min(size, len(pool) - pos)
        members = tuple(pool[i] for i in order[pos : pos + size])
        y = sum(inst.true_label for inst in members)
        bags.append(Bag(members, y))
        pos += size
    return BagDataset(tuple(bags), feature_dim=dims.pop())


def assign_folds(dataset: BagDataset, k: int, seed: int) -> BagDataset:
    """Seeded partition of bags into k folds with sizes differing by <= 1."""
    if k < 2:
        raise UsageError(f"need at least 2 folds, got {k}")
    if dataset.num_bags < k:
        raise UsageError(
            f"cannot split {dataset.num_bags} bags into {k} folds"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.num_bags)
    assignment = {int(bag): i % k for i, bag in enumerate(order)}
    return BagDataset(dataset.bags, dataset.feature_dim, assignment)


def save_bags_csv(path, dataset: BagDataset) -> None:
    """Write a bag CSV; the label column is kept when every label is set."""
    labeled = all(
        inst.true_label is not None for bag in dataset.bags for inst in bag.instances
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bag_id", "y", "n"])
        for bag_id, bag in enumerate(dataset.bags):
            writer.writerow([bag_id, bag.positive_count, bag.size])
            for inst in bag.instances:
                iid = inst.instance_id if inst.instance_id is not None else ""
                row = [bag_id, iid] + [repr(v) for v in inst.features.tolist()]
                if labeled:
                    row.append(str(inst.true_label))
                writer.writerow(row)


def load_bags_csv(path) -> BagDataset:
    """Read a bag CSV back into a dataset.

    The trailing instance-row column is treated as the label column when
    every value is 0/1 and each bag's column sum equals its declared count;
    otherwise it is a feature.  Files written by :func:`save_bags_csv` from
    labeled data always satisfy the first case.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise FormatError(f"{path}: empty file")
    if [c.strip() for c in rows[0]] != ["bag_id", "y", "n"]:
        raise FormatError(f"{path}: header must be bag_id,y,n, got {rows[0]}")

    raw_bags = []
    idx = 1
    while idx < len(rows):
        summary = rows[idx]
        if len(summary) != 3:
            raise FormatError(
                f"{path}: row {idx + 1}: expected bag summary bag_id,y,n"
            )
        try:
            bag_id, y, n = (int(v) for v in summary)
        except ValueError as exc:
            raise FormatError(f"{path}: row {idx + 1}: bad bag summary") from exc
        if n < 1 or not 0 <= y <= n:
            raise FormatError(f"{path}: bag {bag_id}: invalid counts y={y}, n={n}")
        members = rows[idx + 1 : idx + 1 + n]
        if len(members) < n:
            raise FormatError(f"{path}: bag {bag_id}: file ends mid-bag")
        raw_bags.append((bag_id, y, members))
        idx += 1 + n

    widths = {len(row) for _, _, members in raw_bags for row in members}
    if len(widths) != 1:
        raise FormatError(f"{path}: instance rows have mixed column counts")
    width = widths.pop()
    if width < 3:
        raise FormatError(f"{path}: instance rows need at least one feature")

    def last_column_is_label() -> bool:
        for _, y, members in raw_bags:
            total = 0
            for row in members:
                if row[-1] not in ("0", "1"):
                    return False
                total += int(row[-1])
            if total != y:
                return False
        return True

    labeled = last_column_is_label()
    dim = width - 3 if labeled else width - 2
    if dim < 1:
        raise FormatError(f"{path}: instance rows need at least one feature")

    bags = []
    for bag_id, y, members in raw_bags:
        instances = []
        for row in members:
            iid = int(row[1]) if row[1] != "" else None
            feats = [
                _parse_float(v, bag_id, f"f{i}")
                for i, v in enumerate(row[2 : 2 + dim])
            ]
            label = _parse_label(row[-1], bag_id) if labeled else None
            instances.append(Instance(np.array(feats), label, instance_id=iid))
        bags.append(Bag(tuple(instances), y))
    return BagDataset(tuple(bags), feature_dim=dim)
