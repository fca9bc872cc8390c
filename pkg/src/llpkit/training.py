"""Epoch loop, cross-validation, and the bag-size sweep.

One :func:`train` call drives any of the four objectives:

* ``mle``: refresh per-instance soft targets from the count posterior
  (every ``target_refresh_interval`` epochs, default every epoch), then run
  one epoch of minibatch cross-entropy against them.  Batches are
  instance-level, since the soft targets decouple instances inside an
  epoch; bags never need to fit in one batch.
* ``amle`` / ``dllp``: per-bag losses, batched as groups of whole bags.
* ``supervised``: ordinary instance-level cross-entropy on true labels.

Early stopping watches the training objective (count log-likelihood for
``mle``, mean epoch loss otherwise), never test data: it stops after
``patience`` consecutive epochs without a relative improvement above
``rel_tol``.  Everything is deterministic given (dataset, config, seed);
wall-clock time only ever lands in the record's ``seconds`` column.
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network, objectives
from .data import BagDataset, Instance, assign_folds, make_bags
from .errors import NumericalError, UsageError
from .poisson_binomial import (
    bag_log_likelihood,
    clamp_probabilities,
    configuration_posterior,
)

METHODS = ("mle", "amle", "dllp", "supervised")
RECORD_HEADER = ["epoch", "loss", "log_likelihood", "test_accuracy", "seconds"]


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs besides the data.

    ``batch_size`` counts instances for mle/supervised and whole bags for
    amle/dllp.  ``optimizer`` is "adam" for experiments; "sgd" takes plain
    mean-gradient steps and exists for the monotonicity checks.
    """

    method: str
    max_epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    rel_tol: float = 1e-5
    seed: int = 0
    target_refresh_interval: int = 1
    threshold: float = 0.5
    hidden_widths: tuple[int, ...] = (32, 32)
    optimizer: str = "adam"
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}, expected {METHODS}")
        if self.max_epochs < 1:
            raise UsageError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise UsageError("batch_size must be at least 1")
        if self.patience < 1:
            raise UsageError("patience must be at least 1")
        if self.rel_tol < 0:
            raise UsageError("rel_tol must be nonnegative")
        if self.target_refresh_interval < 1:
            raise UsageError("target_refresh_interval must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise UsageError(f"unknown optimizer {self.optimizer!r}")
        if self.threads < 1:
            raise UsageError("threads must be at least 1")
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        objectives.InferenceConfig(self.threshold)


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    loss: float
    log_likelihood: float | None
    test_accuracy: float | None
    seconds: float


@dataclass
class TrainingRecord:
    """Per-epoch curve data; ``seconds`` is cumulative wall-clock time."""

    rows: list[EpochRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_HEADER)
            for row in self.rows:
                writer.writerow(
                    [
                        row.epoch,
                        repr(row.loss),
                        "" if row.log_likelihood is None else repr(row.log_likelihood),
                        "" if row.test_accuracy is None else repr(row.test_accuracy),
                        repr(row.seconds),
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "TrainingRecord":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != RECORD_HEADER:
                raise UsageError(f"{path}: not a training record")
            rows = [
                EpochRow(
                    epoch=int(r[0]),
                    loss=float(r[1]),
                    log_likelihood=None if r[2] == "" else float(r[2]),
                    test_accuracy=None if r[3] == "" else float(r[3]),
                    seconds=float(r[4]),
                )
                for r in reader
            ]
        return cls(rows)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int

    @property
    def count(self) -> int:
        return (
            self.true_positive
            + self.false_positive
            + self.true_negative
            + self.false_negative
        )

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "true_negative": self.true_negative,
            "false_negative": self.false_negative,
            "count": self.count,
        }


def evaluate(
    params, instances: list[Instance], config=objectives.InferenceConfig()
) -> EvalMetrics:
    """Accuracy and confusion counts of thresholded predictions."""
    if not instances:
        raise UsageError("evaluation set is empty")
    if any(inst.true_label is None for inst in instances):
        raise UsageError("evaluation requires instance labels")
    features = np.vstack([inst.features for inst in instances])
    labels = np.asarray([inst.true_label for inst in instances], dtype=np.int64)
    preds = objectives.predict(params, features, config)
    return EvalMetrics(
        accuracy=float(np.mean(preds == labels)),
        true_positive=int(np.sum((preds == 1) & (labels == 1))),
        false_positive=int(np.sum((preds == 1) & (labels == 0))),
        true_negative=int(np.sum((preds == 0) & (labels == 0))),
        false_negative=int(np.sum((preds == 0) & (labels == 1))),
    )


def _apply_update(params, opt_state, grad, config, context):
    if config.optimizer == "sgd":
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient at {context}")
        return params.with_theta(params.theta - config.learning_rate * grad), opt_state
    try:
        return network.optimizer_step(params, opt_state, grad)
    except NumericalError as exc:
        raise NumericalError(f"{exc} at {context}") from exc


def train(
    dataset: BagDataset, config: TrainConfig, eval_instances=None
) -> tuple[network.ClassifierParams, TrainingRecord]:
    """Run the configured method on a bag dataset.

    ``eval_instances``, when given, must be labeled; test accuracy is then
    recorded every epoch.  Returns the final parameters and the per-epoch
    record (one row per completed epoch).
    """
    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).generate_state(2)
    params = network.init_params(
        (dataset.feature_dim, *config.hidden_widths, 1), int(init_seed)
    )
    opt_state = network.init_optimizer(
        params, config.learning_rate, config.beta1, config.beta2, config.adam_eps
    )
    rng = np.random.default_rng(int(shuffle_seed))
    infer_cfg = objectives.InferenceConfig(config.threshold)

    instance_level = config.method in ("mle", "supervised")
    if instance_level:
        all_features = dataset.stacked_features
        if config.method == "supervised":
            try:
                targets = np.concatenate(
                    [bag.true_labels() for bag in dataset.bags]
                ).astype(np.float64)
            except UsageError as exc:
                raise UsageError(
                    f"supervised training requires instance labels: {exc}"
                ) from exc
        else:
            targets = None

    eval_features = eval_labels = None
    if eval_instances is not None:
        if not eval_instances:
            raise UsageError("evaluation set is empty")
        if any(inst.true_label is None for inst in eval_instances):
            raise UsageError("evaluation requires instance labels")
        eval_features = np.vstack([inst.features for inst in eval_instances])
        eval_labels = np.asarray(
            [inst.true_label for inst in eval_instances], dtype=np.int64
        )

    record = TrainingRecord()
    start = time.perf_counter()
    best = None
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        if config.method == "mle" and (
            targets is None or (epoch - 1) % config.target_refresh_interval == 0
        ):
            targets = objectives.e_step(params, dataset, epoch=epoch).flat_targets()

        if instance_level:
            count = all_features.shape[0]
            order = rng.permutation(count)
            total = 0.0
            for bi, lo in enumerate(range(0, count, config.batch_size)):
                sel = order[lo : lo + config.batch_size]
                loss, out_grads = objectives.m_step_loss(
                    params, all_features[sel], targets[sel]
                )
                if not math.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}, batch {bi}"
                    )
                grad = network.backward(params, all_features[sel], out_grads)
                params, opt_state = _apply_update(
                    params, opt_state, grad / sel.size, config,
                    f"epoch {epoch}, batch {bi}",
                )
                total += loss
            epoch_loss = total / count
        else:
            batch_loss = (
                objectives.amle_batch_loss
                if config.method == "amle"
                else objectives.dllp_batch_loss
            )
            stacked = dataset.stacked_features
            slices = dataset.bag_slices
            order = rng.permutation(dataset.num_bags)
            total = 0.0
            for bi, lo in enumerate(range(0, dataset.num_bags, config.batch_size)):
                chunk = order[lo : lo + config.batch_size]
                feats = np.concatenate([stacked[slices[j]] for j in chunk])
                sizes = [dataset.bags[j].size for j in chunk]
                counts = [dataset.bags[j].positive_count for j in chunk]
                loss, out_grads = batch_loss(params, feats, sizes, counts)
                if not math.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}, batch {bi}, "
                        f"bags {chunk.tolist()}"
                    )
                grad = network.backward(params, feats, out_grads)
                params, opt_state = _apply_update(
                    params, opt_state, grad / chunk.size, config,
                    f"epoch {epoch}, batch {bi}, bags {chunk.tolist()}",
                )
                total += loss
            epoch_loss = total / dataset.num_bags

        log_likelihood = (
            objectives.mle_llp_objective(params, dataset)
            if config.method == "mle"
            else None
        )
        accuracy = None
        if eval_features is not None:
            preds = objectives.predict(params, eval_features, infer_cfg)
            accuracy = float(np.mean(preds == eval_labels))
        record.rows.append(
            EpochRow(
                epoch=epoch,
                loss=epoch_loss,
                log_likelihood=log_likelihood,
                test_accuracy=accuracy,
                seconds=time.perf_counter() - start,
            )
        )

        # Early stopping: smaller is better, so mle monitors -L.
        monitored = -log_likelihood if config.method == "mle" else epoch_loss
        if best is None:
            best = monitored
        elif best - monitored > config.rel_tol * max(abs(best), 1e-12):
            best = monitored
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return params, record


@dataclass(frozen=True)
class FoldResult:
    fold: int
    metrics: EvalMetrics
    record: TrainingRecord


@dataclass(frozen=True)
class CrossValResult:
    folds: list[FoldResult]
    mean_accuracy: float
    std_accuracy: float

    def summary(self) -> dict:
        return {
            "folds": [
                {"fold": fr.fold, **fr.metrics.as_dict()} for fr in self.folds
            ],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }


def cross_validate(dataset: BagDataset, config: TrainConfig, k=None) -> CrossValResult:
    """Train per fold, score each model on its held-out fold's instances.

    Reuses the dataset's fold assignment when present, otherwise assigns
    ``k`` seeded folds.  Every fold trains with the same config seed (so
    symmetric folds give symmetric results); fold runs are independent, so
    ``config.threads`` of them may run at once without changing any result.
    """
    if dataset.fold_assignment is None:
        if k is None:
            raise UsageError("dataset has no fold assignment; pass k")
        dataset = assign_folds(dataset, k, config.seed)
    folds = dataset.folds()

    def run_fold(i: int) -> FoldResult:
        fold = folds[i]
        train_ds, held = dataset.fold_split(fold)
        params, record = train(train_ds, config, eval_instances=held)
        metrics = evaluate(params, held, objectives.InferenceConfig(config.threshold))
        return FoldResult(fold=fold, metrics=metrics, record=record)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run_fold, range(len(folds))))
    else:
        results = [run_fold(i) for i in range(len(folds))]

    accuracies = [fr.metrics.accuracy for fr in results]
    mean = float(np.mean(accuracies))
    std = float(np.std(accuracies, ddof=1)) if len(accuracies) > 1 else 0.0
    return CrossValResult(folds=results, mean_accuracy=mean, std_accuracy=std)


@dataclass(frozen=True)
class SweepRow:
    bag_size: int
    mean_accuracy: float
    std_accuracy: float


def bag_size_sweep(
    instances: list[Instance], sizes, config: TrainConfig, k: int = 10
) -> list[SweepRow]:
    """Rebag at each fixed size and cross-validate.

    Every size uses the same instances and seed, so rows differ only in
    how much the bag structure dilutes the supervision.
    """
    if not sizes:
        raise UsageError("no bag sizes given")
    rows = []
    for size in sizes:
        if size < 1:
            raise UsageError(f"bag size must be positive, got {size}")
        available = len(instances) // size
        if available < k:
            raise UsageError(
                f"bag size {size}: only {available} bags from "
                f"{len(instances)} instances, need at least {k} for "
                f"{k}-fold cross-validation"
            )
        bagged = make_bags(instances, size, size, config.seed)
        result = cross_validate(bagged, config, k=k)
        rows.append(SweepRow(size, result.mean_accuracy, result.std_accuracy))
    return rows


@dataclass(frozen=True)
class EmTrace:
    """Log-likelihood trajectory of a full-batch EM run."""

    params: network.ClassifierParams
    log_likelihoods: list[float]
    bound_gaps: list[float]


def run_em_full_batch(
    dataset: BagDataset,
    cycles: int,
    inner_steps: int,
    learning_rate: float,
    seed: int,
    hidden_widths=(32, 32),
) -> EmTrace:
    """Textbook EM cycle for the monotonicity checks.

    Each cycle refreshes the soft targets once, then takes ``inner_steps``
    plain full-batch descent steps on the mean target cross-entropy.
    Records the count log-likelihood before the first cycle and after each
    cycle, plus the worst per-bag gap between the lower bound and the bag
    log-likelihood at every refresh (zero up to float error: the bound is
    tight at the exact posterior).
    """
    params = network.init_params((dataset.feature_dim, *hidden_widths, 1), seed)
    all_features = dataset.stacked_features
    count = all_features.shape[0]
    trace = [objectives.mle_llp_objective(params, dataset)]
    gaps = []
    for cycle in range(cycles):
        state = objectives.e_step(params, dataset, epoch=cycle)
        probs_all = clamp_probabilities(network.forward(params, all_features))
        worst = 0.0
        for rows, bag in zip(dataset.bag_slices, dataset.bags):
            probs = probs_all[rows]
            alpha = configuration_posterior(probs, bag.positive_count)
            bound = objectives.bag_lower_bound(probs, bag.positive_count, alpha)
            exact = bag_log_likelihood(probs, bag.positive_count)
            worst = max(worst, abs(bound - exact))
        gaps.append(worst)
        targets = state.flat_targets()
        for _ in range(inner_steps):
            _, out_grads = objectives.m_step_loss(params, all_features, targets)
            grad = network.backward(params, all_features, out_grads) / count
            params = params.with_theta(params.theta - learning_rate * grad)
        trace.append(objectives.mle_llp_objective(params, dataset))
    return EmTrace(params=params, log_likelihoods=trace, bound_gaps=gaps)
