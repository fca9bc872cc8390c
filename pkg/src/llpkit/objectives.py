"""Training objectives that turn bag counts into classifier gradients.

Four ways to train the instance classifier:

* count-likelihood EM ("mle"): maximize the exact Poisson binomial
  likelihood of the observed counts by alternating a posterior update
  (:func:`e_step`) with cross-entropy epochs against the resulting soft
  targets (:func:`m_step_loss`);
* normal approximation ("amle"): replace the count likelihood with a
  moment-matched Gaussian and minimize :func:`amle_loss`;
* proportion matching ("dllp"): cross-entropy between the true and the
  mean-predicted positive proportion of each bag (:func:`dllp_loss`);
* fully supervised: ordinary binary cross-entropy on instance labels
  (:func:`supervised_loss`), the skyline baseline.

Every loss returns ``(value, dvalue_doutputs)`` so the network's generic
backward pass maps it onto parameters.  Losses only ever receive a bag's
feature matrix and its positive count; ground-truth labels cannot reach
them by construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import network
from .data import BagDataset
from .errors import UsageError
from .poisson_binomial import (
    CLAMP_EPS,
    bag_log_likelihood,
    clamp_probabilities,
    configuration_posterior,
    instance_posteriors,
)

# Floor for the approximate bag-count variance: the Gaussian objective
# divides by it and takes its log, both unbounded as predictions saturate.
VARIANCE_FLOOR = 1e-4


@dataclass(frozen=True)
class InferenceConfig:
    """Decision threshold on the classifier output."""

    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise UsageError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class BagMoments:
    """Mean and (floored) variance of a bag's predicted positive count."""

    mean: float
    variance: float


@dataclass
class EmState:
    """Per-bag soft targets from the most recent posterior update."""

    bag_targets: list[np.ndarray]
    refreshed_epoch: int

    def flat_targets(self) -> np.ndarray:
        return np.concatenate(self.bag_targets)


def _clamped_forward(params, features) -> np.ndarray:
    return clamp_probabilities(network.forward(params, features))


def e_step(params, dataset: BagDataset, epoch: int = 0) -> EmState:
    """Posterior probability that each instance is positive, per bag.

    Independent across bags: run the classifier once over the whole
    dataset, then condition each bag's Bernoulli field on its count.
    """
    probs = _clamped_forward(params, dataset.stacked_features)
    targets = [
        instance_posteriors(probs[rows], bag.positive_count)
        for rows, bag in zip(dataset.bag_slices, dataset.bags)
    ]
    return EmState(bag_targets=targets, refreshed_epoch=epoch)


def m_step_loss(params, features, soft_targets) -> tuple[float, np.ndarray]:
    """Summed cross-entropy against soft targets in [0, 1].

    loss = -sum_i [t_i log f_i + (1 - t_i) log(1 - f_i)], with outputs
    clamped before the logs; gradient per output: (f_i - t_i) / (f_i (1 - f_i)).
    """
    t = np.asarray(soft_targets, dtype=np.float64)
    f = _clamped_forward(params, features)
    if t.shape != f.shape:
        raise UsageError(f"{t.shape} targets for {f.shape} outputs")
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise UsageError("soft targets must lie in [0, 1]")
    loss = -float(np.sum(t * np.log(f) + (1.0 - t) * np.log1p(-f)))
    grads = (f - t) / (f * (1.0 - f))
    return loss, grads


def supervised_loss(params, features, labels) -> tuple[float, np.ndarray]:
    """Binary cross-entropy against hard labels; the soft-target special
    case with targets in {0, 1}."""
    labels = np.asarray(labels)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise UsageError("labels must be 0 or 1")
    return m_step_loss(params, features, labels.astype(np.float64))


def mle_llp_objective(params, dataset: BagDataset) -> float:
    """Dataset log-likelihood of the observed counts (sum over bags)."""
    probs = _clamped_forward(params, dataset.stacked_features)
    return sum(
        bag_log_likelihood(probs[rows], bag.positive_count)
        for rows, bag in zip(dataset.bag_slices, dataset.bags)
    )


def bag_moments(p) -> BagMoments:
    """Moment-match the predicted count: mean sum(p), variance sum(p(1-p))
    floored at VARIANCE_FLOOR."""
    p = clamp_probabilities(p)
    mean = float(p.sum())
    variance = float(np.sum(p * (1.0 - p)))
    return BagMoments(mean=mean, variance=max(variance, VARIANCE_FLOOR))


def amle_loss(params, features, positive_count: int) -> tuple[float, np.ndarray]:
    """Gaussian-approximated negative count log-likelihood for one bag.

    loss = (y - mu)^2 / var + log(var) with the constant terms of the
    normal density dropped (the loss may be negative).  Where the variance
    floor is active that term is locally constant, so its gradient path is
    zero.
    """
    f = _clamped_forward(params, features)
    mu = float(f.sum())
    raw_var = float(np.sum(f * (1.0 - f)))
    floored = raw_var < VARIANCE_FLOOR
    var = VARIANCE_FLOOR if floored else raw_var
    residual = positive_count - mu
    loss = residual * residual / var + math.log(var)
    grads = np.full(f.shape, -2.0 * residual / var)
    if not floored:
        grads += (-(residual * residual) / (var * var) + 1.0 / var) * (1.0 - 2.0 * f)
    return loss, grads


def dllp_loss(params, features, positive_count: int) -> tuple[float, np.ndarray]:
    """Cross-entropy between the true and mean-predicted positive proportion.

    With rho = y/n and rho_hat = clamp(mean(f)):
    loss = -[rho log rho_hat + (1 - rho) log(1 - rho_hat)], and every
    instance shares the gradient (rho_hat - rho) / (rho_hat (1 - rho_hat) n).
    """
    f = _clamped_forward(params, features)
    n = f.size
    rho = positive_count / n
    rho_hat = min(max(float(f.mean()), CLAMP_EPS), 1.0 - CLAMP_EPS)
    loss = -(rho * math.log(rho_hat) + (1.0 - rho) * math.log1p(-rho_hat))
    grad = (rho_hat - rho) / (rho_hat * (1.0 - rho_hat) * n)
    return loss, np.full(n, grad)


def amle_batch_loss(
    params, features, sizes, positive_counts
) -> tuple[float, np.ndarray]:
    """Gaussian count loss for several bags in one network pass.

    ``features`` stacks the bags' instances; ``sizes`` and
    ``positive_counts`` give each bag's length and count.  Returns the
    summed loss and per-instance output gradients, matching
    :func:`amle_loss` applied bag by bag up to summation order.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    ys = np.asarray(positive_counts, dtype=np.float64)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    f = _clamped_forward(params, features)
    if f.size != int(sizes.sum()):
        raise UsageError("bag sizes do not cover the feature rows")
    mu = np.add.reduceat(f, starts)
    raw_var = np.add.reduceat(f * (1.0 - f), starts)
    floored = raw_var < VARIANCE_FLOOR
    var = np.where(floored, VARIANCE_FLOOR, raw_var)
    residual = ys - mu
    loss = float(np.sum(residual * residual / var + np.log(var)))
    base = -2.0 * residual / var
    var_path = np.where(
        floored, 0.0, -(residual * residual) / (var * var) + 1.0 / var
    )
    grads = np.repeat(base, sizes) + np.repeat(var_path, sizes) * (1.0 - 2.0 * f)
    return loss, grads


def dllp_batch_loss(
    params, features, sizes, positive_counts
) -> tuple[float, np.ndarray]:
    """Proportion cross-entropy for several bags in one network pass.

    Same contract as :func:`amle_batch_loss`, matching :func:`dllp_loss`
    applied bag by bag up to summation order.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    ys = np.asarray(positive_counts, dtype=np.float64)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    f = _clamped_forward(params, features)
    if f.size != int(sizes.sum()):
        raise UsageError("bag sizes do not cover the feature rows")
    rho = ys / sizes
    rho_hat = np.clip(np.add.reduceat(f, starts) / sizes, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = float(-np.sum(rho * np.log(rho_hat) + (1.0 - rho) * np.log1p(-rho_hat)))
    per_bag = (rho_hat - rho) / (rho_hat * (1.0 - rho_hat) * sizes)
    return loss, np.repeat(per_bag, sizes)


def predict(params, features, config: InferenceConfig = InferenceConfig()) -> np.ndarray:
    """Thresholded labels; ties at the threshold go to the positive class."""
    probs = network.forward(params, features)
    return (probs >= config.threshold).astype(np.int64)


def bag_lower_bound(p, y: int, alpha: dict[tuple[int, ...], float]) -> float:
    """Expected complete-data log-likelihood plus entropy for one bag.

    ``alpha`` assigns a weight to each configuration consistent with the
    count.  At the exact posterior this equals the bag's count
    log-likelihood (Jensen's inequality is tight there); any other
    distribution gives a smaller value.
    """
    p = clamp_probabilities(p)
    log_p = np.log(p)
    log_q = np.log1p(-p)
    total = 0.0
    weight = 0.0
    for config, a in alpha.items():
        if a < 0.0:
            raise UsageError("configuration weights must be nonnegative")
        weight += a
        if a == 0.0:
            continue
        if len(config) != p.size or sum(config) != y:
            raise UsageError(f"configuration {config} inconsistent with count {y}")
        mask = np.asarray(config, dtype=bool)
        log_joint = float(log_p[mask].sum() + log_q[~mask].sum())
        total += a * (log_joint - math.log(a))
    if abs(weight - 1.0) > 1e-9:
        raise UsageError(f"configuration weights sum to {weight}, not 1")
    return total


def em_lower_bound(params, dataset: BagDataset, bag_alphas=None) -> float:
    """Dataset-level lower bound on the count log-likelihood.

    With ``bag_alphas`` omitted, each bag uses its exact configuration
    posterior, making the bound tight.
    """
    total = 0.0
    for j, bag in enumerate(dataset.bags):
        probs = _clamped_forward(params, bag.features)
        if bag_alphas is None:
            alpha = configuration_posterior(probs, bag.positive_count)
        else:
            alpha = bag_alphas[j]
        total += bag_lower_bound(probs, bag.positive_count, alpha)
    return total
