"""Learning from label proportions for small bags.

Trains binary instance classifiers when the only supervision is the number
of positive instances per bag: exact count-likelihood EM on the Poisson
binomial distribution, a normal-approximation variant, a proportion-loss
baseline, and a fully supervised skyline, plus the bagging and
cross-validation harness around them.
"""

__version__ = "0.1.0"

from .data import (
    Bag,
    BagDataset,
    Instance,
    SyntheticSpec,
    assign_folds,
    generate_synthetic,
    load_bags_csv,
    load_instances_csv,
    make_bags,
    save_bags_csv,
    save_instances_csv,
)
from .errors import CapacityError, FormatError, LlpError, NumericalError, UsageError
from .network import (
    ClassifierParams,
    OptimizerState,
    backward,
    forward,
    init_optimizer,
    init_params,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .objectives import (
    EmState,
    InferenceConfig,
    amle_loss,
    bag_moments,
    dllp_loss,
    e_step,
    em_lower_bound,
    m_step_loss,
    mle_llp_objective,
    predict,
    supervised_loss,
)
from .poisson_binomial import (
    bag_log_likelihood,
    configuration_posterior,
    enumerate_configurations,
    instance_posteriors,
    pb_dp,
    pb_enumerated,
)
from .training import (
    CrossValResult,
    EvalMetrics,
    TrainConfig,
    TrainingRecord,
    bag_size_sweep,
    cross_validate,
    evaluate,
    run_em_full_batch,
    train,
)
