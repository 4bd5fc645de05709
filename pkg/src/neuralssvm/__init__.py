"""Structural SVMs over pairwise factor graphs with linear or neural factors."""
from .factors import (
    Architecture,
    FactorModel,
    FactorNet,
    FactorTables,
    LinearFactor,
    build_factor_tables,
    compatibility,
    init_model,
    net_forward,
    net_param_gradient,
)
from .graph_model import (
    Dataset,
    EdgeStateIndex,
    FactorGraphSample,
    InvalidInputError,
    joint_feature_interaction,
    joint_feature_unary,
    validate_sample,
)
from .inference import (
    EnergyInstance,
    FlowNetwork,
    alpha_expansion,
    infer_exact,
    infer_icm,
    loss_augmented_infer,
    max_flow,
)
from .objective import (
    ClassWeights,
    gradient_neural,
    hinge_term,
    objective_value,
    structured_loss,
    subgradient_linear,
)
from .training import (
    TrainConfig,
    ablate_predict,
    predict,
    train_alg1,
    train_alg2,
    train_bifurcated_linear,
    train_regime,
    train_unary_classifier,
)

__version__ = "0.1.0"
