"""Entire-space cross networks for individual treatment effect estimation."""

__version__ = "0.1.0"

from .data_io import Dataset, TableSchema, batch_iter, fit_standardizer, read_table, write_table
from .dgp import DgpConfig, default_config, dgp_surfaces, generate
from .metrics import (
    RunMetrics,
    aggregate,
    ate_error,
    att_error,
    auuc,
    auuc_oracle,
    pehe,
    relative_improvement,
)
from .model import (
    KINDS,
    ForwardBundle,
    LossWeights,
    ModelParams,
    TrainConfig,
    forward_heads,
    init_model,
    loss_descn,
    loss_esn,
    loss_tarnet,
    loss_xnetwork,
    predict_ite,
    train,
)
