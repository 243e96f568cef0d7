"""Budget-constrained robust sensor placement for an elliptic inverse problem."""

from ._pyroed import (
    Box,
    ConditionalBernoulli,
    ConfigError,
    ExperimentConfig,
    Problem,
    RoedError,
    compare,
    info_gain_low_rank,
    landscape,
    load_config,
    parse_config,
    r_poly,
    run,
    sensor_grid,
    set_log_level,
    verify,
)

__all__ = [
    "Box",
    "ConditionalBernoulli",
    "ConfigError",
    "ExperimentConfig",
    "Problem",
    "RoedError",
    "compare",
    "info_gain_low_rank",
    "landscape",
    "load_config",
    "parse_config",
    "r_poly",
    "run",
    "sensor_grid",
    "set_log_level",
    "verify",
]
