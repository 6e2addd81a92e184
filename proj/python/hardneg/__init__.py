"""Hard-negative contrastive learning for inertial + skeleton time series."""

from ._core import (
    ConfigError,
    DataError,
    Error,
    ShapeError,
    cli,
    debiased,
    generate_synthetic,
    hardness_weights,
    hnl,
    hnl_delta,
    info_nce,
    load_canonical,
    make_split,
    nt_xent,
    save_canonical,
    selfcheck,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "ShapeError",
    "cli",
    "debiased",
    "generate_synthetic",
    "hardness_weights",
    "hnl",
    "hnl_delta",
    "info_nce",
    "load_canonical",
    "make_split",
    "nt_xent",
    "save_canonical",
    "selfcheck",
]
