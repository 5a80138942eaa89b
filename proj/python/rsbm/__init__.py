"""Rectified Schrodinger bridge trajectory generation (C++ core)."""

from ._rsbm import (  # noqa: F401
    BridgeConfig,
    Dataset,
    DivergenceError,
    DomainError,
    FormatError,
    Pipeline,
    ShapeError,
    Solver,
    TargetKind,
    bridge_mean,
    bridge_std,
    cos_sim,
    dlog_sigma_dt,
    fde,
    generate_dataset,
    interp_coeff,
    karras_schedule,
    kl_rectified,
    mse,
    nfe_of,
    oracle_sample,
    sample_bridge,
    to_velocity,
    train,
    uniform_schedule,
    velocity_variance,
    verify,
)

__version__ = "0.1.0"
