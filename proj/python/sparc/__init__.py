"""Planar spine-robot impedance control simulator."""

from ._core import (
    ChainModel,
    ConfigError,
    DegenerateFitError,
    FrictionParams,
    ImpedanceGains,
    LinkParams,
    MsdReference,
    SingularityError,
    StiffnessFit,
    __version__,
    bench_equilibrium,
    default_config_json,
    default_sparc_model,
    default_true_friction,
    dls_pinv,
    effective_mass,
    equilibrium_configuration,
    forward_kinematics,
    jacobian,
    mass_matrix,
    msd_reference,
    ols_fit,
    rnea,
    run_command,
    stribeck_torque,
    task_inertia,
    validate,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
