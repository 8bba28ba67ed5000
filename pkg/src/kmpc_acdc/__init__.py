"""Koopman MPC for a single-phase AC-DC boost rectifier."""

from .config import ConfigError, RunConfig, load_config
from .edmd import KoopmanModel, fit_model
from .gssa import gssa, lift
from .kmpc import KoopmanMPC, MpcConfig
from .params import ConverterParams, InfeasibleOperatingPoint, feasible_current, nominal_inputs
from .plant import Plant
from .qp import QpProblem, solve_qp

__all__ = ["ConfigError", "RunConfig", "load_config", "KoopmanModel", "fit_model", "gssa", "lift",
           "KoopmanMPC", "MpcConfig", "ConverterParams", "InfeasibleOperatingPoint",
           "feasible_current", "nominal_inputs", "Plant", "QpProblem", "solve_qp"]
