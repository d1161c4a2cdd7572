"""Particle simulation and numerical checks for McKean-Vlasov SDEs."""
from .config import ExperimentConfig, InitialLaw, config_hash
from .coeffs import (ConditionReport, KernelCoefficients, Mollifier, ProductTerm, SamplePlan,
                     check_linear_growth, check_lipschitz, check_nondegeneracy,
                     mean_field_diffusion, mean_field_drift, mollify)
from .errors import (ConfigurationError, DegeneracyError, DomainError, MVSDEError,
                     NumericError, StreamCollisionError)
from .families import builtin
from .rng import StreamLineage
from .simulate import (MomentReport, ParticleEnsemble, PathBundle, apply_stopping,
                       euler_step, moment_report, simulate, spawn_independent_copy)

__version__ = "0.1.0"
