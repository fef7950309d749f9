"""Exact and asymptotic KL analysis of deterministic diffusion sampling on Gaussian data."""

from .errors import (ConfigError, DegenerateGainError, DomainError, LambdaRangeError,
                     QuadratureError, SpectrumError)
from .schedule import (DDPMLinear, Family, FlowLinear, NoiseSchedule, Setting, TangentLaw,
                       VEGeometric, VPCosine, schedule_from_spec, tangent_schedule)
from .spectrum import PowerLawParams, Spectrum, default_spectrum, gamma_star, power_law_spectrum
from .kl_engine import KlReport, TimeGrid, exact_kl, kl_divergence, kl_report
from .discretize import LambdaSequence, export_steps, load_step_table, power_uniform, power_uniform_grid

__version__ = "0.1.0"
