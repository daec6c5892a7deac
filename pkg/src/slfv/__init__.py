"""Event-driven simulator for a two-radius interface population model.

Subpackages:
  geometry   ball/lens volumes, the lineage jump kernel, uniform-ball sampling
  events     space-time Poisson stream of reproduction events
  forward    the allele-frequency field and its test functionals
  lineages   coalescing dual particles and excursion bookkeeping
  skewbm     exact skew Brownian motion sampling (the scaling limit)
  pde        transmission-condition heat-equation reference solver
  harness    verification suites and experiment orchestration
"""

from .geometry import ModelParams
from .skewbm import SkewParams

__all__ = ["ModelParams", "SkewParams"]
__version__ = "0.1.0"
