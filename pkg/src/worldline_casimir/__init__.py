"""Worldline Monte Carlo for thermal Casimir forces of a Dirichlet scalar.

Parallel plates (closed geometry) and a half-plate perpendicular above an
infinite plate (open geometry).
"""
from .estimator import ForceResult, MCEstimate, force_ratio, mean_stderr, sweep
from .geometry import (GeometryConfig, GeometryKind, PerpendicularObservable, crossing_extent,
                       parallel_observable, perpendicular_observable)
from .loopgen import (LoopEnsemble, WorldlineLoop, extent, generate_ensemble, generate_unit_loop,
                      load_ensemble, open_ensemble, save_ensemble)
from .reference import (parallel_force_analytic, parallel_leading_correction,
                        perpendicular_leading_correction, room_temperature_aT)
from .thermal import (ThermalParams, kernel_parallel, kernel_perpendicular, perp_loop_integrand,
                      winding_sum)

__version__ = "0.1.0"
