"""Exact moments and simulation of index-1 self-similar Markov processes.

The driving process is a spectrally negative, possibly killed Levy process
given by a :class:`LevyTriplet`.  Integer moments come in closed form from its
Laplace exponent; the process itself can be simulated through the Lamperti
time change (starts ``z > 0``) or through its jump SDE (any ``z >= 0``), and
:mod:`pssmp.verify` compares the two against the formula.
"""

from .ensemble import Ensemble, EnsembleError, SimPath
from .lamperti import (LevyPath, LevyPathConfig, TimeChange, exponential_functional, lamperti_ensemble,
                       lamperti_path, sample_levy_path, simulate_lamperti_path, time_change)
from .levy import (AssumptionError, AtomMeasure, DensityMeasure, LaplaceExponent, LevyTriplet, ModelError,
                   QuadratureError, RegimeReport, check_a2, classify_regime, cramer_root, custom_table,
                   exp_tilted_stable, load_triplet, psi, triplet_from_dict, validate_triplet)
from .moments import (MomentOverflowError, MomentQuery, MomentTable, determinacy_check, entire_moment,
                      exact_moment_table, moment_polynomial, moment_recursion, psi_ladder)
from .sde import (SdeConfig, SdeEventLog, effective_rates, martingale_components, sde_ensemble, sde_step,
                  simulate_sde_path)
from .verify import (ComparisonReport, McEstimate, compare_to_formula, cross_validate, estimate_moments,
                     martingale_zero_mean_test, scaling_check)

__version__ = "0.1.0"
