"""flowsense: particle-filter soft sensing of multiphase zone flow rates.

Estimates per-zone mass flow rates in a well from gauge pressure and
temperature series, using an auxiliary particle filter over a Markov
jump process.  The jump-noise variances can be fixed manually, fitted
offline by fixed-interval likelihood optimization, or tracked online by
a lag-1 EM smoother.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .jumpmodel import (JumpProcessSpec, MultiplierDistribution,
                        gmm_transition_pdf, propagate, sample_multipliers,
                        transition_logpdf_given_theta)
from .wellsim import (GaugeRecord, ObservationNoiseModel, WellGeometry,
                      WellObservationModel, WellPhysics, ZoneProperties,
                      observation_loglik, observe, simulate_gauges,
                      simulate_gauges_batch)
from .apf import (DegeneracyError, FilterState, ParticleEnsemble, apf_step,
                  aux_resample, effective_sample_size, filter_step,
                  initial_ensemble, posterior_summary, predict_step, run_apf)
from .interval import (IntervalCostEvaluation, OptimizerReport,
                       interval_cost, optimize_interval)
from .lag1em import (EmConfig, EmIterationTrace, EmSampleBank,
                     build_sample_bank, em_estimate, em_iterate, em_update,
                     omega_weights, surrogate_value)
from .config import Scenario, TruthSchedule, load_scenario
from .experiment import (RunReport, default_scenario, rmse_report,
                         run_filter, synthesize_observations, time_mean_rmse)
