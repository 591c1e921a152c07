"""Empirical-Bayes FDR control for p-values stored at reduced precision.

The pipeline maps p-values to z-scores, bins them, fits a two-component
normal mixture to the bin counts by EM, and rejects the tests whose
posterior null probability falls below a data-driven threshold.
"""
__version__ = "0.1.0"

from .baselines import (Method, RejectionSet, bh_reject, by_reject, qvalue_reject, storey_pi0,
                        storey_qvalues)
from .binning import (BinnedCounts, BinSpec, DegenerateDataError, bin_count, bin_count_fd,
                      bin_count_scott, bin_count_sturges, bin_counts, make_bins, snap_edges)
from .encoding import (Kind, QuantizationScheme, TTypeScale, expected_finite_fraction,
                       p_type_encode, t_type_encode, truncated_null_variance, truncation_bound)
from .fdr_eb import FdrResult, decide, eb_control, fit_zscores, mfdr_hat, select_threshold, tau
from .mixture_fit import (ComponentCollapse, EmConfig, EStepQuantities, FitError, FitResult,
                          MixtureParams, component_bin_prob, e_step, fit_binned_em,
                          fit_normal_ml, fit_raw_em, log_marginal_likelihood, m_step)
from .rng_dist import (DomainError, NormalParams, RngStream, gen_ar1, norm_cdf, norm_pdf,
                       norm_quantile, norm_sf, sample_normal, sample_t_scaled)
from .simulation import (ExperimentInstance, Scenario, ScenarioSpec, SimSummary, apply_encoding,
                         fdp_tpp, gen_scenario, run_fit_study, run_null_study, run_study)
from .transforms import ZScoreSample, collect_zscores, fisher_corr_pvalue, p_to_z, z_to_p
