//! Uncertainty quantification: Monte Carlo maps, pixel-wise
//! bias/variance/error, Jacobian traces and SURE.

mod export;
mod maps;
mod sure;
mod trace;

pub use export::{encode_sure_csv, read_sure_csv, write_map, write_sure_csv, SureRow};
pub use maps::{bias_error_maps, monte_carlo_map, MapStats, MapSummary, MonteCarloDraws, UncertaintyMap};
pub use sure::{
    estimate_sigma2, mse, sure, sure_at, sure_mse_correlation, CorrelationReport, SureOptions, SureReport,
    DEFAULT_N_PROBES,
};
pub use trace::{default_epsilon, jacobian_trace_exact, jacobian_trace_mc, TraceEstimate, EXACT_TRACE_MAX_COORDS};
