//! Weighted quadrature, the benchmark integrands, reference values and
//! convergence studies.

mod integrands;
mod reference;
mod study;

pub use integrands::{estimate, estimate_checked, eval_integrand, Integrand};
pub use reference::{
    reference_value, reference_value_with, tensor_gauss_hermite, Oracle, ReferenceCache,
    ReferenceOptions, ReferenceValue,
};
pub use study::{
    componentwise_sparse_grid, convergence_study, convergence_study_with, fit_rate, fit_slope,
    read_records_csv, rms_by_n, summarize, write_record_csv, write_record_json_line,
    write_records_csv, write_records_header, ConvergenceRecord, GridLadder, HaltonOptions, Method,
    RateSummary, StudyConfig, MIN_FIT_POINTS, RECORD_CSV_HEADER,
};
