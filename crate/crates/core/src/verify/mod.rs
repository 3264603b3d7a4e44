//! Oracles for the lemmas behind the scaling limit: exact enumeration on
//! small tori, deterministic refinement studies and Monte-Carlo estimators.

pub mod appendix;
pub mod enumeration;
pub mod montecarlo;

pub use appendix::{check_appendix_lemmas, AppendixReport, LemmaReport};
pub use enumeration::{
    check_equiv_dirichlet, check_moving_particle, dirichlet_form, dirichlet_i, generator_form,
    moving_particle_suite, LocalFunction,
};
pub use montecarlo::{
    check_time_regularity, estimate_bg_error, estimate_ibp_error, reverse_time_law_check,
    run_stationary, StationaryRun,
};
