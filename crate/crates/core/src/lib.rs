//! Numerical laboratory for variational (minmax) solutions of one-dimensional
//! Hamilton-Jacobi equations.
//!
//! The crate propagates exact Lagrangian fronts `(L, f_L)` under Hamiltonian
//! flows, extracts continuous graph selectors and spectral numbers from the
//! multivalued fronts, builds discrete generating functions for rescaled
//! flows, and estimates effective Hamiltonians for periodic, quasi-periodic,
//! point-process and suspended ensembles. Independent oracles (cubical
//! sublevel persistence, Lax-Oleinik splitting, cell-problem shooting) back
//! every selector-route quantity on small instances.
//!
//! Modules follow the pipeline order:
//!
//! * [`model`] - Hamiltonian fields, truncation, stochastic ensembles
//! * [`flow`] - characteristic integration with action transport
//! * [`front`] - adaptive polyline fronts `(x, p, a)`
//! * [`selector`] - graph selectors `u_L` and spectral numbers
//! * [`genfun`] - one-step and iterated discrete generating functions
//! * [`oracle`] - persistence, Lax-Oleinik and cell-problem ground truth
//! * [`homogenize`] - effective Hamiltonian and Cauchy-problem experiments
//! * [`ergodic`] - torus-action density, Diophantine bases, discrepancy

pub mod ergodic;
pub mod flow;
pub mod front;
pub mod genfun;
pub mod homogenize;
pub mod interp;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod selector;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A spec, ensemble or parameter failed validation at construction.
    InvalidSpec(String),
    /// Adaptive step-size underflow; carries the last accepted `(t, x, p, a)`.
    StepUnderflow { t: f64, x: f64, p: f64, a: f64 },
    /// Front refinement exceeded the vertex cap; names the first violating segment.
    RefinementExplosion { x_lo: f64, x_hi: f64 },
    /// Selector domain is not covered by the front's x-projection.
    DomainNotCovered { lo: f64, hi: f64, have_lo: f64, have_hi: f64 },
    /// Branch event the continuation rule cannot resolve; carries the location.
    SelectorAmbiguity { x: f64, detail: String },
    /// Generating-function fixed point failed to contract.
    NonContraction { eta: f64, detail: String },
    /// Dilated argument left the tabulated window.
    WindowEscape { arg: f64, lo: f64, hi: f64 },
    /// Persistence grid too coarse to separate critical values.
    RefineGrid(String),
    /// Search bound exhausted (Diophantine basis, seeds, ...).
    SearchExhausted(String),
    /// Operation not applicable to this input.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(m) => write!(f, "invalid spec: {m}"),
            Error::StepUnderflow { t, x, p, a } => write!(
                f,
                "step underflow at t={t}; last good state x={x} p={p} a={a}"
            ),
            Error::RefinementExplosion { x_lo, x_hi } => write!(
                f,
                "front refinement exceeded vertex cap; first violating segment x in [{x_lo}, {x_hi}]"
            ),
            Error::DomainNotCovered { lo, hi, have_lo, have_hi } => write!(
                f,
                "domain [{lo}, {hi}] not covered by front x-range [{have_lo}, {have_hi}]"
            ),
            Error::SelectorAmbiguity { x, detail } => {
                write!(f, "unresolved branch event at x={x}: {detail}")
            }
            Error::NonContraction { eta, detail } => write!(
                f,
                "generating-function solve did not contract at eta={eta} ({detail}); use a smaller eta"
            ),
            Error::WindowEscape { arg, lo, hi } => {
                write!(f, "argument {arg} escapes tabulated window [{lo}, {hi}]")
            }
            Error::RefineGrid(m) => write!(f, "refine grid: {m}"),
            Error::SearchExhausted(m) => write!(f, "search bound exhausted: {m}"),
            Error::Unsupported(m) => write!(f, "unsupported: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
