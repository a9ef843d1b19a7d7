//! Exact fiber censuses, bias statistics, strength (rank) bounds and
//! singular-locus measurements for polynomials over finite fields.
//!
//! The crate is organized bottom-up:
//!
//! - [`field`]: `F_q` and its extensions `k_n`, table-driven arithmetic.
//! - [`poly`]: sparse multivariate polynomials, parsing and compiled evaluation.
//! - [`census`]: exhaustive fiber counts, bias measures, projective point counts.
//! - [`rank`]: strength intervals, exact quadratic rank, homogenization sandwich.
//! - [`singular`]: Jacobian-criterion singular loci, dimension estimates,
//!   c-regularity and c-goodness verdicts.
//! - [`experiment`]: configuration, report commands and seeded ensembles used
//!   by the `ffbias` binary.

pub mod census;
pub mod experiment;
pub mod field;
pub mod linalg;
pub mod poly;
pub mod rank;
pub mod singular;

mod engine;

pub use census::{BiasReport, FiberCensus, ProjectiveCount};
pub use field::{make_field, FieldCtx, FieldElement, FieldError, FieldSpec};
pub use poly::{MultiPoly, PolyError};
pub use rank::{Factorization, RankInterval};
pub use singular::{GoodnessVerdict, SingularReport};

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: u32 = 1;
