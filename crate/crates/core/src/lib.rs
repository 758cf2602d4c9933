//! Online scheduling of jobs with deadlines and slack on unrelated machines.
//!
//! Each job `j` has a release `r_j`, deadline `d_j`, weight `w_j` and a
//! processing time `p_ij` per machine (possibly infinite), with slack
//! `d_j − r_j ≥ (1+ε)·p_ij` on every machine where it can run. An online
//! scheduler learns of a job at its release, may interrupt running work, and
//! earns `w_j` only for jobs it completes by their deadlines.
//!
//! The crate provides:
//!
//! * [`model`]: instances, validation and canonical JSON.
//! * [`policy`]: the two-threshold admission rule, a single-threshold
//!   baseline, and the per-event admission routine.
//! * [`engine`]: an exact discrete-event simulator and post-hoc checkers.
//! * [`oracle`]: the offline non-migratory optimum for small instances.
//! * [`generators`]: adversarial example families and random instances.
//! * [`harness`]: ratio sweeps and the invariant suite.
//!
//! All arithmetic is exact ([`Rational`]), so every comparison in the
//! simulator and the checkers is decided without rounding.
//!
//! ```
//! use slacksched::{simulate, AdmissionPolicy, Instance};
//!
//! let inst = Instance::from_json(
//!     r#"{ "machines": 1, "epsilon": "1/2", "jobs": [
//!         { "id": 0, "r": "0", "d": "3", "w": "1", "p": ["2"] } ] }"#,
//! )?;
//! let policy = AdmissionPolicy::two_threshold(&inst.epsilon)?;
//! let out = simulate(&inst, &policy)?;
//! assert_eq!(out.weights.finished.to_string(), "1");
//! # Ok::<(), slacksched::Error>(())
//! ```

pub mod engine;
mod error;
pub mod generators;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod policy;
mod rational;

pub use engine::{check_feasibility, simulate, Outcome};
pub use error::{Error, Result};
pub use model::{Instance, Job, ProcTime};
pub use policy::{AdmissionPolicy, PolicySpec};
pub use rational::{rat, ParseRationalError, Rational};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/admission.md")]
    mod admission {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/lower-bounds.md")]
    mod lower_bounds {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
