//! Multi-objective decision engine for value-aligned training.
//!
//! Scenarios ([`scenario`]) compile into a finite [`model::Scenario`]. The
//! [`solver`] computes Pareto fronts over it, [`assessment`] scores and
//! debriefs executed trajectories, and [`protocol`] restricts the action
//! set with permit / forbid / oblige rules.

pub mod assessment;
pub mod diagnostic;
pub mod expr;
pub mod model;
pub mod protocol;
pub mod scenario;
pub mod solver;
pub mod value;

// The book's Rust listings run as doctests of this crate. The service
// chapter needs the service crate and is hosted there.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/solving.md")]
    mod solving {}
    #[doc = include_str!("../../../book/src/assessment.md")]
    mod assessment {}
    #[doc = include_str!("../../../book/src/protocols.md")]
    mod protocols {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
