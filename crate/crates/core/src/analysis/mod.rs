//! Rank estimation and landscape diagnostics.

mod bounds;
mod rank;
mod width;

pub use bounds::{
    critical_point_check, gradient_bounds, s_k_membership, BoundFactor, BoundReport,
    CriticalPointReport, MembershipReport,
};
pub use rank::{estimate_rank, singular_values, RankReport};
pub use width::{width_audit, WidthAudit};
