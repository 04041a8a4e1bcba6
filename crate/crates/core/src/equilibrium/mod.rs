//! Equilibrium and monopoly solvers built on the assembled programs.

mod accounting;
mod checks;
mod gne;
mod io;
mod monopoly;

pub use accounting::{
    affine_demand_table, conservation_error, in_transit, monopoly_demand_table, propagate_states, FleetAccount,
};
pub use checks::{check_deterrence, check_symmetry, default_eps_zero, DeterrenceReport, SymmetryReport};
pub use gne::{
    check_profile_feasibility, solve_gne, solve_stochastic_gne, verify_gne, verify_profile, DeviationReport,
    GneSolution, RspOutcome, SolveSummary, DEFAULT_GAIN_TOL, PROFILE_FEAS_TOL,
};
pub use io::{GneDocument, MonopolyDocument, PartitionDocument};
pub use monopoly::{
    construct_duopoly_profile, monopoly_duopoly_equivalence, solve_monopoly, solve_partitioned_monopoly,
    EquivalenceReport, MonopolySolution, Partition,
};
