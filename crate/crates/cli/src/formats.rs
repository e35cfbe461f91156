//! Column sets of every CSV the commands write. `docs/formats.md` lists the
//! same headers.

pub const VERIFY_COLUMNS: [&str; 10] = [
    "case",
    "role",
    "reference_mean",
    "reference_std_error",
    "best_alpha_1",
    "best_alpha_2",
    "best_mean",
    "gain",
    "gain_in_std_errors",
    "certified",
];

pub const CURVE_COLUMNS: [&str; 6] = ["episode", "theta", "theta_s", "a1", "a2", "reward"];

pub const UPDATE_COLUMNS: [&str; 3] = ["step", "critic_loss", "actor_objective"];

pub const EVALUATION_COLUMNS: [&str; 10] = [
    "case",
    "states",
    "mean_a1",
    "std_a1",
    "theory_a1",
    "rel_err_a1",
    "mean_a2",
    "std_a2",
    "theory_a2",
    "rel_err_a2",
];

pub const TRANSITION_COLUMNS: [&str; 11] =
    ["game_id", "slot", "proximity", "q", "theta", "a1", "a2", "cp", "cq", "reward", "done"];

pub use crate::tournament::GAME_COLUMNS as TOURNAMENT_COLUMNS;

/// Every CSV kind with its columns, keyed by filename prefix.
pub const ALL: [(&str, &[&str]); 6] = [
    ("verify", &VERIFY_COLUMNS),
    ("curve", &CURVE_COLUMNS),
    ("updates", &UPDATE_COLUMNS),
    ("evaluation", &EVALUATION_COLUMNS),
    ("transitions", &TRANSITION_COLUMNS),
    ("tournament", &TOURNAMENT_COLUMNS),
];
