//! The bundled reference systems.
//!
//! * `tmpd`: Thue–Morse and period doubling on two unit intervals.
//! * `fibonacci`: a → ab, b → a with lengths (φ, 1) in the module Z[φ].
//! * `block2d`: two planar block rules on unit squares, expansion 2.
//! * `broken-covering`: a rule whose single child leaves a gap.

use crate::substitution::SubstitutionSystem;

pub const TMPD_JSON: &str = include_str!("../configs/tmpd.json");
pub const FIBONACCI_JSON: &str = include_str!("../configs/fibonacci.json");
pub const BLOCK2D_JSON: &str = include_str!("../configs/block2d.json");
pub const BROKEN_COVERING_JSON: &str = include_str!("../configs/broken-covering.json");

fn load(text: &str) -> SubstitutionSystem {
    match crate::cli::config::parse_system(text) {
        Ok((_, sys)) => sys,
        Err(e) => panic!("bundled system does not parse: {e}"),
    }
}

pub fn tmpd() -> SubstitutionSystem {
    load(TMPD_JSON)
}

pub fn fibonacci() -> SubstitutionSystem {
    load(FIBONACCI_JSON)
}

pub fn block2d() -> SubstitutionSystem {
    load(BLOCK2D_JSON)
}

pub fn broken_covering() -> SubstitutionSystem {
    load(BROKEN_COVERING_JSON)
}

/// A bundled system by name.
pub fn by_name(name: &str) -> Option<SubstitutionSystem> {
    match name {
        "tmpd" => Some(tmpd()),
        "fibonacci" => Some(fibonacci()),
        "block2d" => Some(block2d()),
        "broken-covering" => Some(broken_covering()),
        _ => None,
    }
}

/// Names and config texts of the bundled systems.
pub const BUNDLED: [(&str, &str); 4] = [
    ("tmpd", TMPD_JSON),
    ("fibonacci", FIBONACCI_JSON),
    ("block2d", BLOCK2D_JSON),
    ("broken-covering", BROKEN_COVERING_JSON),
];
