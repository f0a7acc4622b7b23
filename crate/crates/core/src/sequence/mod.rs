//! Pulse sequences: data model, text form, built-in programs and the sweep
//! runner.

pub mod builtin;
pub mod dsl;
pub mod model;
pub mod run;
pub mod trace;

pub use builtin::{builtin, Builtin, BuiltinParams};
pub use dsl::{parse_sequence, print_sequence};
pub use model::*;
pub use run::{run_normalized, run_sweep, Memory, RunOptions};
pub use trace::{fmt_num, Quantity, Trace};
