//! cppl: a small universal probabilistic programming language compiled to
//! block control-flow graphs and run with parallel SMC inference.
//!
//! The pipeline: parse/desugar/typecheck ([`frontend`]), A-normal form
//! ([`anf`]), resample-reachability analysis ([`analysis`]), lowering to
//! abstract statements and block decomposition ([`stmtir`]), stack-frame
//! layout ([`frames`]), instruction selection ([`codegen`]) into a block
//! program executed by the particle VM ([`vm`]), and the SMC engine
//! ([`smc`]). [`oracle`] holds independent reference implementations used
//! by tests and examples.

use mimalloc::MiMalloc;

/// SMC resampling bounces particle stacks between the engine thread and
/// the propagation workers every epoch; a thread-caching allocator with
/// cheap cross-thread frees keeps that from serializing the workers.
#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

pub mod ast;
pub mod error;
pub mod frontend;

pub use ast::{Builtin, Const, DistName, Ident, Pattern, Term, Type};
pub use error::{CompileError, Error, ParseError, SmcError, TypeError, VmError};
pub use frontend::{desugar, parse, parse_lenient, pretty, typecheck_lite, TypedProgram};

pub mod analysis;
pub mod anf;
pub mod stmtir;
#[doc(hidden)]
pub mod testsupport;
pub mod cli;
pub mod codegen;
pub mod dump;
pub mod report;
pub mod oracle;
pub mod smc;
pub mod dists;
pub mod frames;
pub mod vm;
