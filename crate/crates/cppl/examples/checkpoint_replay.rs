//! Pause and resume: run a particle to its first checkpoint, copy the
//! paused state (only the live stack prefix is copied), and resume both
//! copies to identical results.
//!
//!     cargo run --release --example checkpoint_replay

use std::path::PathBuf;

use cppl::codegen::{compile, CompileOptions};
use cppl::dists::RandomSource;
use cppl::vm::{copy_state, run_single, sim, BlockRef};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/fig5.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions::default()).expect("compiles");
    let prog = &art.program;

    let mut particle = prog.init_state(RandomSource::seeded(2), 4096);
    let (resume_at, checkpoint) = sim(prog, particle.next, &mut particle).expect("sim");
    assert!(checkpoint);
    println!(
        "paused at checkpoint: resume block {:?}, stack pointer {}, log-weight {}",
        resume_at,
        particle.sp(),
        particle.log_weight
    );

    let mut replica = copy_state(&particle);
    println!("copied {} live cells (capacity {})", replica.stack.len(), 4096);

    run_single(prog, &mut particle).expect("original run");
    run_single(prog, &mut replica).expect("replica run");
    assert_eq!(particle.result(prog), replica.result(prog));
    assert_eq!(particle.log_weight, replica.log_weight);
    assert_eq!(particle.next, BlockRef::Stop);
    println!(
        "both continuations finished with result {:?} and log-weight {:.4}",
        particle.result(prog),
        particle.log_weight
    );
}
