//! The testing oracle: record the random choices of a direct tree-walk
//! of the model, replay the identical tape through the compiled block
//! program, and check that value and log-weight agree exactly.
//!
//!     cargo run --release --example reference_interpreter

use std::path::PathBuf;

use cppl::codegen::{compile, CompileOptions};
use cppl::dists::RandomSource;
use cppl::oracle::{decode_cells, interpret_direct};
use cppl::vm::run_single;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/geometric.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions::default()).expect("compiles");

    for seed in 0..5u64 {
        let mut recorder = RandomSource::recording(seed);
        let (oracle_value, oracle_lw) =
            interpret_direct(&art.anf, &mut recorder, None).expect("oracle run");
        let tape = recorder.into_trace().unwrap();

        let mut state = art
            .program
            .init_state(RandomSource::tape(tape.clone()), 4096);
        run_single(&art.program, &mut state).expect("vm run");
        let vm_value = decode_cells(
            &art.anf,
            &art.program,
            state.result(&art.program),
            &art.anf.main_ty,
        )
        .unwrap();

        println!(
            "seed {}: {} draws, oracle {:?} (lw {:.4}) == vm {:?} (lw {:.4})",
            seed,
            tape.len(),
            oracle_value,
            oracle_lw,
            vm_value,
            state.log_weight
        );
        assert_eq!(oracle_value, vm_value);
        assert_eq!(oracle_lw, state.log_weight);
    }
}
