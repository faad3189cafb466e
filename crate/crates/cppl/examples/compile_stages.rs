//! Walk a model through every compilation stage and print the canonical
//! dump of each: parsed AST, A-normal form, resample-reachability set,
//! abstract statements, decomposed blocks, frame layouts, and the final
//! block program.
//!
//!     cargo run --release --example compile_stages [model.cppl]

use std::path::PathBuf;

use cppl::cli::{cmd_compile, EmitStage};

fn main() {
    let model = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/fig5.cppl")
    });
    for (name, stage) in [
        ("ast", EmitStage::Ast),
        ("anf", EmitStage::Anf),
        ("analysis", EmitStage::Analysis),
        ("stmt", EmitStage::Stmt),
        ("blocks", EmitStage::Blocks),
        ("frames", EmitStage::Frames),
        ("pcfg", EmitStage::Pcfg),
    ] {
        println!("==== {} ====", name);
        match cmd_compile(&model, stage, None) {
            Ok(text) => println!("{}", text),
            Err(e) => {
                eprintln!("error: {}", e);
                std::process::exit(2);
            }
        }
    }
}
