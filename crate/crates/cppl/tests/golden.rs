//! Stage-dump goldens and runtime invariants that sit between the unit
//! tests and the acceptance suite: canonical dump texts for the worked
//! example, dump round-trips through the stage validators, checkpoint
//! pause/resume fidelity, and per-particle divergence.

use std::path::{Path, PathBuf};

use cppl::anf::validate_anf;
use cppl::cli::{cmd_compile, EmitStage};
use cppl::codegen::{compile, CompileOptions};
use cppl::dists::{RandomSource, Value};
use cppl::frontend::{parse_lenient, typecheck_lite};
use cppl::vm::{copy_state, run_single, sim, sim_step, BlockRef};

fn model_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

#[test]
fn blocks_dump_matches_golden() {
    let out = cmd_compile(&model_path("fig5.cppl"), EmitStage::Blocks, None).unwrap();
    let expect = "\
f block 0:
[
  other,
  checkpoint 1
]
f block 1:
[
  other,
  if
  [
    other
  ]
  [
    other
  ],
  other,
  if
  [
    other,
    if
    [
      other,
      jump 2
    ]
    [
      call 2
    ]
  ]
  [
    other,
    jump 3
  ]
]
f block 2:
[
  other,
  jump 3
]
f block 3:
[
  other,
  jump return
]

main block 0:
[
  call 1
]
main block 1:
[
  other,
  jump return
]

";
    assert_eq!(out, expect);
}

#[test]
fn frames_dump_matches_golden() {
    let out = cmd_compile(&model_path("fig5.cppl"), EmitStage::Frames, None).unwrap();
    let expect = "\
f: {ra: 0, retValLoc: 1, p: 2, s1: 3, s3: 4, s4: 5} frameSize 6
main: {ra: 0, retValLoc: 1, t4: 2} frameSize 3
";
    assert_eq!(out, expect);
}

#[test]
fn analysis_dump_lists_resample_set() {
    let out = cmd_compile(&model_path("fig5.cppl"), EmitStage::Analysis, None).unwrap();
    assert_eq!(out, "f\n");
    let out = cmd_compile(&model_path("crbd_toy.cppl"), EmitStage::Analysis, None).unwrap();
    assert_eq!(out, "simTree\n");
}

#[test]
fn stmt_dump_mirrors_abstract_listing() {
    let out = cmd_compile(&model_path("fig5.cppl"), EmitStage::Stmt, None).unwrap();
    let f_part: String = out.split("main:").next().unwrap().to_string();
    let expect = "\
f:
[
  other,
  checkpoint,
  other,
  if
  [
    other
  ]
  [
    other
  ],
  other,
  if
  [
    other,
    if
    [
      other
    ]
    [
      call
    ],
    other
  ]
  [
    other
  ],
  other
]

";
    assert_eq!(f_part, expect);
}

/// The ANF dump re-parses (through the lenient entry point, since it
/// contains compiler temporaries), type-checks, and every body satisfies
/// the ANF validator.
#[test]
fn anf_dump_round_trips_through_validator() {
    for model in ["geometric.cppl", "fig5.cppl", "crbd_toy.cppl"] {
        let dump = cmd_compile(&model_path(model), EmitStage::Anf, None).unwrap();
        let t = parse_lenient(&dump).unwrap_or_else(|e| panic!("{}: {}\n{}", model, e, dump));
        let prog = typecheck_lite(&t).unwrap_or_else(|e| panic!("{}: {}", model, e));
        for f in &prog.funcs {
            assert!(validate_anf(&f.body), "{}: function {}", model, f.name);
        }
        assert!(validate_anf(&prog.main), "{}: main", model);
    }
}

#[test]
fn ast_dump_round_trips() {
    let data = model_path("ssm_data.csv");
    for model in ["geometric.cppl", "ssm.cppl"] {
        let with_data = (model == "ssm.cppl").then(|| data.as_path());
        let dump = cmd_compile(&model_path(model), EmitStage::Ast, with_data).unwrap();
        let t = parse_lenient(&dump).unwrap();
        let src = std::fs::read_to_string(model_path(model)).unwrap();
        assert_eq!(t, cppl::frontend::parse(&src).unwrap(), "{}", model);
    }
}

#[test]
fn pcfg_dump_names_entry_and_blocks() {
    let out = cmd_compile(&model_path("fig5.cppl"), EmitStage::Pcfg, None).unwrap();
    assert!(out.starts_with("entry: block 0\n"), "{}", &out[..60]);
    assert!(out.contains("block 2 (f)"));
    assert!(out.contains("Halt"));
}

/// The execution shape of the state-space model: each step block ends at
/// a checkpoint (flag true), interleaved with the non-checkpoint entry
/// transition, and the final transition lands on stop.
#[test]
fn ssm_trace_shape() {
    let ys = vec![0.5, 1.0, 1.5];
    let src = std::fs::read_to_string(model_path("ssm.cppl")).unwrap();
    let art = compile(&src, &CompileOptions { data: Some(ys) }).unwrap();
    let mut s = art.program.init_state(RandomSource::seeded(3), 4096);

    let mut flags = Vec::new();
    let mut b = s.next;
    loop {
        let (nb, cp) = sim_step(&art.program, b, &mut s).unwrap();
        flags.push(cp);
        if nb == BlockRef::Stop {
            break;
        }
        b = nb;
    }
    // three observations -> three checkpoints; the rest of the chain is
    // non-checkpoint transitions ending at stop
    assert_eq!(flags.iter().filter(|f| **f).count(), 3, "{:?}", flags);
    assert_eq!(flags.last(), Some(&false));
    assert_eq!(s.next, BlockRef::Stop);
}

/// Pause/resume fidelity: replaying from a state copied at a checkpoint,
/// with the same generator state, produces the same continuation.
#[test]
fn pause_resume_fidelity() {
    let src = std::fs::read_to_string(model_path("fig5.cppl")).unwrap();
    let art = compile(&src, &CompileOptions::default()).unwrap();
    let mut s = art.program.init_state(RandomSource::seeded(99), 4096);

    // run to the first checkpoint
    let (b, cp) = sim(&art.program, s.next, &mut s).unwrap();
    assert!(cp);
    let mut copy = copy_state(&s);
    assert_eq!(copy.stack, s.stack);

    run_single(&art.program, &mut s).unwrap();
    copy.next = b;
    run_single(&art.program, &mut copy).unwrap();
    assert_eq!(s.result(&art.program), copy.result(&art.program));
    assert_eq!(s.log_weight, copy.log_weight);
}

/// Two particles with divergent coin flips occupy different blocks at
/// their first checkpoints.
#[test]
fn divergent_particles_sit_in_different_blocks() {
    let src = std::fs::read_to_string(model_path("geometric_rs.cppl")).unwrap();
    let art = compile(&src, &CompileOptions::default()).unwrap();

    // heads: continues through the loop checkpoint; tails: runs to stop
    let mut heads = art.program.init_state(
        RandomSource::tape(vec![Value::Bool(true), Value::Bool(false)]),
        4096,
    );
    let mut tails = art
        .program
        .init_state(RandomSource::tape(vec![Value::Bool(false)]), 4096);

    let (b_heads, cp_heads) = sim(&art.program, heads.next, &mut heads).unwrap();
    let (b_tails, cp_tails) = sim(&art.program, tails.next, &mut tails).unwrap();
    assert!(cp_heads && !cp_tails);
    assert_ne!(b_heads, b_tails);
    assert_eq!(b_tails, BlockRef::Stop);
    assert_ne!(heads.next, tails.next);
}

/// observe x d is program-equivalent to weight (log density of x under
/// d): bitwise-equal log-weights when the density literal round-trips.
#[test]
fn observe_equals_weight_of_log_density() {
    let d = cppl::dists::DistParams::new(
        cppl::ast::DistName::Normal,
        &[Value::Float(0.0), Value::Float(1.0)],
    )
    .unwrap();
    let density = d.log_density(&Value::Float(0.3));

    let observe_src = "observe 0.3 (Normal 0.0 1.0);\n0";
    let weight_src = format!("weight {:?};\n0", density);

    let run = |src: &str| {
        let art = compile(src, &CompileOptions::default()).unwrap();
        let mut s = art.program.init_state(RandomSource::seeded(1), 64);
        run_single(&art.program, &mut s).unwrap();
        s.log_weight
    };
    assert_eq!(run(observe_src), run(&weight_src));
}

/// After resampling copies relocate particles, every relative address
/// stored on a live stack still points inside the live prefix.
#[test]
fn relative_addresses_survive_resampling() {
    let src = std::fs::read_to_string(model_path("crbd_toy.cppl")).unwrap();
    let art = compile(&src, &CompileOptions::default()).unwrap();
    let cfg = cppl::smc::SmcConfig {
        particles: 300,
        root_seed: 21,
        ..Default::default()
    };
    let r = cppl::smc::run_smc(&art.program, &cfg).unwrap();
    assert!(r.resample_count > 0);
    for s in &r.states {
        assert!(cppl::vm::relative_addresses_valid(s));
    }
}
