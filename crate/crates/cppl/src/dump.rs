//! Canonical textual dumps of each pipeline stage, used by the
//! `compile --emit` command and the golden tests.

use std::fmt::Write;

use crate::ast::{Bind, Term};
use crate::codegen::{Artifacts, Payload};
use crate::frontend::pretty;
use crate::stmtir::{Next, Stmt, TStmt};

pub fn dump_ast(art: &Artifacts) -> String {
    pretty(&art.ast)
}

/// The ANF program re-assembled into parseable source: one recursive let
/// group with every function, then the main body.
pub fn dump_anf(art: &Artifacts) -> String {
    let prog = &art.anf;
    let main = prog.main.clone();
    let term = if prog.funcs.is_empty() {
        main
    } else {
        let binds = prog
            .funcs
            .iter()
            .map(|f| {
                let mut body = f.body.clone();
                for (p, ty) in f.params.iter().rev() {
                    body = Term::Lam {
                        param: p.clone(),
                        ann: Some(ty.clone()),
                        body: Box::new(body),
                    };
                }
                Bind {
                    name: f.name.clone(),
                    ann: None,
                    rhs: body,
                }
            })
            .collect();
        Term::RecLets {
            binds,
            body: Box::new(main),
        }
    };
    // declarations survive in front so the dump type-checks
    let mut decls = String::new();
    for (vname, def) in &prog.variants {
        writeln!(decls, "type {} in", vname).unwrap();
        for (cname, payload) in &def.cons {
            writeln!(decls, "con {} : {} -> {} in", cname, payload, vname).unwrap();
        }
    }
    format!("{}{}", decls, pretty(&term))
}

pub fn dump_analysis(art: &Artifacts) -> String {
    let mut out = String::new();
    for name in &art.resample_set {
        writeln!(out, "{}", name).unwrap();
    }
    out
}

pub fn dump_stmt(art: &Artifacts) -> String {
    let mut out = String::new();
    for (name, stmts) in &art.stmts {
        writeln!(out, "{}:", name).unwrap();
        write_stmt_list(&mut out, stmts, 0);
        out.push('\n');
    }
    out
}

fn write_stmt_list(out: &mut String, stmts: &[Stmt<Payload>], ind: usize) {
    let pad = "  ".repeat(ind);
    writeln!(out, "{}[", pad).unwrap();
    for (i, s) in stmts.iter().enumerate() {
        let sep = if i + 1 == stmts.len() { "" } else { "," };
        match s {
            Stmt::Other(_) => writeln!(out, "{}  other{}", pad, sep).unwrap(),
            Stmt::Checkpoint(_) => writeln!(out, "{}  checkpoint{}", pad, sep).unwrap(),
            Stmt::Call(_) => writeln!(out, "{}  call{}", pad, sep).unwrap(),
            Stmt::If(_, thn, els) => {
                writeln!(out, "{}  if", pad).unwrap();
                write_stmt_list(out, thn, ind + 1);
                write_stmt_list(out, els, ind + 1);
                if !sep.is_empty() {
                    let trimmed = out.trim_end_matches('\n').len();
                    out.truncate(trimmed);
                    writeln!(out, ",").unwrap();
                }
            }
        }
    }
    writeln!(out, "{}]", pad).unwrap();
}

pub fn dump_blocks(art: &Artifacts) -> String {
    let mut out = String::new();
    for (name, d) in &art.decomposed {
        for (id, stmts) in &d.blocks {
            writeln!(out, "{} block {}:", name, id).unwrap();
            write_tstmt_list(&mut out, stmts, 0);
        }
        out.push('\n');
    }
    out
}

fn next_str(n: &Next) -> String {
    match n {
        Next::Return => "return".into(),
        Next::Block(i) => i.to_string(),
    }
}

fn write_tstmt_list(out: &mut String, stmts: &[TStmt<Payload>], ind: usize) {
    let pad = "  ".repeat(ind);
    writeln!(out, "{}[", pad).unwrap();
    for (i, s) in stmts.iter().enumerate() {
        let sep = if i + 1 == stmts.len() { "" } else { "," };
        match s {
            TStmt::Other(_) => writeln!(out, "{}  other{}", pad, sep).unwrap(),
            TStmt::Checkpoint(_, n) => {
                writeln!(out, "{}  checkpoint {}{}", pad, next_str(n), sep).unwrap()
            }
            TStmt::Call(_, n) => writeln!(out, "{}  call {}{}", pad, next_str(n), sep).unwrap(),
            TStmt::Jump(n) => writeln!(out, "{}  jump {}{}", pad, next_str(n), sep).unwrap(),
            TStmt::If(_, thn, els) => {
                writeln!(out, "{}  if", pad).unwrap();
                write_tstmt_list(out, thn, ind + 1);
                write_tstmt_list(out, els, ind + 1);
                if !sep.is_empty() {
                    let trimmed = out.trim_end_matches('\n').len();
                    out.truncate(trimmed);
                    writeln!(out, ",").unwrap();
                }
            }
        }
    }
    writeln!(out, "{}]", pad).unwrap();
}

pub fn dump_frames(art: &Artifacts) -> String {
    let mut out = String::new();
    for (name, layout) in &art.program.frame_layouts {
        write!(out, "{}: {{ra: {}, retValLoc: {}", name, layout.ra_slot, layout.ret_val_loc_slot).unwrap();
        for (p, off) in &layout.param_slots {
            write!(out, ", {}: {}", p, off).unwrap();
        }
        for (l, off) in &layout.local_slots {
            write!(out, ", {}: {}", l, off).unwrap();
        }
        writeln!(out, "}} frameSize {}", layout.frame_size).unwrap();
    }
    out
}

pub fn dump_pcfg(art: &Artifacts) -> String {
    let prog = &art.program;
    let mut out = String::new();
    writeln!(out, "entry: block {}", prog.entry).unwrap();
    writeln!(out, "result cells: {} ({})", prog.result_cells, prog.result_ty).unwrap();
    if !prog.pool.is_empty() {
        writeln!(out, "constant pool: {} cells", prog.pool.len()).unwrap();
    }
    for (i, b) in prog.blocks.iter().enumerate() {
        writeln!(out, "block {} ({}), {} regs:", i, prog.block_owner[i], b.regs).unwrap();
        for ins in &b.instrs {
            write_instr(&mut out, ins, 1);
        }
    }
    for f in &prog.direct_fns {
        writeln!(
            out,
            "direct {} ({} param cells, {} ret cells), {} regs:",
            f.name, f.param_cells, f.ret_cells, f.regs
        )
        .unwrap();
        for ins in &f.instrs {
            write_instr(&mut out, ins, 1);
        }
    }
    out
}

fn write_instr(out: &mut String, ins: &crate::vm::Instr, ind: usize) {
    let pad = "  ".repeat(ind);
    match ins {
        crate::vm::Instr::Branch { cond, thn, els } => {
            writeln!(out, "{}branch r{} {{", pad, cond).unwrap();
            for i in thn {
                write_instr(out, i, ind + 1);
            }
            writeln!(out, "{}}} else {{", pad).unwrap();
            for i in els {
                write_instr(out, i, ind + 1);
            }
            writeln!(out, "{}}}", pad).unwrap();
        }
        other => writeln!(out, "{}{:?}", pad, other).unwrap(),
    }
}
