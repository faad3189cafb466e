//! Stack-frame layouts for decomposed functions.
//!
//! Every decomposed function gets a fixed-size frame on the particle
//! stack, laid out as `[ra, retValLoc, params..., locals...]`: the block
//! return address, the stack-relative address where the return value is
//! written, one slot per parameter, and a slot for each local that lives
//! across a block boundary (plus call destinations, which must be
//! addressable because the callee writes them through `retValLoc`).
//! All frame sizes are compile-time constants; addresses stored in frames
//! are relative to the stack base so resampling can relocate particles.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ast::Ident;
use crate::codegen::{Atom, CallPayload, Cond, Dest, OtherOp, Payload};
use crate::frontend::typecheck::TypedProgram;
use crate::stmtir::{BlockId, TStmt};

/// A stack address relative to the stack base, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackAddr(pub u32);

#[derive(Debug, Clone)]
pub struct FrameLayout {
    pub ra_slot: usize,
    pub ret_val_loc_slot: usize,
    /// Parameter name -> offset, in declaration order.
    pub param_slots: Vec<(Ident, usize)>,
    /// Cross-block locals and call destinations, in first-definition
    /// order.
    pub local_slots: Vec<(Ident, usize)>,
    pub frame_size: usize,
    slots: HashMap<Ident, (usize, usize)>,
}

impl FrameLayout {
    /// Offset and size of a named slot, if the variable is framed.
    pub fn slot(&self, name: &str) -> Option<(usize, usize)> {
        self.slots.get(name).copied()
    }
}

/// Variables defined in one block and used in a different one. Branch
/// paths of intra-block ifs count as the same block.
pub fn cross_block_locals(blocks: &BTreeMap<BlockId, Vec<TStmt<Payload>>>) -> BTreeSet<Ident> {
    let mut defs: HashMap<Ident, BTreeSet<BlockId>> = HashMap::new();
    let mut uses: HashMap<Ident, BTreeSet<BlockId>> = HashMap::new();
    for (id, stmts) in blocks {
        scan_list(stmts, *id, &mut defs, &mut uses);
    }
    let mut out = BTreeSet::new();
    for (var, use_blocks) in &uses {
        if let Some(def_blocks) = defs.get(var) {
            if use_blocks.iter().any(|u| !def_blocks.contains(u)) || def_blocks.len() > 1 {
                out.insert(var.clone());
            }
        }
    }
    out
}

/// Call destinations anywhere in the blocks; the callee writes these
/// through a relative address, so they always need a frame slot.
pub fn call_destinations(blocks: &BTreeMap<BlockId, Vec<TStmt<Payload>>>) -> Vec<Ident> {
    let mut out = Vec::new();
    for stmts in blocks.values() {
        collect_call_dsts(stmts, &mut out);
    }
    out
}

fn collect_call_dsts(stmts: &[TStmt<Payload>], out: &mut Vec<Ident>) {
    for s in stmts {
        match s {
            TStmt::Call(Payload::Call(CallPayload { dst, .. }), _) => out.push(dst.clone()),
            TStmt::If(_, a, b) => {
                collect_call_dsts(a, out);
                collect_call_dsts(b, out);
            }
            _ => {}
        }
    }
}

/// Binder order of the function body (parameters excluded): lets in
/// lexical order, then pattern variables where they appear. Gives the
/// frame layout the source's own ordering.
fn binder_order(body: &crate::ast::Term) -> Vec<Ident> {
    use crate::ast::Term;
    fn walk(t: &Term, out: &mut Vec<Ident>) {
        match t {
            Term::Let { name, rhs, body, .. } => {
                out.push(name.clone());
                walk(rhs, out);
                walk(body, out);
            }
            Term::Match { pat, thn, els, .. } => {
                for v in pat.bound_vars() {
                    out.push(v.clone());
                }
                walk(thn, out);
                walk(els, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(body, &mut out);
    out
}

/// Frame layout for one decomposed function: `[ra, retValLoc, params...,
/// cross-block locals and call destinations...]`, sized by each slot's cell
/// count.
pub fn compute_layout(
    prog: &TypedProgram,
    params: &[(Ident, crate::ast::Type)],
    blocks: &BTreeMap<BlockId, Vec<TStmt<Payload>>>,
    body: &crate::ast::Term,
) -> FrameLayout {
    let cross = cross_block_locals(blocks);
    let call_dsts: BTreeSet<Ident> = call_destinations(blocks).into_iter().collect();
    let param_names: BTreeSet<&Ident> = params.iter().map(|(n, _)| n).collect();

    let mut slots = HashMap::new();
    let mut offset = 0usize;
    let ra_slot = offset;
    offset += 1;
    let ret_val_loc_slot = offset;
    offset += 1;

    let mut param_slots = Vec::new();
    for (name, ty) in params {
        let size = prog.size_of(ty);
        slots.insert(name.clone(), (offset, size));
        param_slots.push((name.clone(), offset));
        offset += size;
    }

    let mut local_slots = Vec::new();
    let mut placed = BTreeSet::new();
    for name in binder_order(body) {
        if param_names.contains(&name) || placed.contains(&name) {
            continue;
        }
        if cross.contains(&name) || call_dsts.contains(&name) {
            placed.insert(name.clone());
            let ty = &prog.types[&name];
            let size = prog.size_of(ty);
            slots.insert(name.clone(), (offset, size));
            local_slots.push((name.clone(), offset));
            offset += size;
        }
    }

    FrameLayout {
        ra_slot,
        ret_val_loc_slot,
        param_slots,
        local_slots,
        frame_size: offset,
        slots,
    }
}

fn scan_list(
    stmts: &[TStmt<Payload>],
    block: BlockId,
    defs: &mut HashMap<Ident, BTreeSet<BlockId>>,
    uses: &mut HashMap<Ident, BTreeSet<BlockId>>,
) {
    for s in stmts {
        match s {
            TStmt::Other(p) | TStmt::Checkpoint(p, _) | TStmt::Call(p, _) => {
                for d in payload_defs(p) {
                    defs.entry(d.clone()).or_default().insert(block);
                }
                for u in payload_uses(p) {
                    uses.entry(u.clone()).or_default().insert(block);
                }
            }
            TStmt::If(p, a, b) => {
                for u in payload_uses(p) {
                    uses.entry(u.clone()).or_default().insert(block);
                }
                scan_list(a, block, defs, uses);
                scan_list(b, block, defs, uses);
            }
            TStmt::Jump(_) => {}
        }
    }
}

fn atom_var(a: &Atom) -> Option<&Ident> {
    match a {
        Atom::Var(v) => Some(v),
        _ => None,
    }
}

fn dest_var(d: &Dest) -> Option<&Ident> {
    match d {
        Dest::Var(v) => Some(v),
        Dest::Ret => None,
    }
}

pub(crate) fn payload_defs(p: &Payload) -> Vec<&Ident> {
    let mut out = Vec::new();
    match p {
        Payload::Op(op) => match op {
            OtherOp::Assume { dst, .. } => out.push(dst),
            OtherOp::Prim { dst, .. }
            | OtherOp::Copy { dst, .. }
            | OtherOp::MkRecord { dst, .. }
            | OtherOp::MkVariant { dst, .. } => out.extend(dest_var(dst)),
            OtherOp::CallDirect { dst, .. } => out.push(dst),
            OtherOp::BindPayload { dst, .. } | OtherOp::BindField { dst, .. } => out.push(dst),
            OtherOp::Observe { .. } | OtherOp::Weight { .. } => {}
        },
        Payload::Call(c) => out.push(&c.dst),
        Payload::Checkpoint | Payload::If(_) => {}
    }
    out
}

pub(crate) fn payload_uses(p: &Payload) -> Vec<&Ident> {
    fn atoms<'a>(args: impl Iterator<Item = &'a Atom>, out: &mut Vec<&'a Ident>) {
        for a in args {
            out.extend(atom_var(a));
        }
    }
    let mut out = Vec::new();
    match p {
        Payload::Op(op) => match op {
            OtherOp::Assume { args, .. } => atoms(args.iter(), &mut out),
            OtherOp::Observe { value, args, .. } => {
                out.extend(atom_var(value));
                atoms(args.iter(), &mut out);
            }
            OtherOp::Weight { amount } => out.extend(atom_var(amount)),
            OtherOp::Prim { args, .. } => atoms(args.iter(), &mut out),
            OtherOp::CallDirect { args, .. } => atoms(args.iter(), &mut out),
            OtherOp::Copy { src, .. } => out.extend(atom_var(src)),
            OtherOp::MkRecord { fields, .. } => atoms(fields.iter().map(|(_, a)| a), &mut out),
            OtherOp::MkVariant { payload, .. } => out.extend(atom_var(payload)),
            OtherOp::BindPayload { scrut, .. } | OtherOp::BindField { scrut, .. } => {
                out.extend(atom_var(scrut))
            }
        },
        Payload::Call(c) => atoms(c.args.iter(), &mut out),
        Payload::If(Cond { scrut, .. }) => out.extend(atom_var(scrut)),
        Payload::Checkpoint => {}
    }
    out
}
