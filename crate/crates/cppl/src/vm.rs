//! The compiled block program and its single-particle executor.
//!
//! A program is a set of indexed basic blocks over a shared per-particle
//! state: a cell stack with a stack pointer, an accumulated log-weight, a
//! next-block register, and a per-particle random source. `sim` executes
//! one block chain: direct jumps between blocks stay inside one call, and
//! control returns to the caller either at a checkpoint (flag true) or at
//! termination (flag false, next = stop). `sim` on the stop sentinel is
//! the identity with flag true, so finished particles keep participating
//! in resampling.

use std::collections::BTreeMap;

use crate::ast::{DistName, Type};
use crate::dists::{DistParams, RandomSource, Value};
use crate::error::VmError;
use crate::frames::FrameLayout;

/// Block index or the stop sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRef {
    Stop,
    Block(u32),
}

/// One 8-byte-cell-equivalent slot: a float, an integer, a boolean, a
/// block index, a stack-relative address, or a constant-pool reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Uninit,
    F(f64),
    I(i64),
    B(bool),
    Blk(BlockRef),
    /// Address relative to the stack base. Nothing absolute is ever
    /// stored, so resampling may relocate particle state freely.
    Rel(u32),
    /// Index into the program's constant pool.
    Pool(u32),
}

impl Cell {
    fn f(self) -> Result<f64, VmError> {
        match self {
            Cell::F(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("float")),
        }
    }
    fn i(self) -> Result<i64, VmError> {
        match self {
            Cell::I(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("int")),
        }
    }
    fn b(self) -> Result<bool, VmError> {
        match self {
            Cell::B(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("bool")),
        }
    }
    fn blk(self) -> Result<BlockRef, VmError> {
        match self {
            Cell::Blk(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("block index")),
        }
    }
    fn rel(self) -> Result<u32, VmError> {
        match self {
            Cell::Rel(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("relative address")),
        }
    }
    fn pool(self) -> Result<u32, VmError> {
        match self {
            Cell::Pool(v) => Ok(v),
            Cell::Uninit => Err(VmError::UninitRead),
            _ => Err(VmError::CellType("pool reference")),
        }
    }

    pub fn to_value(self) -> Option<Value> {
        match self {
            Cell::F(v) => Some(Value::Float(v)),
            Cell::I(v) => Some(Value::Int(v)),
            Cell::B(v) => Some(Value::Bool(v)),
            _ => None,
        }
    }

    pub fn from_value(v: Value) -> Cell {
        match v {
            Value::Float(f) => Cell::F(f),
            Value::Int(i) => Cell::I(i),
            Value::Bool(b) => Cell::B(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimOp {
    AddI,
    SubI,
    MulI,
    EqI,
    AddF,
    SubF,
    MulF,
    DivF,
    GeqF,
    LeqF,
    EqF,
    Log,
    Exp,
    EqB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Block(u32),
    Stop,
    /// Read the target from a register holding a block cell.
    Reg(u16),
}

/// Register-based block instructions. Registers are per-block scratch;
/// anything that lives between blocks goes through the frame cells.
#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Imm { dst: u16, v: Cell },
    Mov { dst: u16, src: u16, n: u16 },
    /// regs[dst..dst+n] := stack[sp-back .. sp-back+n]
    LoadFrame { dst: u16, back: u32, n: u16 },
    StoreFrame { src: u16, back: u32, n: u16 },
    /// Writes the callee frame above the stack top, before the push.
    StoreAbove { src: u16, above: u32, n: u16 },
    /// dst := Rel(sp - back): the stack-relative address of a frame slot.
    FrameAddr { dst: u16, back: u32 },
    /// Dereference a pool reference: regs[dst..+n] :=
    /// pool[ref + off + index*elem ..]. With `index`, the entry is a
    /// sequence with a length header and the read is bounds-checked.
    ReadPool {
        dst: u16,
        base: u16,
        index: Option<u16>,
        elem: u16,
        off: u16,
        n: u16,
    },
    Prim { dst: u16, op: PrimOp, a: u16, b: u16 },
    /// Draw from a distribution; parameters in consecutive registers.
    Sample { dst: u16, dist: DistName, args: u16 },
    /// observe: add the log-density of `value` to the particle weight.
    Score { dist: DistName, args: u16, value: u16 },
    AddWeight { src: u16 },
    Branch { cond: u16, thn: Vec<Instr>, els: Vec<Instr> },
    PushFrame { n: u32 },
    PopFrame { n: u32 },
    /// stack[rel .. rel+n] := regs, through a relative-address cell.
    WriteRel { addr: u16, src: u16, n: u16 },
    SetNext { t: Target },
    /// Non-checkpoint transition; terminal in its instruction list.
    Jump { t: Target },
    /// Checkpoint: yield to the inference engine; terminal.
    Halt,
    /// Call a resample-free function natively (no particle-stack frame).
    CallDirect { f: u32, args: u16, nargs: u16, dst: u16, nret: u16 },
    /// Return from a direct function.
    Ret { src: u16, n: u16 },
}

#[derive(Debug, Clone)]
pub struct Block {
    pub instrs: Vec<Instr>,
    pub regs: usize,
}

#[derive(Debug, Clone)]
pub struct DirectFn {
    pub name: String,
    pub instrs: Vec<Instr>,
    pub regs: usize,
    /// Parameters arrive in registers 0..param_cells.
    pub param_cells: usize,
    pub ret_cells: usize,
}

/// A compiled program: indexed blocks, the entry block, the constant
/// pool, directly-callable resample-free functions, and layout metadata
/// for dumps and tests. The stop sentinel is [`BlockRef::Stop`].
#[derive(Debug, Clone)]
pub struct BlockProgram {
    pub blocks: Vec<Block>,
    pub entry: u32,
    pub pool: Vec<Cell>,
    pub direct_fns: Vec<DirectFn>,
    /// Cells reserved at the stack base for the program result.
    pub result_cells: usize,
    pub result_ty: Type,
    pub main_frame_size: usize,
    pub frame_layouts: BTreeMap<String, FrameLayout>,
    pub func_entries: BTreeMap<String, u32>,
    /// Owning function of each block, for dumps.
    pub block_owner: Vec<String>,
}

pub const DEFAULT_STACK_CELLS: usize = 4096;
const MAX_DIRECT_DEPTH: usize = 4096;

/// Per-particle state. The stack vector length equals the stack pointer
/// at block boundaries (it may exceed it transiently while a callee
/// frame is written above the top), so cloning copies exactly the live
/// prefix.
#[derive(Debug, Clone)]
pub struct ParticleState {
    pub stack: Vec<Cell>,
    sp: usize,
    pub capacity: usize,
    pub log_weight: f64,
    pub next: BlockRef,
    pub rng: RandomSource,
}

impl ParticleState {
    pub fn sp(&self) -> usize {
        self.sp
    }

    /// The program result cells, valid once the particle reached stop.
    pub fn result<'a>(&'a self, prog: &BlockProgram) -> &'a [Cell] {
        &self.stack[0..prog.result_cells]
    }
}

impl BlockProgram {
    /// A fresh particle: result region reserved, main frame pushed with
    /// its return address set to the stop sentinel and the return value
    /// location pointing at the result region.
    pub fn init_state(&self, rng: RandomSource, capacity: usize) -> ParticleState {
        let mut stack = vec![Cell::Uninit; self.result_cells + self.main_frame_size];
        let main = &self.frame_layouts["main"];
        stack[self.result_cells + main.ra_slot] = Cell::Blk(BlockRef::Stop);
        stack[self.result_cells + main.ret_val_loc_slot] = Cell::Rel(0);
        let sp = stack.len();
        ParticleState {
            stack,
            sp,
            capacity,
            log_weight: 0.0,
            next: BlockRef::Block(self.entry),
            rng,
        }
    }
}

/// Deep copy of a particle state; only the live prefix `[0, sp)` of the
/// stack is copied. The copy keeps the ancestor's capacity so the next
/// propagation segment can regrow the stack without reallocating inside
/// a worker.
pub fn copy_state(s: &ParticleState) -> ParticleState {
    debug_assert_eq!(s.stack.len(), s.sp, "live prefix only at checkpoints");
    let mut stack = Vec::with_capacity(s.stack.capacity());
    stack.extend_from_slice(&s.stack);
    ParticleState {
        stack,
        sp: s.sp,
        capacity: s.capacity,
        log_weight: s.log_weight,
        next: s.next,
        rng: s.rng.clone(),
    }
}

enum Flow {
    Fall,
    Jump(BlockRef),
    Halt,
    Ret,
}

/// Reusable register buffers, one per execution depth (block level plus
/// one per nested direct call). Workers keep one scratch each so the hot
/// path performs no allocation.
#[derive(Debug, Default)]
pub struct Scratch {
    frames: Vec<Vec<Cell>>,
}

impl Scratch {
    fn frame(&mut self, depth: usize, n: usize) -> Vec<Cell> {
        if self.frames.len() <= depth {
            self.frames.resize_with(depth + 1, Vec::new);
        }
        let mut v = std::mem::take(&mut self.frames[depth]);
        v.clear();
        v.resize(n, Cell::Uninit);
        v
    }

    fn release(&mut self, depth: usize, v: Vec<Cell>) {
        self.frames[depth] = v;
    }
}

/// Executes the chain of blocks starting at `b`, following direct jumps,
/// until a checkpoint (true) or termination at stop (false). The
/// returned block is where execution resumes.
pub fn sim(prog: &BlockProgram, b: BlockRef, s: &mut ParticleState) -> Result<(BlockRef, bool), VmError> {
    let mut scratch = Scratch::default();
    sim_scratch(prog, b, s, &mut scratch)
}

/// [`sim`] with an externally owned register scratch, for callers that
/// execute many chains (the inference engine's workers).
pub fn sim_scratch(
    prog: &BlockProgram,
    b: BlockRef,
    s: &mut ParticleState,
    scratch: &mut Scratch,
) -> Result<(BlockRef, bool), VmError> {
    let mut cur = b;
    loop {
        let (next, checkpoint) = sim_step_scratch(prog, cur, s, scratch)?;
        if checkpoint {
            return Ok((next, true));
        }
        if next == BlockRef::Stop {
            return Ok((BlockRef::Stop, false));
        }
        cur = next;
    }
}

/// Executes exactly one block (no chain following): the successor block
/// and whether this block ended at a checkpoint. `sim_step` on stop is
/// the identity with flag true.
pub fn sim_step(
    prog: &BlockProgram,
    b: BlockRef,
    s: &mut ParticleState,
) -> Result<(BlockRef, bool), VmError> {
    let mut scratch = Scratch::default();
    sim_step_scratch(prog, b, s, &mut scratch)
}

pub fn sim_step_scratch(
    prog: &BlockProgram,
    b: BlockRef,
    s: &mut ParticleState,
    scratch: &mut Scratch,
) -> Result<(BlockRef, bool), VmError> {
    let idx = match b {
        BlockRef::Stop => return Ok((BlockRef::Stop, true)),
        BlockRef::Block(i) => i as usize,
    };
    let block = prog.blocks.get(idx).ok_or(VmError::InvalidBlock(idx))?;
    let mut regs = scratch.frame(0, block.regs);
    let flow = exec_list(prog, &block.instrs, &mut regs, s, false, 0, scratch);
    scratch.release(0, regs);
    match flow? {
        Flow::Halt => Ok((s.next, true)),
        Flow::Jump(t) => {
            s.next = t;
            Ok((t, false))
        }
        Flow::Fall | Flow::Ret => Err(VmError::CellType("block terminator")),
    }
}

/// Reference interpreter: loops `sim`, ignoring checkpoints, until stop.
/// This is the no-resampling (importance sampling) execution of a
/// program.
pub fn run_single(prog: &BlockProgram, s: &mut ParticleState) -> Result<(), VmError> {
    let mut scratch = Scratch::default();
    let mut b = s.next;
    loop {
        let (nb, _) = sim_scratch(prog, b, s, &mut scratch)?;
        if nb == BlockRef::Stop {
            s.next = BlockRef::Stop;
            return Ok(());
        }
        b = nb;
    }
}

fn exec_list(
    prog: &BlockProgram,
    instrs: &[Instr],
    regs: &mut Vec<Cell>,
    s: &mut ParticleState,
    direct: bool,
    depth: usize,
    scratch: &mut Scratch,
) -> Result<Flow, VmError> {
    for ins in instrs {
        match ins {
            Instr::Imm { dst, v } => regs[*dst as usize] = *v,
            Instr::Mov { dst, src, n } => {
                for k in 0..*n as usize {
                    regs[*dst as usize + k] = regs[*src as usize + k];
                }
            }
            Instr::LoadFrame { dst, back, n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let base = s
                    .sp()
                    .checked_sub(*back as usize)
                    .ok_or(VmError::CellType("frame offset"))?;
                for k in 0..*n as usize {
                    regs[*dst as usize + k] = s.stack[base + k];
                }
            }
            Instr::StoreFrame { src, back, n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let base = s
                    .sp()
                    .checked_sub(*back as usize)
                    .ok_or(VmError::CellType("frame offset"))?;
                for k in 0..*n as usize {
                    s.stack[base + k] = regs[*src as usize + k];
                }
            }
            Instr::StoreAbove { src, above, n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let base = s.sp() + *above as usize;
                let end = base + *n as usize;
                if end > s.capacity {
                    return Err(VmError::StackOverflow {
                        needed: end,
                        capacity: s.capacity,
                    });
                }
                if s.stack.len() < end {
                    s.stack.resize(end, Cell::Uninit);
                }
                for k in 0..*n as usize {
                    s.stack[base + k] = regs[*src as usize + k];
                }
            }
            Instr::FrameAddr { dst, back } => {
                let base = s
                    .sp()
                    .checked_sub(*back as usize)
                    .ok_or(VmError::CellType("frame offset"))?;
                regs[*dst as usize] = Cell::Rel(base as u32);
            }
            Instr::ReadPool {
                dst,
                base,
                index,
                elem,
                off,
                n,
            } => {
                let r = regs[*base as usize].pool()? as usize;
                let start = match index {
                    None => r + *off as usize,
                    Some(ireg) => {
                        let len = prog.pool[r].i()?;
                        let idx = regs[*ireg as usize].i()?;
                        if idx < 0 || idx >= len {
                            return Err(VmError::SeqOutOfBounds {
                                idx,
                                len: len as usize,
                            });
                        }
                        r + *off as usize + (idx as usize) * (*elem as usize)
                    }
                };
                for k in 0..*n as usize {
                    regs[*dst as usize + k] = prog.pool[start + k];
                }
            }
            Instr::Prim { dst, op, a, b } => {
                let av = regs[*a as usize];
                let bv = regs[*b as usize];
                regs[*dst as usize] = eval_prim(*op, av, bv)?;
            }
            Instr::Sample { dst, dist, args } => {
                let d = dist_from_regs(*dist, *args, regs)?;
                let v = s.rng.draw(&d)?;
                regs[*dst as usize] = Cell::from_value(v);
            }
            Instr::Score { dist, args, value } => {
                let d = dist_from_regs(*dist, *args, regs)?;
                let x = regs[*value as usize]
                    .to_value()
                    .ok_or(VmError::CellType("observed value"))?;
                s.log_weight += d.log_density(&x);
                if s.log_weight.is_nan() {
                    return Err(VmError::NanWeight);
                }
            }
            Instr::AddWeight { src } => {
                s.log_weight += regs[*src as usize].f()?;
                if s.log_weight.is_nan() {
                    return Err(VmError::NanWeight);
                }
            }
            Instr::Branch { cond, thn, els } => {
                let c = regs[*cond as usize].b()?;
                let flow = if c {
                    exec_list(prog, thn, regs, s, direct, depth, scratch)?
                } else {
                    exec_list(prog, els, regs, s, direct, depth, scratch)?
                };
                match flow {
                    Flow::Fall => {}
                    other => return Ok(other),
                }
            }
            Instr::PushFrame { n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let new_sp = s.sp + *n as usize;
                if new_sp > s.capacity {
                    return Err(VmError::StackOverflow {
                        needed: new_sp,
                        capacity: s.capacity,
                    });
                }
                if s.stack.len() < new_sp {
                    s.stack.resize(new_sp, Cell::Uninit);
                }
                s.sp = new_sp;
            }
            Instr::PopFrame { n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let new_sp = s
                    .sp
                    .checked_sub(*n as usize)
                    .ok_or(VmError::CellType("frame pop"))?;
                s.stack.truncate(new_sp);
                s.sp = new_sp;
            }
            Instr::WriteRel { addr, src, n } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                let base = regs[*addr as usize].rel()? as usize;
                for k in 0..*n as usize {
                    s.stack[base + k] = regs[*src as usize + k];
                }
            }
            Instr::SetNext { t } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                s.next = target(*t, regs)?;
            }
            Instr::Jump { t } => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                return Ok(Flow::Jump(target(*t, regs)?));
            }
            Instr::Halt => {
                if direct {
                    return Err(VmError::CheckpointInDirectCall);
                }
                return Ok(Flow::Halt);
            }
            Instr::CallDirect {
                f,
                args,
                nargs,
                dst,
                nret,
            } => {
                if depth >= MAX_DIRECT_DEPTH {
                    return Err(VmError::StackOverflow {
                        needed: depth + 1,
                        capacity: MAX_DIRECT_DEPTH,
                    });
                }
                let func = &prog.direct_fns[*f as usize];
                let mut fregs = scratch.frame(depth + 1, func.regs);
                fregs[..*nargs as usize]
                    .copy_from_slice(&regs[*args as usize..(*args + *nargs) as usize]);
                let flow = exec_list(prog, &func.instrs, &mut fregs, s, true, depth + 1, scratch);
                let flow = match flow {
                    Ok(f) => f,
                    Err(e) => {
                        scratch.release(depth + 1, fregs);
                        return Err(e);
                    }
                };
                match flow {
                    Flow::Ret => {}
                    _ => {
                        scratch.release(depth + 1, fregs);
                        return Err(VmError::CellType("direct function return"));
                    }
                }
                // Ret moved its results to the start of the register file
                for k in 0..*nret as usize {
                    regs[*dst as usize + k] = fregs[k];
                }
                scratch.release(depth + 1, fregs);
            }
            Instr::Ret { src, n } => {
                // move results to the front of this frame's registers
                for k in 0..*n as usize {
                    regs[k] = regs[*src as usize + k];
                }
                return Ok(Flow::Ret);
            }
        }
    }
    Ok(Flow::Fall)
}

fn target(t: Target, regs: &[Cell]) -> Result<BlockRef, VmError> {
    match t {
        Target::Block(i) => Ok(BlockRef::Block(i)),
        Target::Stop => Ok(BlockRef::Stop),
        Target::Reg(r) => regs[r as usize].blk(),
    }
}

fn eval_prim(op: PrimOp, a: Cell, b: Cell) -> Result<Cell, VmError> {
    Ok(match op {
        PrimOp::AddI => Cell::I(a.i()?.wrapping_add(b.i()?)),
        PrimOp::SubI => Cell::I(a.i()?.wrapping_sub(b.i()?)),
        PrimOp::MulI => Cell::I(a.i()?.wrapping_mul(b.i()?)),
        PrimOp::EqI => Cell::B(a.i()? == b.i()?),
        PrimOp::AddF => Cell::F(a.f()? + b.f()?),
        PrimOp::SubF => Cell::F(a.f()? - b.f()?),
        PrimOp::MulF => Cell::F(a.f()? * b.f()?),
        PrimOp::DivF => Cell::F(a.f()? / b.f()?),
        PrimOp::GeqF => Cell::B(a.f()? >= b.f()?),
        PrimOp::LeqF => Cell::B(a.f()? <= b.f()?),
        PrimOp::EqF => Cell::B(a.f()? == b.f()?),
        PrimOp::Log => Cell::F(a.f()?.ln()),
        PrimOp::Exp => Cell::F(a.f()?.exp()),
        PrimOp::EqB => Cell::B(a.b()? == b.b()?),
    })
}

fn dist_from_regs(name: DistName, args: u16, regs: &[Cell]) -> Result<DistParams, VmError> {
    let mut vals = [Value::Float(0.0); 2];
    for k in 0..name.arity() {
        vals[k] = regs[args as usize + k]
            .to_value()
            .ok_or(VmError::CellType("distribution parameter"))?;
    }
    Ok(DistParams::new(name, &vals[..name.arity()])?)
}

/// Debug check used by tests after resampling copies: every relative
/// address stored on the live stack points inside the live prefix.
pub fn relative_addresses_valid(s: &ParticleState) -> bool {
    s.stack.iter().all(|c| match c {
        Cell::Rel(r) => (*r as usize) < s.sp().max(1),
        _ => true,
    })
}
