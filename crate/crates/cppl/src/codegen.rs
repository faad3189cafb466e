//! Lowering from ANF to abstract statements, and instruction selection
//! from decomposed blocks to the VM instruction set.
//!
//! Each resample-reachable function (plus a synthetic zero-parameter
//! `main` wrapping the program body, whose return address is the stop
//! sentinel) is lowered to a statement list, decomposed into blocks, and
//! emitted against its frame layout. Resample-free functions become
//! directly-callable register code with no particle-stack frame.
//!
//! Calling convention at a tail-position call: write the callee frame
//! above the stack top (`ra` = return block, parameters, `retValLoc` =
//! stack-relative address of the destination slot), then bump the stack
//! pointer by the callee frame size, then jump to the callee entry.
//! Returns write through `retValLoc`, pop the frame, and jump to `ra`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::analysis::{build_call_graph, resample_set, CallGraph};
use crate::anf::normalize;
use crate::ast::{Builtin, Const, DistName, Ident, Pattern, Term, Type};
use crate::dists::Value;
use crate::error::CompileError;
use crate::frames::{compute_layout, FrameLayout};
use crate::frontend::typecheck::TypedProgram;
use crate::frontend::{parse, typecheck_lite};
use crate::stmtir::{decompose, Decomposed, Next, Stmt, TStmt};
use crate::vm::{Block, BlockProgram, BlockRef, Cell, DirectFn, Instr, PrimOp, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Var(Ident),
    Const(Value),
    /// Reference to an interned constant (sequence or recursive
    /// variant).
    Pool(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dest {
    Var(Ident),
    /// The function's return value, written through `retValLoc`.
    Ret,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallPayload {
    pub dst: Ident,
    pub func: Ident,
    pub args: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatTest {
    Bool,
    /// Scrutinee's variant tag equals this constructor's.
    Tag(Ident),
    Lit(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub scrut: Atom,
    pub test: PatTest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OtherOp {
    Assume {
        dst: Ident,
        dist: DistName,
        args: Vec<Atom>,
    },
    Observe {
        value: Atom,
        dist: DistName,
        args: Vec<Atom>,
    },
    Weight {
        amount: Atom,
    },
    Prim {
        dst: Dest,
        op: Builtin,
        args: Vec<Atom>,
    },
    CallDirect {
        dst: Ident,
        func: Ident,
        args: Vec<Atom>,
    },
    Copy {
        dst: Dest,
        src: Atom,
    },
    MkRecord {
        dst: Dest,
        /// (label, atom) in canonical label order.
        fields: Vec<(Ident, Atom)>,
    },
    MkVariant {
        dst: Dest,
        con: Ident,
        payload: Atom,
    },
    /// Bind (part of) a constructor payload: the whole payload when
    /// `label` is none, or one record field of it.
    BindPayload {
        dst: Ident,
        scrut: Atom,
        con: Ident,
        label: Option<Ident>,
    },
    /// Bind a record field of the scrutinee.
    BindField {
        dst: Ident,
        scrut: Atom,
        label: Ident,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Op(OtherOp),
    Call(CallPayload),
    Checkpoint,
    If(Cond),
}

#[derive(Debug, Clone, Default)]
pub struct CompileOptions {
    /// Observation sequence bound to the `data`/`dataLen` globals.
    pub data: Option<Vec<f64>>,
}

/// Everything the pipeline produces, kept per stage for the `--emit`
/// dumps and for tests.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub ast: Term,
    pub typed: TypedProgram,
    pub anf: TypedProgram,
    pub call_graph: CallGraph,
    pub resample_set: BTreeSet<Ident>,
    /// Statement lists of the decomposed functions (main last).
    pub stmts: Vec<(Ident, Vec<Stmt<Payload>>)>,
    pub decomposed: Vec<(Ident, Decomposed<Payload>)>,
    pub program: BlockProgram,
}

/// Full pipeline: parse, desugar, typecheck, normalize, analyze,
/// decompose, lay out frames, select instructions.
pub fn compile(src: &str, opts: &CompileOptions) -> Result<Artifacts, CompileError> {
    let ast = parse(src)?;
    let typed = typecheck_lite(&ast)?;
    let anf = normalize(&typed);
    let graph = build_call_graph(&anf);
    let rset = resample_set(&graph);

    if anf.uses_data && opts.data.is_none() {
        return Err(CompileError::Codegen(
            "program references 'data' but no observations were provided (use --data)".into(),
        ));
    }

    let mut pool: Vec<Cell> = Vec::new();
    let data = opts.data.as_ref().map(|ys| {
        let at = pool.len() as u32;
        pool.push(Cell::I(ys.len() as i64));
        pool.extend(ys.iter().map(|y| Cell::F(*y)));
        (at, ys.len())
    });

    let main_name = synthetic_main_name(&anf);

    // Lower every function to statements; decomposed ones get blocks.
    let mut cx = LowerCx {
        prog: &anf,
        rset: &rset,
        pool: &mut pool,
        const_env: HashMap::new(),
    };
    let mut stmts: Vec<(Ident, Vec<Stmt<Payload>>)> = Vec::new();
    let mut direct_stmts: Vec<(Ident, Vec<Stmt<Payload>>)> = Vec::new();
    for f in &anf.funcs {
        let list = cx.lower_body_to_stmts(&f.body)?;
        if rset.contains(&f.name) {
            stmts.push((f.name.clone(), list));
        } else {
            direct_stmts.push((f.name.clone(), list));
        }
    }
    let main_list = cx.lower_body_to_stmts(&anf.main)?;
    stmts.push((main_name.clone(), main_list));

    // Decompose and lay out frames.
    let mut decomposed = Vec::new();
    let mut layouts: BTreeMap<Ident, FrameLayout> = BTreeMap::new();
    for (name, list) in &stmts {
        let d = decompose(list);
        let (params, body): (&[(Ident, Type)], &Term) = if name == &main_name {
            (&[], &anf.main)
        } else {
            let def = anf.func(name).expect("decomposed function exists");
            (&def.params, &def.body)
        };
        layouts.insert(name.clone(), compute_layout(&anf, params, &d.blocks, body));
        decomposed.push((name.clone(), d));
    }

    // Assign global block indices: main first so the program entry is 0.
    let mut bases: BTreeMap<Ident, u32> = BTreeMap::new();
    let mut entries: BTreeMap<Ident, u32> = BTreeMap::new();
    let mut total: u32 = 0;
    let ordered: Vec<&(Ident, Decomposed<Payload>)> = {
        let mut v: Vec<&(Ident, Decomposed<Payload>)> =
            decomposed.iter().filter(|(n, _)| n == &main_name).collect();
        v.extend(decomposed.iter().filter(|(n, _)| n != &main_name));
        v
    };
    for (name, d) in &ordered {
        bases.insert(name.clone(), total);
        entries.insert(name.clone(), total + d.entry as u32);
        total += d.blocks.len() as u32;
    }

    let direct_ids: BTreeMap<Ident, u32> = direct_stmts
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.clone(), i as u32))
        .collect();

    // Emit decomposed blocks.
    let mut blocks: Vec<Block> = Vec::new();
    let mut block_owner: Vec<String> = Vec::new();
    for (name, d) in &ordered {
        let layout = &layouts[name];
        for (local_id, list) in &d.blocks {
            let mut em = EmitCx::new(&anf, Some(layout), &layouts, &entries, &direct_ids, bases[name], data);
            let mut out = Vec::new();
            em.emit_tstmts(list, &mut out)?;
            debug_assert_eq!(blocks.len(), (bases[name] + *local_id as u32) as usize);
            blocks.push(Block {
                instrs: out,
                regs: em.next_reg as usize,
            });
            block_owner.push(name.clone());
        }
    }

    // Emit direct functions.
    let mut direct_fns = Vec::new();
    for (name, list) in &direct_stmts {
        let def = anf.func(name).expect("direct function exists");
        let mut em = EmitCx::new(&anf, None, &layouts, &entries, &direct_ids, 0, data);
        let mut param_cells = 0u16;
        for (p, ty) in &def.params {
            let n = anf.size_of(ty) as u16;
            em.reg_map.insert(p.clone(), (param_cells, n));
            param_cells += n;
        }
        em.next_reg = param_cells;
        let mut out = Vec::new();
        em.emit_tstmts_direct(list, &mut out)?;
        direct_fns.push(DirectFn {
            name: name.clone(),
            instrs: out,
            regs: em.next_reg as usize,
            param_cells: param_cells as usize,
            ret_cells: anf.size_of(&def.ret),
        });
    }

    let result_cells = anf.size_of(&anf.main_ty);
    let program = BlockProgram {
        blocks,
        entry: entries[&main_name],
        pool,
        direct_fns,
        result_cells,
        result_ty: anf.main_ty.clone(),
        main_frame_size: layouts[&main_name].frame_size,
        frame_layouts: {
            let mut m = layouts.clone();
            if main_name != "main" {
                let v = m.remove(&main_name).expect("main layout");
                m.insert("main".into(), v);
            }
            m
        },
        func_entries: {
            let mut m = entries.clone();
            if main_name != "main" {
                let v = m.remove(&main_name).expect("main entry");
                m.insert("main".into(), v);
            }
            m
        },
        block_owner,
    };

    Ok(Artifacts {
        ast,
        typed,
        anf,
        call_graph: graph,
        resample_set: rset,
        stmts,
        decomposed,
        program,
    })
}

fn synthetic_main_name(prog: &TypedProgram) -> Ident {
    let mut name = "main".to_string();
    while prog.func(&name).is_some() {
        name.insert(0, '_');
        name.insert(0, '_');
    }
    name
}

// ---------------------------------------------------------------------
// Lowering ANF bodies to abstract statements
// ---------------------------------------------------------------------

struct LowerCx<'a> {
    prog: &'a TypedProgram,
    rset: &'a BTreeSet<Ident>,
    pool: &'a mut Vec<Cell>,
    /// Bindings whose value is a compile-time constant, as flat cells.
    const_env: HashMap<Ident, Vec<Cell>>,
}

impl<'a> LowerCx<'a> {
    fn lower_body_to_stmts(&mut self, body: &Term) -> Result<Vec<Stmt<Payload>>, CompileError> {
        let mut out = Vec::new();
        self.lower_body(body, &Dest::Ret, &mut out)?;
        Ok(out)
    }

    fn lower_body(
        &mut self,
        t: &Term,
        dst: &Dest,
        out: &mut Vec<Stmt<Payload>>,
    ) -> Result<(), CompileError> {
        match t {
            Term::Let { name, rhs, body, .. } => {
                self.lower_binding(rhs, &Dest::Var(name.clone()), out)?;
                self.lower_body(body, dst, out)
            }
            _ => self.lower_binding(t, dst, out),
        }
    }

    fn lower_binding(
        &mut self,
        e: &Term,
        dst: &Dest,
        out: &mut Vec<Stmt<Payload>>,
    ) -> Result<(), CompileError> {
        match e {
            Term::Resample => {
                out.push(Stmt::Checkpoint(Payload::Checkpoint));
                Ok(())
            }
            Term::Match {
                scrut,
                pat,
                thn,
                els,
            } => {
                let scrut = self.atom(scrut);
                self.lower_match(&scrut, pat, thn, els, dst, out)
            }
            Term::App(..) => {
                let (head, args) = e.spine();
                let args: Vec<Atom> = args.iter().map(|a| self.atom(a)).collect();
                match head {
                    Term::Const(Const::Builtin(b)) => {
                        out.push(Stmt::Other(Payload::Op(OtherOp::Prim {
                            dst: dst.clone(),
                            op: *b,
                            args,
                        })));
                        Ok(())
                    }
                    Term::Var(f) => {
                        let dvar = match dst {
                            Dest::Var(v) => v.clone(),
                            Dest::Ret => {
                                return Err(CompileError::Codegen(
                                    "internal: call in tail position survived normalization".into(),
                                ))
                            }
                        };
                        if self.rset.contains(f) {
                            out.push(Stmt::Call(Payload::Call(CallPayload {
                                dst: dvar,
                                func: f.clone(),
                                args,
                            })));
                        } else {
                            out.push(Stmt::Other(Payload::Op(OtherOp::CallDirect {
                                dst: dvar,
                                func: f.clone(),
                                args,
                            })));
                        }
                        Ok(())
                    }
                    _ => Err(CompileError::Codegen("internal: invalid call head".into())),
                }
            }
            Term::Assume(d) => {
                let (dist, args) = self.dist_atoms(d);
                let dvar = match dst {
                    Dest::Var(v) => v.clone(),
                    Dest::Ret => {
                        return Err(CompileError::Codegen(
                            "internal: assume in tail position survived normalization".into(),
                        ))
                    }
                };
                out.push(Stmt::Other(Payload::Op(OtherOp::Assume {
                    dst: dvar,
                    dist,
                    args,
                })));
                Ok(())
            }
            Term::Observe(v, d) => {
                let (dist, args) = self.dist_atoms(d);
                out.push(Stmt::Other(Payload::Op(OtherOp::Observe {
                    value: self.atom(v),
                    dist,
                    args,
                })));
                Ok(())
            }
            Term::Weight(w) => {
                out.push(Stmt::Other(Payload::Op(OtherOp::Weight {
                    amount: self.atom(w),
                })));
                Ok(())
            }
            Term::Var(_) | Term::Const(_) => {
                out.push(Stmt::Other(Payload::Op(OtherOp::Copy {
                    dst: dst.clone(),
                    src: self.atom(e),
                })));
                self.note_const(dst, e);
                Ok(())
            }
            Term::Record(fields) => {
                let mut fs: Vec<(Ident, Atom)> = fields
                    .iter()
                    .map(|(l, a)| (l.clone(), self.atom(a)))
                    .collect();
                fs.sort_by(|a, b| a.0.cmp(&b.0));
                out.push(Stmt::Other(Payload::Op(OtherOp::MkRecord {
                    dst: dst.clone(),
                    fields: fs,
                })));
                self.note_const(dst, e);
                Ok(())
            }
            Term::Seq(_) => {
                // sequences are constant-only; intern and copy the ref
                let cells = self.intern_const(e)?;
                debug_assert_eq!(cells.len(), 1);
                let atom = match cells[0] {
                    Cell::Pool(r) => Atom::Pool(r),
                    _ => unreachable!("sequence value is a pool reference"),
                };
                if let Dest::Var(v) = dst {
                    self.const_env.insert(v.clone(), cells);
                }
                out.push(Stmt::Other(Payload::Op(OtherOp::Copy {
                    dst: dst.clone(),
                    src: atom,
                })));
                Ok(())
            }
            Term::Con(c, arg) => {
                let info = &self.prog.cons[c];
                if self.prog.variant_is_recursive(&info.variant) {
                    let cells = self.intern_const(e)?;
                    let atom = match cells[0] {
                        Cell::Pool(r) => Atom::Pool(r),
                        _ => unreachable!("recursive variant value is a pool reference"),
                    };
                    if let Dest::Var(v) = dst {
                        self.const_env.insert(v.clone(), cells);
                    }
                    out.push(Stmt::Other(Payload::Op(OtherOp::Copy {
                        dst: dst.clone(),
                        src: atom,
                    })));
                } else {
                    out.push(Stmt::Other(Payload::Op(OtherOp::MkVariant {
                        dst: dst.clone(),
                        con: c.clone(),
                        payload: self.atom(arg),
                    })));
                    self.note_const(dst, e);
                }
                Ok(())
            }
            _ => Err(CompileError::Codegen(format!(
                "internal: unexpected ANF form {:?}",
                e
            ))),
        }
    }

    fn lower_match(
        &mut self,
        scrut: &Atom,
        pat: &Pattern,
        thn: &Term,
        els: &Term,
        dst: &Dest,
        out: &mut Vec<Stmt<Payload>>,
    ) -> Result<(), CompileError> {
        match pat {
            // irrefutable: bind and inline the then-branch
            Pattern::Var(x) => {
                out.push(Stmt::Other(Payload::Op(OtherOp::Copy {
                    dst: Dest::Var(x.clone()),
                    src: scrut.clone(),
                })));
                self.lower_body(thn, dst, out)
            }
            Pattern::Record(fields) => {
                for (label, var) in fields {
                    out.push(Stmt::Other(Payload::Op(OtherOp::BindField {
                        dst: var.clone(),
                        scrut: scrut.clone(),
                        label: label.clone(),
                    })));
                }
                self.lower_body(thn, dst, out)
            }
            Pattern::True => {
                let mut thn_stmts = Vec::new();
                self.lower_body(thn, dst, &mut thn_stmts)?;
                let mut els_stmts = Vec::new();
                self.lower_body(els, dst, &mut els_stmts)?;
                out.push(Stmt::If(
                    Payload::If(Cond {
                        scrut: scrut.clone(),
                        test: PatTest::Bool,
                    }),
                    thn_stmts,
                    els_stmts,
                ));
                Ok(())
            }
            Pattern::Lit(c) => {
                let v = lit_value(c)?;
                let mut thn_stmts = Vec::new();
                self.lower_body(thn, dst, &mut thn_stmts)?;
                let mut els_stmts = Vec::new();
                self.lower_body(els, dst, &mut els_stmts)?;
                out.push(Stmt::If(
                    Payload::If(Cond {
                        scrut: scrut.clone(),
                        test: PatTest::Lit(v),
                    }),
                    thn_stmts,
                    els_stmts,
                ));
                Ok(())
            }
            Pattern::Con(con, sub) => {
                let mut thn_stmts = Vec::new();
                match sub.as_ref() {
                    Pattern::Var(x) => {
                        thn_stmts.push(Stmt::Other(Payload::Op(OtherOp::BindPayload {
                            dst: x.clone(),
                            scrut: scrut.clone(),
                            con: con.clone(),
                            label: None,
                        })));
                        self.lower_body(thn, dst, &mut thn_stmts)?;
                    }
                    Pattern::Record(fields) => {
                        for (label, var) in fields {
                            thn_stmts.push(Stmt::Other(Payload::Op(OtherOp::BindPayload {
                                dst: var.clone(),
                                scrut: scrut.clone(),
                                con: con.clone(),
                                label: Some(label.clone()),
                            })));
                        }
                        self.lower_body(thn, dst, &mut thn_stmts)?;
                    }
                    Pattern::True | Pattern::Lit(_) => {
                        // tag test, then a payload test; the else branch
                        // is duplicated on the two failure paths
                        let tmp = format!("{}#pay", con);
                        return Err(CompileError::Codegen(format!(
                            "literal sub-patterns under constructors are not supported \
                             (constructor '{}', temp '{}'); match on the payload in a nested match",
                            con, tmp
                        )));
                    }
                    Pattern::Con(..) => unreachable!("parser limits pattern nesting"),
                }
                let mut els_stmts = Vec::new();
                self.lower_body(els, dst, &mut els_stmts)?;
                out.push(Stmt::If(
                    Payload::If(Cond {
                        scrut: scrut.clone(),
                        test: PatTest::Tag(con.clone()),
                    }),
                    thn_stmts,
                    els_stmts,
                ));
                Ok(())
            }
        }
    }

    fn atom(&self, t: &Term) -> Atom {
        match t {
            Term::Var(x) => Atom::Var(x.clone()),
            Term::Const(Const::Int(v)) => Atom::Const(Value::Int(*v)),
            Term::Const(Const::Float(v)) => Atom::Const(Value::Float(*v)),
            Term::Const(Const::Bool(v)) => Atom::Const(Value::Bool(*v)),
            _ => unreachable!("non-atomic term in atom position: {:?}", t),
        }
    }

    fn dist_atoms(&self, d: &Term) -> (DistName, Vec<Atom>) {
        match d {
            Term::Dist(name, args) => (*name, args.iter().map(|a| self.atom(a)).collect()),
            _ => unreachable!("assume/observe argument is a distribution"),
        }
    }

    /// Records `dst` in the constant environment when the bound term
    /// evaluates to a compile-time constant (variables resolve through
    /// earlier constant bindings), so later interning sites can use it.
    /// Only called for forms whose evaluation has no interning side
    /// effects.
    fn note_const(&mut self, dst: &Dest, e: &Term) {
        if let Dest::Var(v) = dst {
            if let Ok(cells) = self.eval_const(e) {
                self.const_env.insert(v.clone(), cells);
            }
        }
    }

    /// Flat value cells of a constant term, interning sequence and
    /// recursive-variant referents into the pool.
    fn intern_const(&mut self, t: &Term) -> Result<Vec<Cell>, CompileError> {
        self.eval_const(t)
    }

    fn eval_const(&mut self, t: &Term) -> Result<Vec<Cell>, CompileError> {
        match t {
            Term::Const(Const::Int(v)) => Ok(vec![Cell::I(*v)]),
            Term::Const(Const::Float(v)) => Ok(vec![Cell::F(*v)]),
            Term::Const(Const::Bool(v)) => Ok(vec![Cell::B(*v)]),
            Term::Var(x) => self.const_env.get(x).cloned().ok_or_else(|| {
                CompileError::Codegen(format!(
                    "internal: '{}' is not a compile-time constant",
                    x
                ))
            }),
            Term::Record(fields) => {
                let mut sorted: Vec<&(Ident, Term)> = fields.iter().collect();
                sorted.sort_by(|a, b| a.0.cmp(&b.0));
                let mut cells = Vec::new();
                for (_, e) in sorted {
                    cells.extend(self.eval_const(e)?);
                }
                Ok(cells)
            }
            Term::Seq(elems) => {
                let mut body = Vec::new();
                for e in elems {
                    body.extend(self.eval_const(e)?);
                }
                let at = self.pool.len() as u32;
                self.pool.push(Cell::I(elems.len() as i64));
                self.pool.extend(body);
                Ok(vec![Cell::Pool(at)])
            }
            Term::Con(c, arg) => {
                let info = self.prog.cons[c].clone();
                let payload = self.eval_const(arg)?;
                if self.prog.variant_is_recursive(&info.variant) {
                    let at = self.pool.len() as u32;
                    self.pool.push(Cell::I(info.tag as i64));
                    self.pool.extend(payload);
                    Ok(vec![Cell::Pool(at)])
                } else {
                    let size = 1 + self.prog.max_payload(&info.variant);
                    let mut cells = vec![Cell::I(info.tag as i64)];
                    cells.extend(payload);
                    cells.resize(size, Cell::Uninit);
                    Ok(cells)
                }
            }
            _ => Err(CompileError::Codegen(format!(
                "internal: non-constant term in constant position: {:?}",
                t
            ))),
        }
    }
}

fn lit_value(c: &Const) -> Result<Value, CompileError> {
    match c {
        Const::Int(v) => Ok(Value::Int(*v)),
        Const::Float(v) => Ok(Value::Float(*v)),
        Const::Bool(v) => Ok(Value::Bool(*v)),
        _ => Err(CompileError::Codegen("unsupported literal pattern".into())),
    }
}

// ---------------------------------------------------------------------
// Instruction selection
// ---------------------------------------------------------------------

struct EmitCx<'a> {
    prog: &'a TypedProgram,
    /// None in direct (frameless) mode.
    layout: Option<&'a FrameLayout>,
    layouts: &'a BTreeMap<Ident, FrameLayout>,
    entries: &'a BTreeMap<Ident, u32>,
    direct_ids: &'a BTreeMap<Ident, u32>,
    block_base: u32,
    data: Option<(u32, usize)>,
    reg_map: HashMap<Ident, (u16, u16)>,
    next_reg: u16,
}

impl<'a> EmitCx<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        prog: &'a TypedProgram,
        layout: Option<&'a FrameLayout>,
        layouts: &'a BTreeMap<Ident, FrameLayout>,
        entries: &'a BTreeMap<Ident, u32>,
        direct_ids: &'a BTreeMap<Ident, u32>,
        block_base: u32,
        data: Option<(u32, usize)>,
    ) -> Self {
        EmitCx {
            prog,
            layout,
            layouts,
            entries,
            direct_ids,
            block_base,
            data,
            reg_map: HashMap::new(),
            next_reg: 0,
        }
    }

    fn alloc(&mut self, n: u16) -> u16 {
        let r = self.next_reg;
        self.next_reg += n;
        r
    }

    fn type_of_var(&self, x: &str) -> Type {
        if let Some(t) = self.prog.types.get(x) {
            return t.clone();
        }
        match x {
            "data" => Type::Seq(Box::new(Type::Float)),
            "dataLen" => Type::Int,
            _ => unreachable!("untyped variable {}", x),
        }
    }

    fn atom_size(&self, a: &Atom) -> u16 {
        match a {
            Atom::Const(_) | Atom::Pool(_) => 1,
            Atom::Var(x) => self.prog.size_of(&self.type_of_var(x)) as u16,
        }
    }

    /// Loads an atom's cells into registers, returning the start of its
    /// run. Frame variables load fresh; register variables alias.
    fn load_atom(&mut self, a: &Atom, out: &mut Vec<Instr>) -> (u16, u16) {
        match a {
            Atom::Const(v) => {
                let r = self.alloc(1);
                out.push(Instr::Imm {
                    dst: r,
                    v: Cell::from_value(*v),
                });
                (r, 1)
            }
            Atom::Pool(p) => {
                let r = self.alloc(1);
                out.push(Instr::Imm {
                    dst: r,
                    v: Cell::Pool(*p),
                });
                (r, 1)
            }
            Atom::Var(x) => self.load_var_slice(x, 0, None, out),
        }
    }

    /// Loads `n` cells of a variable starting at cell offset `off`
    /// (None = the whole value).
    fn load_var_slice(
        &mut self,
        x: &str,
        off: usize,
        n: Option<u16>,
        out: &mut Vec<Instr>,
    ) -> (u16, u16) {
        let size = self.prog.size_of(&self.type_of_var(x)) as u16;
        let want = n.unwrap_or(size - off as u16);
        if let Some((r, _)) = self.reg_map.get(x) {
            return (r + off as u16, want);
        }
        if let Some(layout) = self.layout {
            if let Some((slot, _)) = layout.slot(x) {
                let r = self.alloc(want);
                out.push(Instr::LoadFrame {
                    dst: r,
                    back: (layout.frame_size - slot - off) as u32,
                    n: want,
                });
                return (r, want);
            }
        }
        // injected observation globals
        match x {
            "data" => {
                let (p, _) = self.data.expect("data checked at compile entry");
                let r = self.alloc(1);
                out.push(Instr::Imm {
                    dst: r,
                    v: Cell::Pool(p),
                });
                (r, 1)
            }
            "dataLen" => {
                let (_, len) = self.data.expect("data checked at compile entry");
                let r = self.alloc(1);
                out.push(Instr::Imm {
                    dst: r,
                    v: Cell::I(len as i64),
                });
                (r, 1)
            }
            _ => unreachable!("variable '{}' has no location (codegen bug)", x),
        }
    }

    /// Loads an atom into a specific register run.
    fn load_atom_into(&mut self, a: &Atom, dst: u16, out: &mut Vec<Instr>) -> u16 {
        match a {
            Atom::Const(v) => {
                out.push(Instr::Imm {
                    dst,
                    v: Cell::from_value(*v),
                });
                1
            }
            Atom::Pool(p) => {
                out.push(Instr::Imm {
                    dst,
                    v: Cell::Pool(*p),
                });
                1
            }
            Atom::Var(_) => {
                let (src, n) = self.load_atom(a, out);
                if n > 0 && src != dst {
                    out.push(Instr::Mov { dst, src, n });
                }
                n
            }
        }
    }

    /// Writes a computed register run to its destination.
    fn store_dest(&mut self, dst: &Dest, src: u16, n: u16, out: &mut Vec<Instr>) {
        match dst {
            Dest::Var(v) => {
                if let Some(layout) = self.layout {
                    if let Some((slot, size)) = layout.slot(v) {
                        debug_assert_eq!(size as u16, n);
                        if n > 0 {
                            out.push(Instr::StoreFrame {
                                src,
                                back: (layout.frame_size - slot) as u32,
                                n,
                            });
                        }
                        return;
                    }
                }
                match self.reg_map.get(v).copied() {
                    Some((r, rn)) => {
                        debug_assert_eq!(rn, n);
                        if n > 0 && r != src {
                            out.push(Instr::Mov { dst: r, src, n });
                        }
                    }
                    None => {
                        // allocate a dedicated run: never alias another
                        // variable's registers
                        let r = self.alloc(n);
                        if n > 0 {
                            out.push(Instr::Mov { dst: r, src, n });
                        }
                        self.reg_map.insert(v.to_string(), (r, n));
                    }
                }
            }
            Dest::Ret => {
                match self.layout {
                    Some(layout) => {
                        let addr = self.alloc(1);
                        out.push(Instr::LoadFrame {
                            dst: addr,
                            back: (layout.frame_size - layout.ret_val_loc_slot) as u32,
                            n: 1,
                        });
                        if n > 0 {
                            out.push(Instr::WriteRel { addr, src, n });
                        } else {
                            // the load keeps the slot read checked even
                            // for unit returns
                            let _ = addr;
                        }
                    }
                    None => out.push(Instr::Ret { src, n }),
                }
            }
        }
    }

    fn emit_tstmts(
        &mut self,
        stmts: &[TStmt<Payload>],
        out: &mut Vec<Instr>,
    ) -> Result<(), CompileError> {
        for s in stmts {
            match s {
                TStmt::Other(Payload::Op(op)) => self.emit_op(op, out)?,
                TStmt::Other(_) => {
                    return Err(CompileError::Codegen("internal: bad other payload".into()))
                }
                TStmt::Checkpoint(_, next) => {
                    let t = self.next_target(*next)?;
                    out.push(Instr::SetNext { t });
                    out.push(Instr::Halt);
                }
                TStmt::Call(Payload::Call(call), next) => {
                    let ret = match next {
                        Next::Block(b) => self.block_base + *b as u32,
                        Next::Return => {
                            return Err(CompileError::Codegen(
                                "internal: tail call survived normalization".into(),
                            ))
                        }
                    };
                    self.lower_call(call, ret, out)?;
                }
                TStmt::Call(..) => {
                    return Err(CompileError::Codegen("internal: bad call payload".into()))
                }
                TStmt::Jump(Next::Block(b)) => {
                    out.push(Instr::Jump {
                        t: Target::Block(self.block_base + *b as u32),
                    });
                }
                TStmt::Jump(Next::Return) => self.lower_return(out)?,
                TStmt::If(Payload::If(cond), thn, els) => {
                    let c = self.emit_cond(cond, out)?;
                    let mut thn_out = Vec::new();
                    self.emit_tstmts(thn, &mut thn_out)?;
                    let mut els_out = Vec::new();
                    self.emit_tstmts(els, &mut els_out)?;
                    out.push(Instr::Branch {
                        cond: c,
                        thn: thn_out,
                        els: els_out,
                    });
                }
                TStmt::If(..) => {
                    return Err(CompileError::Codegen("internal: bad if payload".into()))
                }
            }
        }
        Ok(())
    }

    /// Direct (frameless) emission: the statement list contains no
    /// checkpoints, calls to decomposed functions, or jumps.
    fn emit_tstmts_direct(
        &mut self,
        stmts: &[Stmt<Payload>],
        out: &mut Vec<Instr>,
    ) -> Result<(), CompileError> {
        for s in stmts {
            match s {
                Stmt::Other(Payload::Op(op)) => self.emit_op(op, out)?,
                Stmt::If(Payload::If(cond), thn, els) => {
                    let c = self.emit_cond(cond, out)?;
                    let mut thn_out = Vec::new();
                    self.emit_tstmts_direct(thn, &mut thn_out)?;
                    let mut els_out = Vec::new();
                    self.emit_tstmts_direct(els, &mut els_out)?;
                    out.push(Instr::Branch {
                        cond: c,
                        thn: thn_out,
                        els: els_out,
                    });
                }
                _ => {
                    return Err(CompileError::Codegen(
                        "internal: checkpoint or decomposed call in a resample-free function"
                            .into(),
                    ))
                }
            }
        }
        Ok(())
    }

    fn next_target(&self, next: Next) -> Result<Target, CompileError> {
        match next {
            Next::Block(b) => Ok(Target::Block(self.block_base + b as u32)),
            Next::Return => Err(CompileError::Codegen(
                "internal: checkpoint at function tail survived normalization".into(),
            )),
        }
    }

    /// Emits the call sequence: write the callee frame above the stack
    /// top (ra, retValLoc, parameters), push it, jump to the callee
    /// entry.
    fn lower_call(
        &mut self,
        call: &CallPayload,
        ret_block: u32,
        out: &mut Vec<Instr>,
    ) -> Result<(), CompileError> {
        let layout = self
            .layout
            .ok_or_else(|| CompileError::Codegen("internal: call outside a frame".into()))?;
        let callee = &self.layouts[&call.func];
        let def = self.prog.func(&call.func).expect("callee exists");

        let prefix: u16 = 2 + def
            .params
            .iter()
            .map(|(_, t)| self.prog.size_of(t) as u16)
            .sum::<u16>();
        let run = self.alloc(prefix);
        out.push(Instr::Imm {
            dst: run + callee.ra_slot as u16,
            v: Cell::Blk(BlockRef::Block(ret_block)),
        });
        let (dst_slot, _) = layout
            .slot(&call.dst)
            .expect("call destinations always have frame slots");
        out.push(Instr::FrameAddr {
            dst: run + callee.ret_val_loc_slot as u16,
            back: (layout.frame_size - dst_slot) as u32,
        });
        let mut at = run + 2;
        for (arg, (_, pty)) in call.args.iter().zip(&def.params) {
            let n = self.prog.size_of(pty) as u16;
            let wrote = self.load_atom_into(arg, at, out);
            debug_assert_eq!(wrote, n);
            at += n;
        }
        out.push(Instr::StoreAbove {
            src: run,
            above: 0,
            n: prefix,
        });
        out.push(Instr::PushFrame {
            n: callee.frame_size as u32,
        });
        out.push(Instr::Jump {
            t: Target::Block(self.entries[&call.func]),
        });
        Ok(())
    }

    /// Emits the return sequence: fetch `ra`, pop the frame, jump to the
    /// stored block. The return value was already written through
    /// `retValLoc` by the tail statement.
    fn lower_return(&mut self, out: &mut Vec<Instr>) -> Result<(), CompileError> {
        let layout = self
            .layout
            .ok_or_else(|| CompileError::Codegen("internal: return outside a frame".into()))?;
        let ra = self.alloc(1);
        out.push(Instr::LoadFrame {
            dst: ra,
            back: (layout.frame_size - layout.ra_slot) as u32,
            n: 1,
        });
        out.push(Instr::PopFrame {
            n: layout.frame_size as u32,
        });
        out.push(Instr::Jump { t: Target::Reg(ra) });
        Ok(())
    }

    fn emit_cond(&mut self, cond: &Cond, out: &mut Vec<Instr>) -> Result<u16, CompileError> {
        match &cond.test {
            PatTest::Bool => {
                let (r, _) = self.load_atom(&cond.scrut, out);
                Ok(r)
            }
            PatTest::Tag(con) => {
                let info = &self.prog.cons[con];
                let boxed = self.prog.variant_is_recursive(&info.variant);
                let tag = self.alloc(1);
                if boxed {
                    let (base, _) = self.load_atom(&cond.scrut, out);
                    out.push(Instr::ReadPool {
                        dst: tag,
                        base,
                        index: None,
                        elem: 0,
                        off: 0,
                        n: 1,
                    });
                } else {
                    let scrut_var = match &cond.scrut {
                        Atom::Var(x) => x.clone(),
                        _ => {
                            return Err(CompileError::Codegen(
                                "internal: variant scrutinee must be a variable".into(),
                            ))
                        }
                    };
                    let (r, _) = self.load_var_slice(&scrut_var, 0, Some(1), out);
                    if r != tag {
                        out.push(Instr::Mov { dst: tag, src: r, n: 1 });
                    }
                }
                let want = self.alloc(1);
                out.push(Instr::Imm {
                    dst: want,
                    v: Cell::I(info.tag as i64),
                });
                let res = self.alloc(1);
                out.push(Instr::Prim {
                    dst: res,
                    op: PrimOp::EqI,
                    a: tag,
                    b: want,
                });
                Ok(res)
            }
            PatTest::Lit(v) => {
                let (a, _) = self.load_atom(&cond.scrut, out);
                let b = self.alloc(1);
                out.push(Instr::Imm {
                    dst: b,
                    v: Cell::from_value(*v),
                });
                let res = self.alloc(1);
                let op = match v {
                    Value::Int(_) => PrimOp::EqI,
                    Value::Float(_) => PrimOp::EqF,
                    Value::Bool(_) => PrimOp::EqB,
                };
                out.push(Instr::Prim {
                    dst: res,
                    op,
                    a,
                    b,
                });
                Ok(res)
            }
        }
    }

    fn emit_op(&mut self, op: &OtherOp, out: &mut Vec<Instr>) -> Result<(), CompileError> {
        match op {
            OtherOp::Assume { dst, dist, args } => {
                let run = self.alloc(dist.arity() as u16);
                for (i, a) in args.iter().enumerate() {
                    self.load_atom_into(a, run + i as u16, out);
                }
                let r = self.alloc(1);
                out.push(Instr::Sample {
                    dst: r,
                    dist: *dist,
                    args: run,
                });
                self.store_dest(&Dest::Var(dst.clone()), r, 1, out);
                Ok(())
            }
            OtherOp::Observe { value, dist, args } => {
                let run = self.alloc(dist.arity() as u16);
                for (i, a) in args.iter().enumerate() {
                    self.load_atom_into(a, run + i as u16, out);
                }
                let (v, _) = self.load_atom(value, out);
                out.push(Instr::Score {
                    dist: *dist,
                    args: run,
                    value: v,
                });
                Ok(())
            }
            OtherOp::Weight { amount } => {
                let (r, _) = self.load_atom(amount, out);
                out.push(Instr::AddWeight { src: r });
                Ok(())
            }
            OtherOp::Prim { dst, op, args } => {
                if *op == Builtin::Get {
                    let (base, _) = self.load_atom(&args[0], out);
                    let (idx, _) = self.load_atom(&args[1], out);
                    let elem_ty = match &args[0] {
                        Atom::Var(x) => match self.type_of_var(x) {
                            Type::Seq(t) => *t,
                            other => {
                                return Err(CompileError::Codegen(format!(
                                    "internal: get on non-sequence {}",
                                    other
                                )))
                            }
                        },
                        _ => {
                            return Err(CompileError::Codegen(
                                "internal: get on non-variable sequence".into(),
                            ))
                        }
                    };
                    let n = self.prog.size_of(&elem_ty) as u16;
                    let r = self.alloc(n);
                    out.push(Instr::ReadPool {
                        dst: r,
                        base,
                        index: Some(idx),
                        elem: n,
                        off: 1,
                        n,
                    });
                    self.store_dest(dst, r, n, out);
                    return Ok(());
                }
                let prim = match op {
                    Builtin::Addi => PrimOp::AddI,
                    Builtin::Subi => PrimOp::SubI,
                    Builtin::Muli => PrimOp::MulI,
                    Builtin::Eqi => PrimOp::EqI,
                    Builtin::Addf => PrimOp::AddF,
                    Builtin::Subf => PrimOp::SubF,
                    Builtin::Mulf => PrimOp::MulF,
                    Builtin::Divf => PrimOp::DivF,
                    Builtin::Geqf => PrimOp::GeqF,
                    Builtin::Leqf => PrimOp::LeqF,
                    Builtin::Eqf => PrimOp::EqF,
                    Builtin::Log => PrimOp::Log,
                    Builtin::Exp => PrimOp::Exp,
                    Builtin::Get => unreachable!(),
                };
                let (a, _) = self.load_atom(&args[0], out);
                let b = if args.len() > 1 {
                    self.load_atom(&args[1], out).0
                } else {
                    a
                };
                let r = self.alloc(1);
                out.push(Instr::Prim {
                    dst: r,
                    op: prim,
                    a,
                    b,
                });
                self.store_dest(dst, r, 1, out);
                Ok(())
            }
            OtherOp::CallDirect { dst, func, args } => {
                let def = self.prog.func(func).expect("direct callee exists");
                let total: u16 = def
                    .params
                    .iter()
                    .map(|(_, t)| self.prog.size_of(t) as u16)
                    .sum();
                let run = self.alloc(total);
                let mut at = run;
                for (a, (_, pty)) in args.iter().zip(&def.params) {
                    let n = self.prog.size_of(pty) as u16;
                    let wrote = self.load_atom_into(a, at, out);
                    debug_assert_eq!(wrote, n);
                    at += n;
                }
                let nret = self.prog.size_of(&def.ret) as u16;
                let r = self.alloc(nret.max(1));
                out.push(Instr::CallDirect {
                    f: self.direct_ids[func],
                    args: run,
                    nargs: total,
                    dst: r,
                    nret,
                });
                self.store_dest(&Dest::Var(dst.clone()), r, nret, out);
                Ok(())
            }
            OtherOp::Copy { dst, src } => {
                let (r, n) = self.load_atom(src, out);
                self.store_dest(dst, r, n, out);
                Ok(())
            }
            OtherOp::MkRecord { dst, fields } => {
                let total: u16 = fields.iter().map(|(_, a)| self.atom_size(a)).sum();
                let run = self.alloc(total);
                let mut at = run;
                for (_, a) in fields {
                    at += self.load_atom_into(a, at, out);
                }
                self.store_dest(dst, run, total, out);
                Ok(())
            }
            OtherOp::MkVariant { dst, con, payload } => {
                let info = &self.prog.cons[con];
                let size = 1 + self.prog.max_payload(&info.variant) as u16;
                let run = self.alloc(size);
                out.push(Instr::Imm {
                    dst: run,
                    v: Cell::I(info.tag as i64),
                });
                self.load_atom_into(payload, run + 1, out);
                self.store_dest(dst, run, size, out);
                Ok(())
            }
            OtherOp::BindPayload {
                dst,
                scrut,
                con,
                label,
            } => {
                let info = self.prog.cons[con].clone();
                let boxed = self.prog.variant_is_recursive(&info.variant);
                let (off, n) = match label {
                    None => (0usize, self.prog.size_of(&info.payload) as u16),
                    Some(l) => match &info.payload {
                        Type::Record(fs) => {
                            let off = self.prog.field_offset(fs, l);
                            let fty = &fs.iter().find(|(fl, _)| fl == l).unwrap().1;
                            (off, self.prog.size_of(fty) as u16)
                        }
                        _ => {
                            return Err(CompileError::Codegen(
                                "internal: record pattern on non-record payload".into(),
                            ))
                        }
                    },
                };
                if boxed {
                    let (base, _) = self.load_atom(scrut, out);
                    let r = self.alloc(n);
                    out.push(Instr::ReadPool {
                        dst: r,
                        base,
                        index: None,
                        elem: 0,
                        off: (1 + off) as u16,
                        n,
                    });
                    self.store_dest(&Dest::Var(dst.clone()), r, n, out);
                } else {
                    let x = match scrut {
                        Atom::Var(x) => x.clone(),
                        _ => {
                            return Err(CompileError::Codegen(
                                "internal: variant scrutinee must be a variable".into(),
                            ))
                        }
                    };
                    let (r, _) = self.load_var_slice(&x, 1 + off, Some(n), out);
                    self.store_dest(&Dest::Var(dst.clone()), r, n, out);
                }
                Ok(())
            }
            OtherOp::BindField { dst, scrut, label } => {
                let x = match scrut {
                    Atom::Var(x) => x.clone(),
                    _ => {
                        return Err(CompileError::Codegen(
                            "internal: record scrutinee must be a variable".into(),
                        ))
                    }
                };
                let (off, n) = match self.type_of_var(&x) {
                    Type::Record(fs) => {
                        let off = self.prog.field_offset(&fs, label);
                        let fty = &fs.iter().find(|(fl, _)| fl == label).unwrap().1;
                        (off, self.prog.size_of(fty) as u16)
                    }
                    other => {
                        return Err(CompileError::Codegen(format!(
                            "internal: field bind on non-record {}",
                            other
                        )))
                    }
                };
                let (r, _) = self.load_var_slice(&x, off, Some(n), out);
                self.store_dest(&Dest::Var(dst.clone()), r, n, out);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::RandomSource;
    use crate::vm::{run_single, DEFAULT_STACK_CELLS};

    pub const FIG_SRC: &str = "recursive let f = lam p.\n\
        let s1 = assume (Gamma p p) in\n\
        resample;\n\
        let s2 = if geqf s1 1. then 2. else 5. in\n\
        let s3 =\n\
          if leqf s2 4. then\n\
            let s4 = if eqf s2 5. then 6. else f 0.5 in\n\
            addf s4 s4\n\
          else 8.\n\
        in\n\
        mulf s3 s3\n\
        in f 1.0";

    #[test]
    fn recursive_example_decomposes_into_four_blocks() {
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let (_, d) = art
            .decomposed
            .iter()
            .find(|(n, _)| n == "f")
            .expect("f is decomposed");
        assert_eq!(d.blocks.len(), 4, "blocks: {:#?}", d.blocks);

        // entry: [assume, checkpoint -> 1]
        let b0 = &d.blocks[&0];
        assert!(matches!(
            b0.as_slice(),
            [
                TStmt::Other(Payload::Op(OtherOp::Assume { .. })),
                TStmt::Checkpoint(_, Next::Block(1)),
            ]
        ));

        // block 1: [geqf, if [..] [..], leqf, if [eqf, if [.., jump 2] [call 2]] [.., jump 3]]
        let b1 = &d.blocks[&1];
        assert_eq!(b1.len(), 4);
        let TStmt::If(_, thn, els) = &b1[3] else {
            panic!("expected splitting if at tail, got {:?}", b1[3]);
        };
        assert!(matches!(els.last(), Some(TStmt::Jump(Next::Block(3)))));
        let TStmt::If(_, inner_thn, inner_els) = &thn[1] else {
            panic!("expected nested if, got {:?}", thn[1]);
        };
        assert!(matches!(inner_thn.last(), Some(TStmt::Jump(Next::Block(2)))));
        assert!(matches!(
            inner_els.as_slice(),
            [TStmt::Call(Payload::Call(CallPayload { .. }), Next::Block(2))]
        ));

        // block 2: [addf, jump 3]; block 3: [mulf -> ret, jump return]
        assert!(matches!(
            d.blocks[&2].as_slice(),
            [TStmt::Other(_), TStmt::Jump(Next::Block(3))]
        ));
        assert!(matches!(
            d.blocks[&3].as_slice(),
            [TStmt::Other(_), TStmt::Jump(Next::Return)]
        ));
        assert!(crate::stmtir::check_tail_position(&d.blocks));
    }

    #[test]
    fn recursive_example_frame_layout() {
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let layout = &art.program.frame_layouts["f"];
        assert_eq!(layout.ra_slot, 0);
        assert_eq!(layout.ret_val_loc_slot, 1);
        assert_eq!(layout.param_slots, vec![("p".to_string(), 2)]);
        let locals: Vec<&str> = layout.local_slots.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(locals, vec!["s1", "s3", "s4"]);
        assert_eq!(layout.frame_size, 6);

        // t1/t2/t3 and s2 stay block-local
        assert!(layout.slot("s2").is_none());
        assert!(layout.slot("t1").is_none());
    }

    const GEOMETRIC: &str = "recursive let geometric = lam p.\n\
        let x = assume (Bernoulli p) in\n\
        if x then\n\
          weight (log 1.5);\n\
          addi 1 (geometric p)\n\
        else 1\n\
        in geometric 0.5";

    #[test]
    fn geometric_runs_on_forced_tapes() {
        use crate::dists::Value;
        let art = compile(GEOMETRIC, &CompileOptions::default()).unwrap();
        let prog = &art.program;

        // tails immediately: result 1, weight 0
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Bool(false)]),
            DEFAULT_STACK_CELLS,
        );
        run_single(prog, &mut s).unwrap();
        assert_eq!(s.result(prog), &[Cell::I(1)]);
        assert_eq!(s.log_weight, 0.0);
        assert_eq!(s.sp(), prog.result_cells, "stack pointer back to entry");

        // heads then tails: result 2, weight log 1.5
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Bool(true), Value::Bool(false)]),
            DEFAULT_STACK_CELLS,
        );
        run_single(prog, &mut s).unwrap();
        assert_eq!(s.result(prog), &[Cell::I(2)]);
        assert!((s.log_weight - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recursive_example_runs() {
        use crate::dists::Value;
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let prog = &art.program;
        // s1 = 0.5 (< 1): s2 = 5., leqf 5. 4. false -> s3 = 8., result 64
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Float(0.5)]),
            DEFAULT_STACK_CELLS,
        );
        run_single(prog, &mut s).unwrap();
        assert_eq!(s.result(prog), &[Cell::F(64.0)]);
        assert_eq!(s.sp(), prog.result_cells);

        // s1 = 2.0: s2 = 2., t3 false -> recurse; inner s1 = 0.3 returns
        // 64; s4 = 64, s3 = 128, result 16384
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Float(2.0), Value::Float(0.3)]),
            DEFAULT_STACK_CELLS,
        );
        run_single(prog, &mut s).unwrap();
        assert_eq!(s.result(prog), &[Cell::F(16384.0)]);
        assert_eq!(s.sp(), prog.result_cells);
    }

    #[test]
    fn stack_grows_and_shrinks_across_checkpoints() {
        use crate::vm::sim;
        use crate::dists::Value;
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let prog = &art.program;
        // 0.5 triggers one recursion level; at each checkpoint the stack
        // holds main frame + one f frame per active call
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Float(2.0), Value::Float(0.3)]),
            DEFAULT_STACK_CELLS,
        );
        let main_size = prog.main_frame_size;
        let f_size = prog.frame_layouts["f"].frame_size;
        let r = prog.result_cells;

        let mut b = s.next;
        let mut sps_at_checkpoints = Vec::new();
        loop {
            let (nb, cp) = sim(prog, b, &mut s).unwrap();
            if nb == crate::vm::BlockRef::Stop {
                break;
            }
            if cp {
                sps_at_checkpoints.push(s.sp());
            }
            b = nb;
        }
        assert_eq!(
            sps_at_checkpoints,
            vec![r + main_size + f_size, r + main_size + 2 * f_size]
        );
        assert_eq!(s.sp(), r);
    }

    #[test]
    fn stack_overflow_reported() {
        use crate::dists::Value;
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let prog = &art.program;
        // every draw >= 1.0 forces another recursion; tiny stack blows up
        let tape: Vec<Value> = (0..200).map(|_| Value::Float(2.0)).collect();
        let mut s = prog.init_state(RandomSource::tape(tape), 32);
        let err = run_single(prog, &mut s).unwrap_err();
        assert!(matches!(err, crate::error::VmError::StackOverflow { .. }));
    }

    #[test]
    fn copy_state_copies_live_prefix_only() {
        use crate::dists::Value;
        use crate::vm::{copy_state, sim};
        let art = compile(FIG_SRC, &CompileOptions::default()).unwrap();
        let prog = &art.program;
        let mut s = prog.init_state(
            RandomSource::tape(vec![Value::Float(2.0), Value::Float(0.3)]),
            DEFAULT_STACK_CELLS,
        );
        let (b, cp) = sim(prog, s.next, &mut s).unwrap();
        assert!(cp);
        let copied = copy_state(&s);
        assert_eq!(copied.stack.len(), s.sp(), "exactly the live prefix");
        assert!(copied.stack.len() < 32, "far below capacity");

        // mutation isolation: run the copy, original untouched
        let before = s.stack.clone();
        let mut copied = copied;
        let (_, _) = sim(prog, b, &mut copied).unwrap();
        assert_eq!(s.stack, before);
    }
}
