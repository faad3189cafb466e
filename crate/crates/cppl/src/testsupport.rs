//! Generators and oracles shared between unit tests, integration tests,
//! and the acceptance suite. Not part of the public API surface.

use rand::Rng;

use crate::stmtir::{Decomposed, Next, Stmt, TStmt};

/// Random abstract statement programs. `if` payloads count up from 0 (so
/// a branch-decision vector can be indexed by payload); leaf payloads
/// start at 1000.
pub fn gen_stmts<R: Rng>(rng: &mut R, depth: usize) -> Vec<Stmt<u32>> {
    let mut if_ctr = 0u32;
    let mut leaf_ctr = 1000u32;
    gen_list(rng, depth, &mut if_ctr, &mut leaf_ctr)
}

fn gen_list<R: Rng>(rng: &mut R, depth: usize, if_ctr: &mut u32, leaf_ctr: &mut u32) -> Vec<Stmt<u32>> {
    let len = rng.random_range(0..6usize);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let roll: f64 = rng.random();
        let s = if roll < 0.45 || (depth == 0 && roll >= 0.8) {
            *leaf_ctr += 1;
            Stmt::Other(*leaf_ctr)
        } else if roll < 0.6 {
            *leaf_ctr += 1;
            Stmt::Checkpoint(*leaf_ctr)
        } else if roll < 0.8 {
            *leaf_ctr += 1;
            Stmt::Call(*leaf_ctr)
        } else {
            let id = *if_ctr;
            *if_ctr += 1;
            let thn = gen_list(rng, depth - 1, if_ctr, leaf_ctr);
            let els = gen_list(rng, depth - 1, if_ctr, leaf_ctr);
            Stmt::If(id, thn, els)
        };
        out.push(s);
    }
    out
}

/// Number of `if`s in the program (their payloads are 0..n).
pub fn max_if_id(srcs: &[Stmt<u32>]) -> u32 {
    srcs.iter()
        .map(|s| match s {
            Stmt::If(id, a, b) => (id + 1).max(max_if_id(a)).max(max_if_id(b)),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

/// Straight-line execution of the source statement list under a fixed
/// branch-decision vector: the sequence of leaf payloads executed.
pub fn flatten_stmts(srcs: &[Stmt<u32>], dec: &impl Fn(u32) -> bool) -> Vec<u32> {
    let mut out = Vec::new();
    walk_stmts(srcs, dec, &mut out);
    out
}

fn walk_stmts(srcs: &[Stmt<u32>], dec: &impl Fn(u32) -> bool, out: &mut Vec<u32>) {
    for s in srcs {
        match s {
            Stmt::Other(p) | Stmt::Checkpoint(p) | Stmt::Call(p) => out.push(*p),
            Stmt::If(id, thn, els) => {
                if dec(*id) {
                    walk_stmts(thn, dec, out);
                } else {
                    walk_stmts(els, dec, out);
                }
            }
        }
    }
}

enum Flow {
    Fall,
    Goto(usize),
    Stop,
}

/// Executes the decomposed blocks under the same decision vector,
/// following jumps and treating calls as an emitted payload followed by a
/// transfer to the return block.
pub fn flatten_blocks(d: &Decomposed<u32>, dec: &impl Fn(u32) -> bool) -> Vec<u32> {
    let mut out = Vec::new();
    let mut cur = d.entry;
    loop {
        match walk_block(&d.blocks[&cur], dec, &mut out) {
            Flow::Goto(b) => cur = b,
            Flow::Stop | Flow::Fall => return out,
        }
    }
}

fn walk_block(ts: &[TStmt<u32>], dec: &impl Fn(u32) -> bool, out: &mut Vec<u32>) -> Flow {
    for t in ts {
        match t {
            TStmt::Other(p) => out.push(*p),
            TStmt::Checkpoint(p, n) | TStmt::Call(p, n) => {
                out.push(*p);
                return next_flow(*n);
            }
            TStmt::Jump(n) => return next_flow(*n),
            TStmt::If(id, thn, els) => {
                let flow = if dec(*id) {
                    walk_block(thn, dec, out)
                } else {
                    walk_block(els, dec, out)
                };
                match flow {
                    Flow::Fall => {}
                    other => return other,
                }
            }
        }
    }
    Flow::Fall
}

fn next_flow(n: Next) -> Flow {
    match n {
        Next::Block(i) => Flow::Goto(i),
        Next::Return => Flow::Stop,
    }
}

use crate::ast::{Bind, Builtin, Const, Term, Type};

/// Well-typed random programs over scalars: a few (possibly recursive)
/// functions and a main body, exercising lets, sugar, branches,
/// builtins, and the probabilistic forms. Used for the parse/pretty
/// round-trip and the normalize/validate properties; the programs are
/// never executed, so recursion need not terminate.
pub fn gen_typed_program<R: Rng>(rng: &mut R) -> Term {
    let mut g = Gen {
        rng,
        fresh: 0,
        funcs: Vec::new(),
    };
    let nfuncs = g.rng.random_range(0..3usize);
    let mut binds = Vec::new();
    for _ in 0..nfuncs {
        let param_ty = g.scalar_ty();
        let ret_ty = g.scalar_ty();
        let name = g.fresh_name("fn");
        let param = g.fresh_name("a");
        // visible to itself: recursion allowed
        g.funcs.push((name.clone(), param_ty.clone(), ret_ty.clone()));
        let body = g.expr(&ret_ty, &[(param.clone(), param_ty.clone())], 3);
        binds.push(Bind {
            name,
            ann: Some(Type::Arrow(
                Box::new(param_ty.clone()),
                Box::new(ret_ty.clone()),
            )),
            rhs: Term::Lam {
                param,
                ann: Some(param_ty),
                body: Box::new(body),
            },
        });
    }
    let main_ty = g.scalar_ty();
    let main = g.expr(&main_ty, &[], 4);
    binds
        .into_iter()
        .rev()
        .fold(main, |acc, b| Term::RecLets {
            binds: vec![b],
            body: Box::new(acc),
        })
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    fresh: u32,
    funcs: Vec<(String, Type, Type)>,
}

impl<'a, R: Rng> Gen<'a, R> {
    fn fresh_name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{}{}", prefix, self.fresh)
    }

    fn scalar_ty(&mut self) -> Type {
        match self.rng.random_range(0..3u32) {
            0 => Type::Int,
            1 => Type::Float,
            _ => Type::Bool,
        }
    }

    fn literal(&mut self, ty: &Type) -> Term {
        match ty {
            Type::Int => Term::int(self.rng.random_range(-20..20i64)),
            Type::Float => {
                Term::float((self.rng.random_range(-200..200i64) as f64) / 8.0)
            }
            Type::Bool => Term::bool(self.rng.random_bool(0.5)),
            _ => unreachable!(),
        }
    }

    fn expr(&mut self, ty: &Type, env: &[(String, Type)], depth: usize) -> Term {
        let vars: Vec<&(String, Type)> = env.iter().filter(|(_, t)| t == ty).collect();
        if depth == 0 {
            return if !vars.is_empty() && self.rng.random_bool(0.6) {
                let pick = self.rng.random_range(0..vars.len());
                Term::var(&vars[pick].0)
            } else {
                self.literal(ty)
            };
        }
        match self.rng.random_range(0..10u32) {
            0 | 1 => {
                // let binding of a random scalar type
                let bty = self.scalar_ty();
                let rhs = self.expr(&bty, env, depth - 1);
                let name = self.fresh_name("x");
                let mut env2 = env.to_vec();
                env2.push((name.clone(), bty));
                Term::Let {
                    name,
                    ann: None,
                    rhs: Box::new(rhs),
                    body: Box::new(self.expr(ty, &env2, depth - 1)),
                }
            }
            2 | 3 => {
                // if sugar
                let cond = self.expr(&Type::Bool, env, depth - 1);
                Term::If(
                    Box::new(cond),
                    Box::new(self.expr(ty, env, depth - 1)),
                    Box::new(self.expr(ty, env, depth - 1)),
                )
            }
            4 => {
                // sequencing sugar with a probabilistic statement
                let stmt = match self.rng.random_range(0..3u32) {
                    0 => Term::Weight(Box::new(Term::float(0.25))),
                    1 => Term::Resample,
                    _ => Term::Observe(
                        Box::new(Term::float(0.5)),
                        Box::new(Term::Dist(
                            crate::ast::DistName::Normal,
                            vec![Term::float(0.0), Term::float(1.0)],
                        )),
                    ),
                };
                Term::Seqcomp(Box::new(stmt), Box::new(self.expr(ty, env, depth - 1)))
            }
            5 if *ty == Type::Bool => Term::Assume(Box::new(Term::Dist(
                crate::ast::DistName::Bernoulli,
                vec![Term::float(0.5)],
            ))),
            6 => {
                // call a known function returning ty
                let cands: Vec<(String, Type)> = self
                    .funcs
                    .iter()
                    .filter(|(_, _, r)| r == ty)
                    .map(|(n, p, _)| (n.clone(), p.clone()))
                    .collect();
                if cands.is_empty() {
                    self.expr(ty, env, 0)
                } else {
                    let pick = self.rng.random_range(0..cands.len());
                    let (name, pty) = cands[pick].clone();
                    let arg = self.expr(&pty, env, depth - 1);
                    Term::app(Term::var(&name), vec![arg])
                }
            }
            _ => {
                // builtin application of the right result type
                let (b, arg_ty) = match ty {
                    Type::Int => (
                        [Builtin::Addi, Builtin::Subi, Builtin::Muli]
                            [self.rng.random_range(0..3usize)],
                        Type::Int,
                    ),
                    Type::Float => (
                        [Builtin::Addf, Builtin::Subf, Builtin::Mulf, Builtin::Divf]
                            [self.rng.random_range(0..4usize)],
                        Type::Float,
                    ),
                    Type::Bool => (
                        [Builtin::Eqi, Builtin::Geqf, Builtin::Leqf, Builtin::Eqf]
                            [self.rng.random_range(0..4usize)],
                        if self.rng.random_bool(0.5) {
                            Type::Int
                        } else {
                            Type::Float
                        },
                    ),
                    _ => unreachable!(),
                };
                let arg_ty = if b == Builtin::Eqi { Type::Int } else { arg_ty };
                let arg_ty = match b {
                    Builtin::Geqf | Builtin::Leqf | Builtin::Eqf => Type::Float,
                    _ => arg_ty,
                };
                let a = self.expr(&arg_ty, env, depth - 1);
                let c = self.expr(&arg_ty, env, depth - 1);
                Term::app(Term::Const(Const::Builtin(b)), vec![a, c])
            }
        }
    }
}
