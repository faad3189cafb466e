//! A-normal form transformation.
//!
//! There is no separate ANF grammar: the output is an ordinary [`Term`]
//! satisfying a structural invariant, checked by [`validate_anf`]:
//!
//! 1. every let-bound expression is trivial, contains at most one
//!    function application, or is a match with a trivial scrutinee;
//! 2. every match scrutinee is a variable or constant;
//! 3. arguments of applications, constructors, and distributions are
//!    variables or constants.
//!
//! Additionally, `assume`, `observe`, `weight`, `resample`, and calls to
//! user functions are always let-bound rather than left at a function's
//! tail, so the statement lowering sees every checkpoint and call site as
//! its own statement with a named destination. (At the tail of a
//! let-bound match branch they already have the let's destination, so no
//! binding is inserted there.) Fresh temporaries are `t1`, `t2`, ... from
//! a namespace the parser reserves; the counter runs across the whole
//! program so names stay globally unique.

use std::collections::HashMap;

use crate::ast::{Const, Ident, Term, Type};
use crate::frontend::typecheck::{FuncDef, TypedProgram};

pub fn is_atom(t: &Term) -> bool {
    matches!(
        t,
        Term::Var(_) | Term::Const(Const::Int(_) | Const::Float(_) | Const::Bool(_))
    )
}

/// Normalizes every function body and the main body of a typed program.
/// The returned program has the same shape; `types` gains entries for the
/// introduced temporaries.
pub fn normalize(prog: &TypedProgram) -> TypedProgram {
    let mut out = prog.clone();
    let mut counter = 0u32;
    let mut funcs = Vec::new();
    for f in &prog.funcs {
        let mut n = Normalizer {
            prog,
            counter: &mut counter,
            new_types: HashMap::new(),
        };
        let body = n.body(&f.body, true);
        let new_types = n.new_types;
        out.types.extend(new_types);
        funcs.push(FuncDef {
            body,
            ..f.clone()
        });
    }
    let mut n = Normalizer {
        prog,
        counter: &mut counter,
        new_types: HashMap::new(),
    };
    let main = n.body(&prog.main, true);
    let new_types = n.new_types;
    out.types.extend(new_types);
    out.funcs = funcs;
    out.main = main;
    out
}

struct Normalizer<'a> {
    prog: &'a TypedProgram,
    counter: &'a mut u32,
    new_types: HashMap<Ident, Type>,
}

impl<'a> Normalizer<'a> {
    fn fresh(&mut self, ty: Type) -> Ident {
        *self.counter += 1;
        let name = format!("t{}", self.counter);
        self.new_types.insert(name.clone(), ty);
        name
    }

    /// Normalizes a body. With `fn_tail` set, the tail is a function's
    /// return position: checkpoints and calls there are let-bound so they
    /// never end up annotated `return` by the decomposition, and match
    /// branches inherit the flag.
    fn body(&mut self, t: &Term, fn_tail: bool) -> Term {
        let mut binds = Vec::new();
        let tail = self.tail_expr(t, &mut binds, fn_tail);
        let tail = if fn_tail && must_bind(&tail) {
            let ty = self.type_of(&tail);
            let tmp = self.fresh(ty);
            binds.push((tmp.clone(), tail));
            Term::Var(tmp)
        } else {
            tail
        };
        binds.into_iter().rev().fold(tail, |acc, (name, rhs)| Term::Let {
            name,
            ann: None,
            rhs: Box::new(rhs),
            body: Box::new(acc),
        })
    }

    fn tail_expr(&mut self, t: &Term, binds: &mut Vec<(Ident, Term)>, fn_tail: bool) -> Term {
        match t {
            Term::Let { name, rhs, body, .. } => {
                let r = self.expr(rhs, binds);
                binds.push((name.clone(), r));
                self.tail_expr(body, binds, fn_tail)
            }
            Term::Match {
                scrut,
                pat,
                thn,
                els,
            } if fn_tail => {
                let s = self.atom(scrut, binds);
                Term::Match {
                    scrut: Box::new(s),
                    pat: pat.clone(),
                    thn: Box::new(self.body(thn, true)),
                    els: Box::new(self.body(els, true)),
                }
            }
            _ => self.expr(t, binds),
        }
    }

    /// Normalizes `t` to a single operation with atomic arguments,
    /// pushing prerequisite bindings.
    fn expr(&mut self, t: &Term, binds: &mut Vec<(Ident, Term)>) -> Term {
        match t {
            Term::Var(_) | Term::Const(_) | Term::Resample => t.clone(),
            Term::Let { name, rhs, body, .. } => {
                let r = self.expr(rhs, binds);
                binds.push((name.clone(), r));
                self.expr(body, binds)
            }
            Term::App(..) => {
                let (head, args) = t.spine();
                let head = head.clone();
                let args: Vec<Term> = args
                    .into_iter()
                    .cloned()
                    .collect::<Vec<_>>()
                    .iter()
                    .map(|a| self.atom(a, binds))
                    .collect();
                Term::app(head, args)
            }
            Term::Assume(d) => Term::Assume(Box::new(self.dist(d, binds))),
            Term::Weight(w) => Term::Weight(Box::new(self.atom(w, binds))),
            Term::Observe(v, d) => {
                let v = self.atom(v, binds);
                let d = self.dist(d, binds);
                Term::Observe(Box::new(v), Box::new(d))
            }
            Term::Dist(name, args) => Term::Dist(
                *name,
                args.iter().map(|a| self.atom(a, binds)).collect(),
            ),
            Term::Match {
                scrut,
                pat,
                thn,
                els,
            } => {
                let s = self.atom(scrut, binds);
                Term::Match {
                    scrut: Box::new(s),
                    pat: pat.clone(),
                    thn: Box::new(self.body(thn, false)),
                    els: Box::new(self.body(els, false)),
                }
            }
            Term::Record(fields) => Term::Record(
                fields
                    .iter()
                    .map(|(l, e)| (l.clone(), self.atom(e, binds)))
                    .collect(),
            ),
            Term::Seq(elems) => {
                Term::Seq(elems.iter().map(|e| self.atom(e, binds)).collect())
            }
            Term::Con(name, arg) => Term::Con(name.clone(), Box::new(self.atom(arg, binds))),
            Term::Lam { .. }
            | Term::RecLets { .. }
            | Term::TypeDecl { .. }
            | Term::ConDecl { .. }
            | Term::If(..)
            | Term::Seqcomp(..) => {
                unreachable!("form not valid inside a typed function body")
            }
        }
    }

    fn atom(&mut self, t: &Term, binds: &mut Vec<(Ident, Term)>) -> Term {
        let c = self.expr(t, binds);
        if is_atom(&c) {
            c
        } else {
            let ty = self.type_of(&c);
            let tmp = self.fresh(ty);
            binds.push((tmp.clone(), c));
            Term::Var(tmp)
        }
    }

    fn dist(&mut self, t: &Term, binds: &mut Vec<(Ident, Term)>) -> Term {
        match t {
            Term::Dist(name, args) => Term::Dist(
                *name,
                args.iter().map(|a| self.atom(a, binds)).collect(),
            ),
            _ => unreachable!("assume/observe argument is always a distribution"),
        }
    }

    /// Type of an ANF-normalized expression, from binder types and
    /// builtin/function signatures. Total on type-checked input.
    fn type_of(&self, t: &Term) -> Type {
        match t {
            Term::Var(x) => self
                .new_types
                .get(x)
                .or_else(|| self.prog.types.get(x))
                .cloned()
                .unwrap_or_else(|| match x.as_str() {
                    "data" => Type::Seq(Box::new(Type::Float)),
                    "dataLen" => Type::Int,
                    _ => unreachable!("untyped variable {}", x),
                }),
            Term::Const(Const::Int(_)) => Type::Int,
            Term::Const(Const::Float(_)) => Type::Float,
            Term::Const(Const::Bool(_)) => Type::Bool,
            Term::Const(_) => unreachable!("string/builtin constant as value"),
            Term::Resample | Term::Weight(_) | Term::Observe(..) => Type::unit(),
            Term::Assume(d) => match d.as_ref() {
                Term::Dist(name, _) => dist_value_type(*name),
                _ => unreachable!(),
            },
            Term::App(..) => {
                let (head, args) = t.spine();
                match head {
                    Term::Const(Const::Builtin(b)) => match b {
                        crate::ast::Builtin::Addi
                        | crate::ast::Builtin::Subi
                        | crate::ast::Builtin::Muli => Type::Int,
                        crate::ast::Builtin::Eqi
                        | crate::ast::Builtin::Geqf
                        | crate::ast::Builtin::Leqf
                        | crate::ast::Builtin::Eqf => Type::Bool,
                        crate::ast::Builtin::Addf
                        | crate::ast::Builtin::Subf
                        | crate::ast::Builtin::Mulf
                        | crate::ast::Builtin::Divf
                        | crate::ast::Builtin::Log
                        | crate::ast::Builtin::Exp => Type::Float,
                        crate::ast::Builtin::Get => match self.type_of(args[0]) {
                            Type::Seq(elem) => *elem,
                            other => unreachable!("get on non-sequence {}", other),
                        },
                    },
                    Term::Var(f) => self
                        .prog
                        .func(f)
                        .map(|d| d.ret.clone())
                        .unwrap_or_else(|| unreachable!("call to unknown function {}", f)),
                    _ => unreachable!("invalid application head"),
                }
            }
            Term::Match { thn, .. } => self.type_of_body(thn),
            Term::Record(fields) => {
                let mut fs: Vec<(Ident, Type)> = fields
                    .iter()
                    .map(|(l, e)| (l.clone(), self.type_of(e)))
                    .collect();
                fs.sort_by(|a, b| a.0.cmp(&b.0));
                Type::Record(fs)
            }
            Term::Seq(elems) => {
                let elem = elems
                    .first()
                    .map(|e| self.type_of(e))
                    .unwrap_or(Type::Float);
                Type::Seq(Box::new(elem))
            }
            Term::Con(name, _) => Type::Variant(self.prog.cons[name].variant.clone()),
            _ => unreachable!("type_of on non-ANF form"),
        }
    }

    fn type_of_body(&self, t: &Term) -> Type {
        match t {
            Term::Let { body, .. } => self.type_of_body(body),
            _ => self.type_of(t),
        }
    }
}

fn dist_value_type(name: crate::ast::DistName) -> Type {
    use crate::ast::DistName::*;
    match name {
        Bernoulli => Type::Bool,
        Poisson | Binomial => Type::Int,
        _ => Type::Float,
    }
}

/// True when a tail expression must instead be let-bound (checkpoints and
/// call sites must be statement-granular).
fn must_bind(t: &Term) -> bool {
    match t {
        Term::Assume(_) | Term::Observe(..) | Term::Weight(_) | Term::Resample => true,
        Term::App(..) => matches!(t.spine().0, Term::Var(_)),
        _ => false,
    }
}

/// True iff `t` satisfies the ANF invariants (as a function or main
/// body). Independent of [`normalize`]; used as its oracle.
pub fn validate_anf(t: &Term) -> bool {
    validate_body(t)
}

fn validate_body(t: &Term) -> bool {
    match t {
        Term::Let { rhs, body, .. } => validate_rhs(rhs) && validate_body(body),
        Term::Match {
            scrut, thn, els, ..
        } => is_atom(scrut) && validate_body(thn) && validate_body(els),
        _ => validate_op(t),
    }
}

fn validate_rhs(t: &Term) -> bool {
    match t {
        Term::Match {
            scrut, thn, els, ..
        } => is_atom(scrut) && validate_body(thn) && validate_body(els),
        Term::Let { .. } => false,
        _ => validate_op(t),
    }
}

/// A single operation with atomic arguments.
fn validate_op(t: &Term) -> bool {
    match t {
        _ if is_atom(t) => true,
        Term::Resample => true,
        Term::App(..) => {
            let (head, args) = t.spine();
            let head_ok = matches!(head, Term::Var(_) | Term::Const(Const::Builtin(_)));
            head_ok && args.iter().all(|a| is_atom(a))
        }
        Term::Assume(d) => validate_dist(d),
        Term::Weight(w) => is_atom(w),
        Term::Observe(v, d) => is_atom(v) && validate_dist(d),
        Term::Record(fs) => fs.iter().all(|(_, e)| is_atom(e)),
        Term::Seq(es) => es.iter().all(is_atom),
        Term::Con(_, a) => is_atom(a),
        _ => false,
    }
}

fn validate_dist(t: &Term) -> bool {
    matches!(t, Term::Dist(_, args) if args.iter().all(is_atom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, typecheck_lite};

    fn anf_of(src: &str) -> TypedProgram {
        let t = parse(src).unwrap();
        let prog = typecheck_lite(&t).unwrap();
        normalize(&prog)
    }

    #[test]
    fn lone_variable_unchanged() {
        let p = anf_of("let x = 1 in x");
        assert_eq!(p.main, parse("let x = 1 in x").unwrap());
        assert!(validate_anf(&p.main));
    }

    #[test]
    fn nested_call_is_lifted() {
        let p = anf_of(
            "recursive let geometric = lam p.\n\
             let x = assume (Bernoulli p) in\n\
             if x then addi 1 (geometric p) else 1\n\
             in geometric 0.5",
        );
        let f = p.func("geometric").unwrap();
        assert!(validate_anf(&f.body));
        // the recursive call must now be let-bound under the then branch
        let s = crate::frontend::pretty(&f.body);
        assert!(s.contains("let t"), "expected a lifted temporary in:\n{}", s);
        assert!(validate_anf(&p.main));
    }

    #[test]
    fn validator_rejects_nested_application() {
        // let x = addi 1 (f 2) in x
        let bad = Term::Let {
            name: "x".into(),
            ann: None,
            rhs: Box::new(Term::app(
                Term::Const(Const::Builtin(crate::ast::Builtin::Addi)),
                vec![
                    Term::int(1),
                    Term::app(Term::var("f"), vec![Term::int(2)]),
                ],
            )),
            body: Box::new(Term::var("x")),
        };
        assert!(!validate_anf(&bad));
    }

    #[test]
    fn normalize_is_idempotent() {
        let src = "recursive let f = lam p.\n\
                   let s1 = assume (Gamma p p) in\n\
                   resample;\n\
                   let s2 = if geqf s1 1. then 2. else 3. in\n\
                   mulf s2 s2\n\
                   in f 1.0";
        let t = parse(src).unwrap();
        let prog = typecheck_lite(&t).unwrap();
        let once = normalize(&prog);
        let twice = normalize(&once);
        for (a, b) in once.funcs.iter().zip(&twice.funcs) {
            assert_eq!(
                crate::frontend::pretty(&a.body),
                crate::frontend::pretty(&b.body)
            );
        }
        assert_eq!(
            crate::frontend::pretty(&once.main),
            crate::frontend::pretty(&twice.main)
        );
    }
}

#[cfg(test)]
mod property_tests {
    use super::*;
    use crate::frontend::{desugar, typecheck_lite};

    /// validate_anf(normalize(t)) over 1000 generated well-typed
    /// programs.
    #[test]
    fn normalize_always_validates() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for i in 0..1000 {
            let t = crate::testsupport::gen_typed_program(&mut rng);
            let typed = typecheck_lite(&desugar(&t))
                .unwrap_or_else(|e| panic!("case {} failed to typecheck: {}", i, e));
            let anf = normalize(&typed);
            for f in &anf.funcs {
                assert!(validate_anf(&f.body), "case {} function body", i);
            }
            assert!(validate_anf(&anf.main), "case {} main", i);
        }
    }
}
