//! Removes the two sugar forms: `if c then t else e` becomes a boolean
//! match, and `t1; t2` becomes `let _N = t1 in t2` with a fresh name.

use crate::ast::{Bind, Pattern, Term};

pub fn desugar(t: &Term) -> Term {
    let mut counter = 0u32;
    go(t, &mut counter)
}

fn go(t: &Term, c: &mut u32) -> Term {
    match t {
        Term::Var(_) | Term::Const(_) | Term::Resample => t.clone(),
        Term::Lam { param, ann, body } => Term::Lam {
            param: param.clone(),
            ann: ann.clone(),
            body: Box::new(go(body, c)),
        },
        Term::App(f, a) => Term::App(Box::new(go(f, c)), Box::new(go(a, c))),
        Term::Let {
            name,
            ann,
            rhs,
            body,
        } => Term::Let {
            name: name.clone(),
            ann: ann.clone(),
            rhs: Box::new(go(rhs, c)),
            body: Box::new(go(body, c)),
        },
        Term::RecLets { binds, body } => Term::RecLets {
            binds: binds
                .iter()
                .map(|b| Bind {
                    name: b.name.clone(),
                    ann: b.ann.clone(),
                    rhs: go(&b.rhs, c),
                })
                .collect(),
            body: Box::new(go(body, c)),
        },
        Term::Con(n, a) => Term::Con(n.clone(), Box::new(go(a, c))),
        Term::Match {
            scrut,
            pat,
            thn,
            els,
        } => Term::Match {
            scrut: Box::new(go(scrut, c)),
            pat: pat.clone(),
            thn: Box::new(go(thn, c)),
            els: Box::new(go(els, c)),
        },
        Term::Seq(ts) => Term::Seq(ts.iter().map(|t| go(t, c)).collect()),
        Term::Record(fs) => Term::Record(fs.iter().map(|(l, t)| (l.clone(), go(t, c))).collect()),
        Term::Assume(d) => Term::Assume(Box::new(go(d, c))),
        Term::Weight(w) => Term::Weight(Box::new(go(w, c))),
        Term::Observe(v, d) => Term::Observe(Box::new(go(v, c)), Box::new(go(d, c))),
        Term::Dist(d, args) => Term::Dist(*d, args.iter().map(|a| go(a, c)).collect()),
        Term::TypeDecl { name, body } => Term::TypeDecl {
            name: name.clone(),
            body: Box::new(go(body, c)),
        },
        Term::ConDecl {
            name,
            payload,
            variant,
            body,
        } => Term::ConDecl {
            name: name.clone(),
            payload: payload.clone(),
            variant: variant.clone(),
            body: Box::new(go(body, c)),
        },
        Term::If(cond, thn, els) => Term::Match {
            scrut: Box::new(go(cond, c)),
            pat: Pattern::True,
            thn: Box::new(go(thn, c)),
            els: Box::new(go(els, c)),
        },
        Term::Seqcomp(a, b) => {
            *c += 1;
            Term::Let {
                name: format!("_{}", c),
                ann: None,
                rhs: Box::new(go(a, c)),
                body: Box::new(go(b, c)),
            }
        }
    }
}
