//! Canonical pretty-printer. `parse(pretty(t))` is the identity on ASTs,
//! which the golden stage dumps rely on.

use std::fmt::Write;

use crate::ast::{Const, Pattern, Term, Type};

pub fn pretty(t: &Term) -> String {
    let mut s = String::new();
    term(&mut s, t, 0);
    s.push('\n');
    s
}

fn indent(out: &mut String, n: usize) {
    for _ in 0..n {
        out.push_str("  ");
    }
}

fn term(out: &mut String, t: &Term, ind: usize) {
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Const(c) => lit(out, c),
        Term::Resample => out.push_str("resample"),
        Term::Lam { param, ann, body } => {
            write!(out, "lam {}", param).unwrap();
            if let Some(ty) = ann {
                write!(out, ": {}", ty).unwrap();
            }
            out.push_str(".\n");
            indent(out, ind + 1);
            term(out, body, ind + 1);
        }
        Term::Let {
            name,
            ann,
            rhs,
            body,
        } => {
            write!(out, "let {}", name).unwrap();
            if let Some(ty) = ann {
                write!(out, ": {}", ty).unwrap();
            }
            out.push_str(" = ");
            term(out, rhs, ind + 1);
            out.push_str(" in\n");
            indent(out, ind);
            term(out, body, ind);
        }
        Term::RecLets { binds, body } => {
            out.push_str("recursive");
            for b in binds {
                out.push('\n');
                indent(out, ind);
                write!(out, "let {}", b.name).unwrap();
                if let Some(ty) = &b.ann {
                    write!(out, ": {}", ty).unwrap();
                }
                out.push_str(" = ");
                term(out, &b.rhs, ind + 1);
            }
            out.push('\n');
            indent(out, ind);
            out.push_str("in\n");
            indent(out, ind);
            term(out, body, ind);
        }
        Term::App(..) => {
            let (head, args) = t.spine();
            atom(out, head, ind);
            for a in args {
                out.push(' ');
                atom(out, a, ind);
            }
        }
        Term::Con(name, arg) => {
            out.push_str(name);
            out.push(' ');
            atom(out, arg, ind);
        }
        Term::Match {
            scrut,
            pat,
            thn,
            els,
        } => {
            out.push_str("match ");
            atom(out, scrut, ind);
            out.push_str(" with ");
            pattern(out, pat);
            out.push_str(" then\n");
            indent(out, ind + 1);
            term(out, thn, ind + 1);
            out.push('\n');
            indent(out, ind);
            out.push_str("else\n");
            indent(out, ind + 1);
            term(out, els, ind + 1);
        }
        Term::Seq(ts) => {
            out.push('[');
            for (i, e) in ts.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                term(out, e, ind);
            }
            out.push(']');
        }
        Term::Record(fs) if fs.is_empty() => out.push_str("()"),
        Term::Record(fs) => {
            out.push('{');
            for (i, (l, e)) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{} = ", l).unwrap();
                term(out, e, ind);
            }
            out.push('}');
        }
        Term::Assume(d) => {
            out.push_str("assume ");
            atom(out, d, ind);
        }
        Term::Weight(w) => {
            out.push_str("weight ");
            atom(out, w, ind);
        }
        Term::Observe(v, d) => {
            out.push_str("observe ");
            atom(out, v, ind);
            out.push(' ');
            atom(out, d, ind);
        }
        Term::Dist(d, args) => {
            out.push_str(d.name());
            for a in args {
                out.push(' ');
                atom(out, a, ind);
            }
        }
        Term::TypeDecl { name, body } => {
            write!(out, "type {} in\n", name).unwrap();
            indent(out, ind);
            term(out, body, ind);
        }
        Term::ConDecl {
            name,
            payload,
            variant,
            body,
        } => {
            write!(out, "con {} : {} -> {} in\n", name, payload, variant).unwrap();
            indent(out, ind);
            term(out, body, ind);
        }
        Term::If(c, t1, t2) => {
            out.push_str("if ");
            atom(out, c, ind);
            out.push_str(" then\n");
            indent(out, ind + 1);
            term(out, t1, ind + 1);
            out.push('\n');
            indent(out, ind);
            out.push_str("else\n");
            indent(out, ind + 1);
            term(out, t2, ind + 1);
        }
        Term::Seqcomp(a, b) => {
            term(out, a, ind);
            out.push_str(";\n");
            indent(out, ind);
            term(out, b, ind);
        }
    }
}

/// True when the term needs parentheses in atom position.
fn needs_parens(t: &Term) -> bool {
    !matches!(
        t,
        Term::Var(_) | Term::Const(_) | Term::Resample | Term::Seq(_) | Term::Record(_)
    )
}

fn atom(out: &mut String, t: &Term, ind: usize) {
    if needs_parens(t) {
        out.push('(');
        term(out, t, ind);
        out.push(')');
    } else {
        term(out, t, ind);
    }
}

fn lit(out: &mut String, c: &Const) {
    match c {
        Const::Int(v) => write!(out, "{}", v).unwrap(),
        Const::Float(v) => {
            if v.is_finite() {
                write!(out, "{:?}", v).unwrap()
            } else if *v == f64::INFINITY {
                out.push_str("(divf 1.0 0.0)")
            } else if *v == f64::NEG_INFINITY {
                out.push_str("(divf (subf 0.0 1.0) 0.0)")
            } else {
                out.push_str("(divf 0.0 0.0)")
            }
        }
        Const::Bool(true) => out.push_str("true"),
        Const::Bool(false) => out.push_str("false"),
        Const::Str(s) => write!(out, "\"{}\"", s).unwrap(),
        Const::Builtin(b) => out.push_str(b.name()),
    }
}

fn pattern(out: &mut String, p: &Pattern) {
    match p {
        Pattern::Var(x) => out.push_str(x),
        Pattern::True => out.push_str("true"),
        Pattern::Lit(c) => lit(out, c),
        Pattern::Con(name, sub) => {
            out.push_str(name);
            out.push(' ');
            pattern(out, sub);
        }
        Pattern::Record(fields) => {
            out.push('{');
            for (i, (l, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{} = {}", l, v).unwrap();
            }
            out.push('}');
        }
    }
}

/// Type annotations inside pretty output reuse [`std::fmt::Display`] on
/// [`Type`]; re-exported for stage dumps.
pub fn pretty_type(t: &Type) -> String {
    t.to_string()
}
