//! Recursive-descent parser producing a [`Term`].
//!
//! Distribution names are recognised at parse time and arity-checked.
//! Scope checking (every variable bound, no functions in argument
//! position, distributions immediately under `assume`/`observe`) runs as a
//! post-pass so the errors carry through `parse`.

use std::collections::HashSet;

use crate::ast::{Bind, Builtin, Const, DistName, Ident, Pattern, Term, Type};
use crate::error::ParseError;

use super::lexer::{lex, Pos, Spanned, Tok};

pub struct Parser {
    toks: Vec<Spanned>,
    i: usize,
    /// When set, identifiers from the compiler-reserved namespaces
    /// (`tN`, `_N`) are accepted. Used when re-parsing stage dumps.
    lenient: bool,
}

/// Names reserved for compiler-introduced temporaries.
pub fn is_reserved_name(s: &str) -> bool {
    let mut cs = s.chars();
    match cs.next() {
        Some('t') => {
            let rest: String = cs.collect();
            !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
        }
        Some('_') => {
            let rest: String = cs.collect();
            !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
        }
        _ => false,
    }
}

impl Parser {
    pub fn new(src: &str, lenient: bool) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            i: 0,
            lenient,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let p = self.pos();
        ParseError::new(p.line, p.col, msg)
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {}, found {:?}", what, self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Ident, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                if !self.lenient && is_reserved_name(&s) {
                    return Err(self.err(format!(
                        "identifier '{}' is reserved for compiler temporaries",
                        s
                    )));
                }
                self.bump();
                Ok(s)
            }
            _ => Err(self.err(format!("expected {}, found {:?}", what, self.peek()))),
        }
    }

    pub fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Lam => {
                self.bump();
                let param = self.ident("parameter name")?;
                let ann = self.opt_annotation()?;
                self.expect(Tok::Dot, "'.'")?;
                let body = self.term()?;
                Ok(Term::Lam {
                    param,
                    ann,
                    body: Box::new(body),
                })
            }
            Tok::Let => {
                self.bump();
                let name = self.ident("binding name")?;
                let ann = self.opt_annotation()?;
                self.expect(Tok::Eq, "'='")?;
                let rhs = self.term()?;
                self.expect(Tok::In, "'in'")?;
                let body = self.term()?;
                Ok(Term::Let {
                    name,
                    ann,
                    rhs: Box::new(rhs),
                    body: Box::new(body),
                })
            }
            Tok::Recursive => {
                self.bump();
                let mut binds = Vec::new();
                while *self.peek() == Tok::Let {
                    self.bump();
                    let name = self.ident("binding name")?;
                    let ann = self.opt_annotation()?;
                    self.expect(Tok::Eq, "'='")?;
                    let rhs = self.term()?;
                    binds.push(Bind { name, ann, rhs });
                    // a following `let` continues the group; `in` ends it
                    if *self.peek() == Tok::In {
                        break;
                    }
                }
                if binds.is_empty() {
                    return Err(self.err("expected 'let' after 'recursive'"));
                }
                self.expect(Tok::In, "'in'")?;
                let body = self.term()?;
                Ok(Term::RecLets {
                    binds,
                    body: Box::new(body),
                })
            }
            Tok::Match => {
                self.bump();
                let scrut = self.term()?;
                self.expect(Tok::With, "'with'")?;
                let pat = self.pattern()?;
                self.expect(Tok::Then, "'then'")?;
                let thn = self.term()?;
                self.expect(Tok::Else, "'else'")?;
                let els = self.term()?;
                Ok(Term::Match {
                    scrut: Box::new(scrut),
                    pat,
                    thn: Box::new(thn),
                    els: Box::new(els),
                })
            }
            Tok::If => {
                self.bump();
                let c = self.term()?;
                self.expect(Tok::Then, "'then'")?;
                let t = self.term()?;
                self.expect(Tok::Else, "'else'")?;
                let e = self.term()?;
                Ok(Term::If(Box::new(c), Box::new(t), Box::new(e)))
            }
            Tok::Type => {
                self.bump();
                let name = match self.bump() {
                    Tok::UpIdent(s) => s,
                    _ => return Err(self.err("expected type name (capitalised)")),
                };
                self.expect(Tok::In, "'in'")?;
                let body = self.term()?;
                Ok(Term::TypeDecl {
                    name,
                    body: Box::new(body),
                })
            }
            Tok::Con => {
                self.bump();
                let name = match self.bump() {
                    Tok::UpIdent(s) => s,
                    _ => return Err(self.err("expected constructor name (capitalised)")),
                };
                self.expect(Tok::Colon, "':'")?;
                let payload = self.ty_atom()?;
                self.expect(Tok::Arrow, "'->'")?;
                let variant = match self.bump() {
                    Tok::UpIdent(s) => s,
                    _ => return Err(self.err("expected variant type name")),
                };
                self.expect(Tok::In, "'in'")?;
                let body = self.term()?;
                Ok(Term::ConDecl {
                    name,
                    payload,
                    variant,
                    body: Box::new(body),
                })
            }
            _ => self.seq_term(),
        }
    }

    /// `appterm (';' term)?` — sequencing is right-associative.
    fn seq_term(&mut self) -> Result<Term, ParseError> {
        let first = self.app_term()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.term()?;
            Ok(Term::Seqcomp(Box::new(first), Box::new(rest)))
        } else {
            Ok(first)
        }
    }

    fn app_term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Assume => {
                self.bump();
                let d = self.atom()?;
                Ok(Term::Assume(Box::new(d)))
            }
            Tok::Weight => {
                self.bump();
                let w = self.atom()?;
                Ok(Term::Weight(Box::new(w)))
            }
            Tok::Observe => {
                self.bump();
                let v = self.atom()?;
                let d = self.atom()?;
                Ok(Term::Observe(Box::new(v), Box::new(d)))
            }
            Tok::UpIdent(name) => {
                self.bump();
                let head = self.up_ident_term(name)?;
                let mut acc = head;
                while self.at_atom_start() {
                    let a = self.atom()?;
                    acc = Term::App(Box::new(acc), Box::new(a));
                }
                Ok(acc)
            }
            _ => {
                let head = self.atom()?;
                let mut acc = head;
                while self.at_atom_start() {
                    let a = self.atom()?;
                    acc = Term::App(Box::new(acc), Box::new(a));
                }
                Ok(acc)
            }
        }
    }

    /// A capitalised name in head position is a distribution construction
    /// (arity-checked here) or a constructor application.
    fn up_ident_term(&mut self, name: String) -> Result<Term, ParseError> {
        if let Some(d) = DistName::from_name(&name) {
            let mut args = Vec::new();
            for k in 0..d.arity() {
                if !self.at_atom_start() {
                    return Err(self.err(format!(
                        "distribution {} takes {} parameters, found {}",
                        name,
                        d.arity(),
                        k
                    )));
                }
                args.push(self.atom()?);
            }
            Ok(Term::Dist(d, args))
        } else {
            if !self.at_atom_start() {
                return Err(self.err(format!("constructor {} requires an argument", name)));
            }
            let arg = self.atom()?;
            Ok(Term::Con(name, Box::new(arg)))
        }
    }

    fn at_atom_start(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_)
                | Tok::UpIdent(_)
                | Tok::Int(_)
                | Tok::Float(_)
                | Tok::Str(_)
                | Tok::True
                | Tok::False
                | Tok::Resample
                | Tok::LParen
                | Tok::LBracket
                | Tok::LBrace
        )
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                if let Some(b) = Builtin::from_name(&s) {
                    Ok(Term::Const(Const::Builtin(b)))
                } else {
                    Ok(Term::Var(s))
                }
            }
            Tok::UpIdent(name) => {
                // a bare capitalised name in argument position: only valid
                // when parenthesised as a head, so require the argument form
                self.bump();
                self.up_ident_term(name)
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Term::int(v))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Term::float(v))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Const::Str(s)))
            }
            Tok::True => {
                self.bump();
                Ok(Term::bool(true))
            }
            Tok::False => {
                self.bump();
                Ok(Term::bool(false))
            }
            Tok::Resample => {
                self.bump();
                Ok(Term::Resample)
            }
            Tok::LParen => {
                self.bump();
                if *self.peek() == Tok::RParen {
                    self.bump();
                    return Ok(Term::Record(Vec::new()));
                }
                let t = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(t)
            }
            Tok::LBracket => {
                self.bump();
                let mut elems = Vec::new();
                if *self.peek() != Tok::RBracket {
                    loop {
                        elems.push(self.term()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(Term::Seq(elems))
            }
            Tok::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                if *self.peek() != Tok::RBrace {
                    loop {
                        let l = self.ident("record label")?;
                        self.expect(Tok::Eq, "'='")?;
                        let t = self.term()?;
                        fields.push((l, t));
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace, "'}'")?;
                Ok(Term::Record(fields))
            }
            _ => Err(self.err(format!("expected a term, found {:?}", self.peek()))),
        }
    }

    fn pattern(&mut self) -> Result<Pattern, ParseError> {
        match self.peek().clone() {
            Tok::True => {
                self.bump();
                Ok(Pattern::True)
            }
            Tok::False => {
                self.bump();
                Ok(Pattern::Lit(Const::Bool(false)))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Pattern::Lit(Const::Int(v)))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Pattern::Lit(Const::Float(v)))
            }
            Tok::Ident(_) => Ok(Pattern::Var(self.ident("pattern variable")?)),
            Tok::UpIdent(name) => {
                self.bump();
                let sub = self.pattern()?;
                match &sub {
                    Pattern::Con(..) => {
                        Err(self.err("patterns may nest constructors at most one level"))
                    }
                    _ => Ok(Pattern::Con(name, Box::new(sub))),
                }
            }
            Tok::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                if *self.peek() != Tok::RBrace {
                    loop {
                        let l = self.ident("record label")?;
                        self.expect(Tok::Eq, "'='")?;
                        let v = self.ident("pattern variable")?;
                        fields.push((l, v));
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace, "'}'")?;
                let mut seen = HashSet::new();
                for (_, v) in &fields {
                    if !seen.insert(v.clone()) {
                        return Err(self.err(format!("pattern variable '{}' bound twice", v)));
                    }
                }
                Ok(Pattern::Record(fields))
            }
            _ => Err(self.err(format!("expected a pattern, found {:?}", self.peek()))),
        }
    }

    fn opt_annotation(&mut self) -> Result<Option<Type>, ParseError> {
        if *self.peek() == Tok::Colon {
            self.bump();
            Ok(Some(self.ty()?))
        } else {
            Ok(None)
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        let lhs = self.ty_atom()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.ty()?;
            Ok(Type::Arrow(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn ty_atom(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::UpIdent(s) => {
                self.bump();
                Ok(match s.as_str() {
                    "Int" => Type::Int,
                    "Float" => Type::Float,
                    "Bool" => Type::Bool,
                    "String" => Type::Str,
                    _ => Type::Variant(s),
                })
            }
            Tok::LParen => {
                self.bump();
                if *self.peek() == Tok::RParen {
                    self.bump();
                    return Ok(Type::unit());
                }
                let t = self.ty()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(t)
            }
            Tok::LBracket => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RBracket, "']'")?;
                Ok(Type::Seq(Box::new(t)))
            }
            Tok::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                if *self.peek() != Tok::RBrace {
                    loop {
                        let l = self.ident("record label")?;
                        self.expect(Tok::Colon, "':'")?;
                        let t = self.ty()?;
                        fields.push((l, t));
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace, "'}'")?;
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Type::Record(fields))
            }
            _ => Err(self.err(format!("expected a type, found {:?}", self.peek()))),
        }
    }

    pub fn finish(&mut self, t: Term) -> Result<Term, ParseError> {
        if *self.peek() != Tok::Eof {
            return Err(self.err(format!("trailing input: {:?}", self.peek())));
        }
        Ok(t)
    }
}

/// Parses source text into a raw (still sugared) term.
pub fn parse_raw(src: &str, lenient: bool) -> Result<Term, ParseError> {
    let mut p = Parser::new(src, lenient)?;
    let t = p.term()?;
    p.finish(t)
}

/// Post-parse well-formedness: every variable bound, functions never in
/// argument position, distribution constructions only immediately under
/// `assume`/`observe`.
pub fn scope_check(t: &Term) -> Result<(), ParseError> {
    let mut env: Vec<(Ident, bool)> = Vec::new(); // (name, is_function)
    check(t, &mut env)
}

fn is_lambda(t: &Term) -> bool {
    matches!(t, Term::Lam { .. })
}

fn check(t: &Term, env: &mut Vec<(Ident, bool)>) -> Result<(), ParseError> {
    match t {
        Term::Var(x) => {
            // `data` and `dataLen` are the injected observation globals
            if env.iter().rev().any(|(n, _)| n == x) || x == "data" || x == "dataLen" {
                Ok(())
            } else {
                Err(ParseError::new(0, 0, format!("unbound variable '{}'", x)))
            }
        }
        Term::Lam { param, body, .. } => {
            env.push((param.clone(), false));
            let r = check(body, env);
            env.pop();
            r
        }
        Term::App(f, a) => {
            check(f, env)?;
            check_arg(a, env)?;
            check(a, env)
        }
        Term::Let { name, rhs, body, .. } => {
            check(rhs, env)?;
            env.push((name.clone(), is_lambda(rhs)));
            let r = check(body, env);
            env.pop();
            r
        }
        Term::RecLets { binds, body } => {
            for b in binds {
                env.push((b.name.clone(), is_lambda(&b.rhs)));
            }
            for b in binds {
                check(&b.rhs, env)?;
            }
            let r = check(body, env);
            env.truncate(env.len() - binds.len());
            r
        }
        Term::Con(_, arg) => check(arg, env),
        Term::Const(_) | Term::Resample => Ok(()),
        Term::Match {
            scrut,
            pat,
            thn,
            els,
        } => {
            check(scrut, env)?;
            let vars = pat.bound_vars();
            for v in &vars {
                env.push(((*v).clone(), false));
            }
            let r = check(thn, env);
            env.truncate(env.len() - vars.len());
            r?;
            check(els, env)
        }
        Term::Seq(ts) => ts.iter().try_for_each(|t| check(t, env)),
        Term::Record(fs) => fs.iter().try_for_each(|(_, t)| check(t, env)),
        Term::Assume(d) => {
            if !matches!(**d, Term::Dist(..)) {
                return Err(ParseError::new(
                    0,
                    0,
                    "assume requires a distribution construction immediately (first-class distributions are unsupported)",
                ));
            }
            check(d, env)
        }
        Term::Weight(w) => check(w, env),
        Term::Observe(v, d) => {
            if !matches!(**d, Term::Dist(..)) {
                return Err(ParseError::new(
                    0,
                    0,
                    "observe requires a distribution construction immediately (first-class distributions are unsupported)",
                ));
            }
            check(v, env)?;
            check(d, env)
        }
        Term::Dist(_, args) => {
            for a in args {
                check(a, env)?;
            }
            Ok(())
        }
        Term::TypeDecl { body, .. } => check(body, env),
        Term::ConDecl { body, .. } => check(body, env),
        Term::If(c, t, e) => {
            check(c, env)?;
            check(t, env)?;
            check(e, env)
        }
        Term::Seqcomp(a, b) => {
            check(a, env)?;
            check(b, env)
        }
    }
}

/// Rejects lambdas and function-valued variables in argument position.
fn check_arg(a: &Term, env: &[(Ident, bool)]) -> Result<(), ParseError> {
    match a {
        Term::Lam { .. } => Err(ParseError::new(
            0,
            0,
            "functions may not be passed as arguments",
        )),
        Term::Var(x) => {
            if env.iter().rev().find(|(n, _)| n == x).map(|(_, f)| *f) == Some(true) {
                Err(ParseError::new(
                    0,
                    0,
                    format!("function '{}' may not be passed as an argument", x),
                ))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}
