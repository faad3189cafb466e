//! Core term language: the abstract syntax produced by the parser and
//! consumed by every later stage.
//!
//! A program is a single [`Term`]. Type and constructor declarations are
//! ordinary term forms (`type T in ...`, `con C : ty -> T in ...`), so the
//! whole surface language round-trips through one tree.

use std::fmt;

pub type Ident = String;

/// Literals and built-in operators (built-ins are constants applied in
/// prefix form, e.g. `addi 1 r`).
#[derive(Debug, Clone, PartialEq)]
pub enum Const {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Builtin(Builtin),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Addi,
    Subi,
    Muli,
    Eqi,
    Addf,
    Subf,
    Mulf,
    Divf,
    Geqf,
    Leqf,
    Eqf,
    Log,
    Exp,
    /// Sequence indexing: `get s i`. An extension beyond the fixed
    /// arithmetic set.
    Get,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Addi => "addi",
            Builtin::Subi => "subi",
            Builtin::Muli => "muli",
            Builtin::Eqi => "eqi",
            Builtin::Addf => "addf",
            Builtin::Subf => "subf",
            Builtin::Mulf => "mulf",
            Builtin::Divf => "divf",
            Builtin::Geqf => "geqf",
            Builtin::Leqf => "leqf",
            Builtin::Eqf => "eqf",
            Builtin::Log => "log",
            Builtin::Exp => "exp",
            Builtin::Get => "get",
        }
    }

    pub fn from_name(s: &str) -> Option<Builtin> {
        Some(match s {
            "addi" => Builtin::Addi,
            "subi" => Builtin::Subi,
            "muli" => Builtin::Muli,
            "eqi" => Builtin::Eqi,
            "addf" => Builtin::Addf,
            "subf" => Builtin::Subf,
            "mulf" => Builtin::Mulf,
            "divf" => Builtin::Divf,
            "geqf" => Builtin::Geqf,
            "leqf" => Builtin::Leqf,
            "eqf" => Builtin::Eqf,
            "log" => Builtin::Log,
            "exp" => Builtin::Exp,
            "get" => Builtin::Get,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Log | Builtin::Exp => 1,
            _ => 2,
        }
    }
}

/// Probability distribution names with fixed arities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistName {
    Bernoulli,
    Normal,
    Gamma,
    Exponential,
    Poisson,
    Binomial,
    Uniform,
    Beta,
}

impl DistName {
    pub fn from_name(s: &str) -> Option<DistName> {
        Some(match s {
            "Bernoulli" => DistName::Bernoulli,
            "Normal" => DistName::Normal,
            "Gamma" => DistName::Gamma,
            "Exponential" => DistName::Exponential,
            "Poisson" => DistName::Poisson,
            "Binomial" => DistName::Binomial,
            "Uniform" => DistName::Uniform,
            "Beta" => DistName::Beta,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            DistName::Bernoulli => "Bernoulli",
            DistName::Normal => "Normal",
            DistName::Gamma => "Gamma",
            DistName::Exponential => "Exponential",
            DistName::Poisson => "Poisson",
            DistName::Binomial => "Binomial",
            DistName::Uniform => "Uniform",
            DistName::Beta => "Beta",
        }
    }

    /// Number of parameter terms the distribution takes.
    pub fn arity(self) -> usize {
        match self {
            DistName::Bernoulli | DistName::Exponential | DistName::Poisson => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for DistName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Patterns are at most one constructor/record level deep; deeper matching
/// is written as nested `match` expressions in the source.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// Binds the whole scrutinee.
    Var(Ident),
    /// `true` — the target of the `if` desugaring.
    True,
    /// Literal equality.
    Lit(Const),
    /// `C p` where `p` is a variable, literal, or record pattern.
    Con(Ident, Box<Pattern>),
    /// `{l1 = x1, l2 = x2, ...}` binding labels to variables.
    Record(Vec<(Ident, Ident)>),
}

impl Pattern {
    /// Variables bound by this pattern, in binding order.
    pub fn bound_vars(&self) -> Vec<&Ident> {
        match self {
            Pattern::Var(x) => vec![x],
            Pattern::True | Pattern::Lit(_) => vec![],
            Pattern::Con(_, p) => p.bound_vars(),
            Pattern::Record(fields) => fields.iter().map(|(_, v)| v).collect(),
        }
    }
}

/// Monomorphic types. `()` is the empty record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Int,
    Float,
    Bool,
    Str,
    /// Fields sorted by label.
    Record(Vec<(Ident, Type)>),
    /// A declared variant type, referenced by name.
    Variant(Ident),
    /// Fixed-length sequences; the length is a runtime property of the
    /// value, not part of the type.
    Seq(Box<Type>),
    Arrow(Box<Type>, Box<Type>),
    /// Inference variable; never survives type checking.
    Var(u32),
}

impl Type {
    pub fn unit() -> Type {
        Type::Record(Vec::new())
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Type::Record(fs) if fs.is_empty())
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "Int"),
            Type::Float => write!(f, "Float"),
            Type::Bool => write!(f, "Bool"),
            Type::Str => write!(f, "String"),
            Type::Record(fields) if fields.is_empty() => write!(f, "()"),
            Type::Record(fields) => {
                write!(f, "{{")?;
                for (i, (l, t)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}: {}", l, t)?;
                }
                write!(f, "}}")
            }
            Type::Variant(n) => write!(f, "{}", n),
            Type::Seq(t) => write!(f, "[{}]", t),
            Type::Arrow(a, b) => match **a {
                Type::Arrow(..) => write!(f, "({}) -> {}", a, b),
                _ => write!(f, "{} -> {}", a, b),
            },
            Type::Var(n) => write!(f, "?{}", n),
        }
    }
}

/// One binding of a `recursive let` group (or a top-level `let` of a
/// lambda, which is the degenerate one-element case).
#[derive(Debug, Clone, PartialEq)]
pub struct Bind {
    pub name: Ident,
    pub ann: Option<Type>,
    pub rhs: Term,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(Ident),
    Lam {
        param: Ident,
        ann: Option<Type>,
        body: Box<Term>,
    },
    App(Box<Term>, Box<Term>),
    Let {
        name: Ident,
        ann: Option<Type>,
        rhs: Box<Term>,
        body: Box<Term>,
    },
    /// `recursive let x1 = t1 let x2 = t2 ... in body`
    RecLets { binds: Vec<Bind>, body: Box<Term> },
    /// Constructor application `C t`.
    Con(Ident, Box<Term>),
    Const(Const),
    Match {
        scrut: Box<Term>,
        pat: Pattern,
        thn: Box<Term>,
        els: Box<Term>,
    },
    /// Fixed-length sequence literal.
    Seq(Vec<Term>),
    /// Record literal; field order as written (canonicalised by the type
    /// checker).
    Record(Vec<(Ident, Term)>),
    Assume(Box<Term>),
    Weight(Box<Term>),
    Observe(Box<Term>, Box<Term>),
    Dist(DistName, Vec<Term>),
    /// Explicit SMC checkpoint.
    Resample,
    /// `type T in body`
    TypeDecl { name: Ident, body: Box<Term> },
    /// `con C : payload -> T in body`
    ConDecl {
        name: Ident,
        payload: Type,
        variant: Ident,
        body: Box<Term>,
    },
    /// Sugar removed by desugaring: `if c then t else e`.
    If(Box<Term>, Box<Term>, Box<Term>),
    /// Sugar removed by desugaring: `t1; t2`.
    Seqcomp(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(s.to_string())
    }

    pub fn int(v: i64) -> Term {
        Term::Const(Const::Int(v))
    }

    pub fn float(v: f64) -> Term {
        Term::Const(Const::Float(v))
    }

    pub fn bool(v: bool) -> Term {
        Term::Const(Const::Bool(v))
    }

    /// `f a1 a2 ...` as a left-nested application spine.
    pub fn app(head: Term, args: Vec<Term>) -> Term {
        args.into_iter()
            .fold(head, |acc, a| Term::App(Box::new(acc), Box::new(a)))
    }

    /// Splits a left-nested application spine into head and arguments.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Term::App(f, a) = cur {
            args.push(a.as_ref());
            cur = f.as_ref();
        }
        args.reverse();
        (cur, args)
    }
}
