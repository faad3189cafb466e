//! Monomorphic type inference and the stack-allocation checks.
//!
//! The checker produces a [`TypedProgram`]: the program split into
//! top-level function definitions and a main body, with every binder
//! alpha-renamed to a unique name and given exactly one monomorphic,
//! size-determinable type. Programs that would need heap allocation
//! (runtime construction of recursive variants or non-constant sequences)
//! are rejected here rather than failing late in code generation.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ast::{Bind, Builtin, Const, DistName, Ident, Pattern, Term, Type};
use crate::error::TypeError;

#[derive(Debug, Clone)]
pub struct VariantDef {
    /// Constructors in declaration order; the tag is the index.
    pub cons: Vec<(Ident, Type)>,
}

#[derive(Debug, Clone)]
pub struct ConInfo {
    pub variant: Ident,
    pub tag: u32,
    pub payload: Type,
}

#[derive(Debug, Clone)]
pub struct FuncDef {
    pub name: Ident,
    pub params: Vec<(Ident, Type)>,
    pub ret: Type,
    pub body: Term,
}

#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub variants: BTreeMap<Ident, VariantDef>,
    pub cons: HashMap<Ident, ConInfo>,
    pub funcs: Vec<FuncDef>,
    pub main: Term,
    pub main_ty: Type,
    /// Every binder (params, lets, pattern variables) to its type.
    pub types: HashMap<Ident, Type>,
    /// Whether the program references the injected `data`/`dataLen`
    /// globals.
    pub uses_data: bool,
}

impl TypedProgram {
    pub fn func(&self, name: &str) -> Option<&FuncDef> {
        self.funcs.iter().find(|f| f.name == name)
    }

    /// Cell size of a value of type `ty`. Recursive variants and
    /// sequences are single-cell references into the constant pool.
    pub fn size_of(&self, ty: &Type) -> usize {
        match ty {
            Type::Int | Type::Float | Type::Bool => 1,
            Type::Record(fields) => fields.iter().map(|(_, t)| self.size_of(t)).sum(),
            Type::Seq(_) => 1,
            Type::Variant(v) => {
                if self.variant_is_recursive(v) {
                    1
                } else {
                    1 + self.max_payload(v)
                }
            }
            Type::Str | Type::Arrow(..) | Type::Var(_) => {
                unreachable!("size_of on unresolved/rejected type {}", ty)
            }
        }
    }

    /// Largest payload size over the variant's constructors, with
    /// recursive positions counted as references.
    pub fn max_payload(&self, variant: &str) -> usize {
        self.variants[variant]
            .cons
            .iter()
            .map(|(_, p)| self.size_of(p))
            .max()
            .unwrap_or(0)
    }

    pub fn variant_is_recursive(&self, name: &str) -> bool {
        // reachable from its own payloads
        let mut seen = HashSet::new();
        let mut work: Vec<&Ident> = Vec::new();
        if let Some(def) = self.variants.get(name) {
            for (_, p) in &def.cons {
                collect_variant_refs(p, &mut work);
            }
        }
        while let Some(v) = work.pop() {
            if v == name {
                return true;
            }
            if seen.insert(v.clone()) {
                if let Some(def) = self.variants.get(v) {
                    for (_, p) in &def.cons {
                        collect_variant_refs(p, &mut work);
                    }
                }
            }
        }
        false
    }

    /// Offset of a record field within the canonical (label-sorted)
    /// layout.
    pub fn field_offset(&self, fields: &[(Ident, Type)], label: &str) -> usize {
        let mut off = 0;
        for (l, t) in fields {
            if l == label {
                return off;
            }
            off += self.size_of(t);
        }
        unreachable!("field {} not in record", label)
    }
}

fn collect_variant_refs<'a>(ty: &'a Type, out: &mut Vec<&'a Ident>) {
    match ty {
        Type::Variant(v) => out.push(v),
        Type::Record(fs) => fs.iter().for_each(|(_, t)| collect_variant_refs(t, out)),
        Type::Seq(t) => collect_variant_refs(t, out),
        _ => {}
    }
}

/// True for terms built entirely from literals (interned into the
/// constant pool at compile time).
pub fn is_const_term(t: &Term) -> bool {
    match t {
        Term::Const(Const::Int(_) | Const::Float(_) | Const::Bool(_)) => true,
        Term::Record(fs) => fs.iter().all(|(_, t)| is_const_term(t)),
        Term::Seq(ts) => ts.iter().all(is_const_term),
        Term::Con(_, a) => is_const_term(a),
        _ => false,
    }
}

struct Checker {
    variants: BTreeMap<Ident, VariantDef>,
    cons: HashMap<Ident, ConInfo>,
    func_sigs: HashMap<Ident, (Vec<Type>, Type)>,
    subst: HashMap<u32, Type>,
    next_var: u32,
    types: HashMap<Ident, Type>,
    uses_data: bool,
}

type Env = Vec<(Ident, Type)>;

impl Checker {
    fn fresh(&mut self) -> Type {
        self.next_var += 1;
        Type::Var(self.next_var)
    }

    fn resolve(&self, ty: &Type) -> Type {
        match ty {
            Type::Var(v) => match self.subst.get(v) {
                Some(t) => self.resolve(&t.clone()),
                None => ty.clone(),
            },
            Type::Record(fs) => {
                Type::Record(fs.iter().map(|(l, t)| (l.clone(), self.resolve(t))).collect())
            }
            Type::Seq(t) => Type::Seq(Box::new(self.resolve(t))),
            Type::Arrow(a, b) => {
                Type::Arrow(Box::new(self.resolve(a)), Box::new(self.resolve(b)))
            }
            _ => ty.clone(),
        }
    }

    fn occurs(&self, v: u32, ty: &Type) -> bool {
        match self.resolve(ty) {
            Type::Var(u) => u == v,
            Type::Record(fs) => fs.iter().any(|(_, t)| self.occurs(v, t)),
            Type::Seq(t) => self.occurs(v, &t),
            Type::Arrow(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
            _ => false,
        }
    }

    fn unify(&mut self, a: &Type, b: &Type) -> Result<(), TypeError> {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (Type::Var(v), _) => {
                if let Type::Var(u) = b {
                    if u == *v {
                        return Ok(());
                    }
                }
                if self.occurs(*v, &b) {
                    return Err(TypeError::new(format!("infinite type: ?{} ~ {}", v, b)));
                }
                self.subst.insert(*v, b);
                Ok(())
            }
            (_, Type::Var(_)) => self.unify(&b, &a),
            (Type::Int, Type::Int)
            | (Type::Float, Type::Float)
            | (Type::Bool, Type::Bool)
            | (Type::Str, Type::Str) => Ok(()),
            (Type::Variant(x), Type::Variant(y)) if x == y => Ok(()),
            (Type::Seq(x), Type::Seq(y)) => self.unify(x, y),
            (Type::Record(xs), Type::Record(ys)) => {
                if xs.len() != ys.len() || xs.iter().zip(ys).any(|((l1, _), (l2, _))| l1 != l2) {
                    return Err(TypeError::new(format!("type mismatch: {} vs {}", a, b)));
                }
                for ((_, t1), (_, t2)) in xs.iter().zip(ys) {
                    self.unify(t1, t2)?;
                }
                Ok(())
            }
            (Type::Arrow(a1, r1), Type::Arrow(a2, r2)) => {
                self.unify(a1, a2)?;
                self.unify(r1, r2)
            }
            _ => Err(TypeError::new(format!("type mismatch: {} vs {}", a, b))),
        }
    }

    fn lookup<'e>(env: &'e Env, x: &str) -> Option<&'e Type> {
        env.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t)
    }

    fn dist_types(&mut self, d: DistName) -> (Vec<Type>, Type) {
        use DistName::*;
        match d {
            Bernoulli => (vec![Type::Float], Type::Bool),
            Normal | Gamma | Uniform | Beta => (vec![Type::Float, Type::Float], Type::Float),
            Exponential => (vec![Type::Float], Type::Float),
            Poisson => (vec![Type::Float], Type::Int),
            Binomial => (vec![Type::Int, Type::Float], Type::Int),
        }
    }

    fn builtin_types(&mut self, b: Builtin) -> (Vec<Type>, Type) {
        use Builtin::*;
        match b {
            Addi | Subi | Muli => (vec![Type::Int, Type::Int], Type::Int),
            Eqi => (vec![Type::Int, Type::Int], Type::Bool),
            Addf | Subf | Mulf | Divf => (vec![Type::Float, Type::Float], Type::Float),
            Geqf | Leqf | Eqf => (vec![Type::Float, Type::Float], Type::Bool),
            Log | Exp => (vec![Type::Float], Type::Float),
            Get => {
                let elem = self.fresh();
                (vec![Type::Seq(Box::new(elem.clone())), Type::Int], elem)
            }
        }
    }

    fn infer(&mut self, t: &Term, env: &mut Env) -> Result<Type, TypeError> {
        match t {
            Term::Var(x) => {
                if let Some(ty) = Self::lookup(env, x) {
                    return Ok(ty.clone());
                }
                match x.as_str() {
                    "data" => {
                        self.uses_data = true;
                        Ok(Type::Seq(Box::new(Type::Float)))
                    }
                    "dataLen" => {
                        self.uses_data = true;
                        Ok(Type::Int)
                    }
                    _ => {
                        if self.func_sigs.contains_key(x) {
                            Err(TypeError::new(format!(
                                "function '{}' used as a value (functions are not first-class)",
                                x
                            )))
                        } else {
                            Err(TypeError::new(format!("unbound variable '{}'", x)))
                        }
                    }
                }
            }
            Term::Const(c) => match c {
                Const::Int(_) => Ok(Type::Int),
                Const::Float(_) => Ok(Type::Float),
                Const::Bool(_) => Ok(Type::Bool),
                Const::Str(_) => Err(TypeError::new("strings are not supported at runtime")),
                Const::Builtin(b) => Err(TypeError::new(format!(
                    "builtin '{}' must be fully applied",
                    b.name()
                ))),
            },
            Term::Resample => Ok(Type::unit()),
            Term::Lam { .. } => Err(TypeError::new(
                "nested functions are unsupported; define functions with top-level let/recursive let",
            )),
            Term::App(..) => {
                let (head, args) = t.spine();
                match head {
                    Term::Const(Const::Builtin(b)) => {
                        let (ps, ret) = self.builtin_types(*b);
                        if args.len() != ps.len() {
                            return Err(TypeError::new(format!(
                                "builtin '{}' takes {} arguments, got {}",
                                b.name(),
                                ps.len(),
                                args.len()
                            )));
                        }
                        for (a, p) in args.iter().zip(&ps) {
                            let at = self.infer(a, env)?;
                            self.unify(&at, p)?;
                        }
                        Ok(ret)
                    }
                    Term::Var(f) if Self::lookup(env, f).is_none() => {
                        let (ps, ret) = self
                            .func_sigs
                            .get(f.as_str())
                            .cloned()
                            .ok_or_else(|| TypeError::new(format!("unbound variable '{}'", f)))?;
                        if args.len() != ps.len() {
                            return Err(TypeError::new(format!(
                                "function '{}' takes {} arguments, got {} (partial application is unsupported)",
                                f,
                                ps.len(),
                                args.len()
                            )));
                        }
                        for (a, p) in args.iter().zip(&ps) {
                            let at = self.infer(a, env)?;
                            self.unify(&at, p)?;
                        }
                        Ok(ret)
                    }
                    _ => Err(TypeError::new(
                        "application head must be a function name or builtin",
                    )),
                }
            }
            Term::Let {
                name,
                ann,
                rhs,
                body,
            } => {
                let rt = self.infer(rhs, env)?;
                if let Some(a) = ann {
                    self.unify(&rt, a)?;
                }
                self.types.insert(name.clone(), rt.clone());
                env.push((name.clone(), rt));
                let bt = self.infer(body, env);
                env.pop();
                bt
            }
            Term::RecLets { .. } => Err(TypeError::new(
                "recursive let groups must appear at the top level",
            )),
            Term::Con(c, arg) => {
                let info = self
                    .cons
                    .get(c.as_str())
                    .cloned()
                    .ok_or_else(|| TypeError::new(format!("unknown constructor '{}'", c)))?;
                let at = self.infer(arg, env)?;
                self.unify(&at, &info.payload)?;
                Ok(Type::Variant(info.variant))
            }
            Term::Match {
                scrut,
                pat,
                thn,
                els,
            } => {
                let st = self.infer(scrut, env)?;
                let mut bound = Vec::new();
                self.check_pattern(pat, &st, &mut bound)?;
                let n = bound.len();
                for (v, ty) in bound {
                    self.types.insert(v.clone(), ty.clone());
                    env.push((v, ty));
                }
                let tt = self.infer(thn, env);
                env.truncate(env.len() - n);
                let tt = tt?;
                let et = self.infer(els, env)?;
                self.unify(&tt, &et)?;
                Ok(tt)
            }
            Term::Seq(ts) => {
                let elem = self.fresh();
                for e in ts {
                    let et = self.infer(e, env)?;
                    self.unify(&et, &elem)?;
                }
                Ok(Type::Seq(Box::new(elem)))
            }
            Term::Record(fs) => {
                let mut fields = Vec::new();
                for (l, e) in fs {
                    let ty = self.infer(e, env)?;
                    fields.push((l.clone(), ty));
                }
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                for w in fields.windows(2) {
                    if w[0].0 == w[1].0 {
                        return Err(TypeError::new(format!("duplicate record label '{}'", w[0].0)));
                    }
                }
                Ok(Type::Record(fields))
            }
            Term::Assume(d) => match d.as_ref() {
                Term::Dist(name, args) => {
                    self.check_dist(*name, args, env)?;
                    let (_, vt) = self.dist_types(*name);
                    Ok(vt)
                }
                _ => Err(TypeError::new("assume requires a distribution construction")),
            },
            Term::Weight(w) => {
                let wt = self.infer(w, env)?;
                self.unify(&wt, &Type::Float)?;
                Ok(Type::unit())
            }
            Term::Observe(v, d) => match d.as_ref() {
                Term::Dist(name, args) => {
                    self.check_dist(*name, args, env)?;
                    let (_, vt) = self.dist_types(*name);
                    let ot = self.infer(v, env)?;
                    self.unify(&ot, &vt)?;
                    Ok(Type::unit())
                }
                _ => Err(TypeError::new("observe requires a distribution construction")),
            },
            Term::Dist(..) => Err(TypeError::new(
                "distribution constructions may only appear immediately under assume/observe",
            )),
            Term::TypeDecl { .. } | Term::ConDecl { .. } => Err(TypeError::new(
                "type and constructor declarations must appear at the top level",
            )),
            Term::If(..) | Term::Seqcomp(..) => {
                Err(TypeError::new("internal: sugar survived desugaring"))
            }
        }
    }

    fn check_dist(
        &mut self,
        name: DistName,
        args: &[Term],
        env: &mut Env,
    ) -> Result<(), TypeError> {
        let (ps, _) = self.dist_types(name);
        if args.len() != ps.len() {
            return Err(TypeError::new(format!(
                "distribution {} takes {} parameters, got {}",
                name,
                ps.len(),
                args.len()
            )));
        }
        for (a, p) in args.iter().zip(&ps) {
            let at = self.infer(a, env)?;
            self.unify(&at, p)?;
        }
        Ok(())
    }

    fn check_pattern(
        &mut self,
        pat: &Pattern,
        scrut: &Type,
        bound: &mut Vec<(Ident, Type)>,
    ) -> Result<(), TypeError> {
        match pat {
            Pattern::Var(x) => {
                bound.push((x.clone(), scrut.clone()));
                Ok(())
            }
            Pattern::True => self.unify(scrut, &Type::Bool),
            Pattern::Lit(c) => {
                let ct = match c {
                    Const::Int(_) => Type::Int,
                    Const::Float(_) => Type::Float,
                    Const::Bool(_) => Type::Bool,
                    _ => return Err(TypeError::new("unsupported literal pattern")),
                };
                self.unify(scrut, &ct)
            }
            Pattern::Con(c, sub) => {
                let info = self
                    .cons
                    .get(c.as_str())
                    .cloned()
                    .ok_or_else(|| TypeError::new(format!("unknown constructor '{}'", c)))?;
                self.unify(scrut, &Type::Variant(info.variant.clone()))?;
                self.check_pattern(sub, &info.payload, bound)
            }
            Pattern::Record(fields) => {
                let st = self.resolve(scrut);
                match st {
                    Type::Record(have) => {
                        for (l, v) in fields {
                            let ty = have
                                .iter()
                                .find(|(hl, _)| hl == l)
                                .map(|(_, t)| t.clone())
                                .ok_or_else(|| {
                                    TypeError::new(format!("record has no field '{}'", l))
                                })?;
                            bound.push((v.clone(), ty));
                        }
                        Ok(())
                    }
                    _ => Err(TypeError::new(
                        "record pattern requires a scrutinee of known record type",
                    )),
                }
            }
        }
    }
}

/// Splits the desugared top-level spine into declarations, function
/// definitions, and the main body, then infers types.
pub fn typecheck_lite(t: &Term) -> Result<TypedProgram, TypeError> {
    let t = uniquify(t);
    let mut variants: BTreeMap<Ident, VariantDef> = BTreeMap::new();
    let mut cons: HashMap<Ident, ConInfo> = HashMap::new();

    // Spine walk: collect declarations and function groups, keep value
    // lets for the main body.
    let mut func_groups: Vec<Vec<Bind>> = Vec::new();
    let mut main_lets: Vec<(Ident, Option<Type>, Term)> = Vec::new();
    let mut cur = &t;
    loop {
        match cur {
            Term::TypeDecl { name, body } => {
                variants.entry(name.clone()).or_insert(VariantDef { cons: Vec::new() });
                cur = body;
            }
            Term::ConDecl {
                name,
                payload,
                variant,
                body,
            } => {
                let def = variants.get_mut(variant).ok_or_else(|| {
                    TypeError::new(format!("constructor '{}' for undeclared type '{}'", name, variant))
                })?;
                if cons.contains_key(name) {
                    return Err(TypeError::new(format!("duplicate constructor '{}'", name)));
                }
                let tag = def.cons.len() as u32;
                def.cons.push((name.clone(), payload.clone()));
                cons.insert(
                    name.clone(),
                    ConInfo {
                        variant: variant.clone(),
                        tag,
                        payload: payload.clone(),
                    },
                );
                cur = body;
            }
            Term::RecLets { binds, body } => {
                for b in binds {
                    if !matches!(b.rhs, Term::Lam { .. }) {
                        return Err(TypeError::new(format!(
                            "recursive let '{}' must bind a function",
                            b.name
                        )));
                    }
                }
                func_groups.push(binds.clone());
                cur = body;
            }
            Term::Let {
                name,
                ann,
                rhs,
                body,
            } if matches!(**rhs, Term::Lam { .. }) => {
                func_groups.push(vec![Bind {
                    name: name.clone(),
                    ann: ann.clone(),
                    rhs: (**rhs).clone(),
                }]);
                cur = body;
            }
            Term::Let {
                name,
                ann,
                rhs,
                body,
            } => {
                main_lets.push((name.clone(), ann.clone(), (**rhs).clone()));
                cur = body;
            }
            _ => break,
        }
    }
    let final_expr = cur.clone();

    let mut ck = Checker {
        variants,
        cons,
        func_sigs: HashMap::new(),
        subst: HashMap::new(),
        next_var: 0,
        types: HashMap::new(),
        uses_data: false,
    };

    // Pre-declare signatures so mutual recursion and forward calls within
    // a group resolve.
    let mut funcs_raw: Vec<(Ident, Vec<Ident>, Term)> = Vec::new();
    for group in &func_groups {
        for b in group {
            let (params, body) = split_lams(&b.rhs);
            let mut ptys = Vec::new();
            for _ in &params {
                ptys.push(ck.fresh());
            }
            let ret = ck.fresh();
            if let Some(ann) = &b.ann {
                let annotated = arrow_of(&ptys, &ret);
                ck.unify(&annotated, ann)?;
            }
            // parameter annotations
            let mut cur = &b.rhs;
            let mut i = 0;
            while let Term::Lam { ann, body, .. } = cur {
                if let Some(a) = ann {
                    ck.unify(&ptys[i], a)?;
                }
                i += 1;
                cur = body;
            }
            if ck.func_sigs.contains_key(&b.name) {
                return Err(TypeError::new(format!("duplicate function '{}'", b.name)));
            }
            ck.func_sigs.insert(b.name.clone(), (ptys, ret));
            funcs_raw.push((b.name.clone(), params, body.clone()));
        }
    }

    // Infer function bodies in an environment of parameters only: a free
    // local from the main body is a capture, which is unsupported.
    for (name, params, body) in &funcs_raw {
        let (ptys, ret) = ck.func_sigs[name].clone();
        let mut env: Env = params
            .iter()
            .cloned()
            .zip(ptys.iter().cloned())
            .collect();
        for (p, ty) in &env {
            ck.types.insert(p.clone(), ty.clone());
        }
        let bt = ck.infer(body, &mut env).map_err(|e| {
            if e.0.starts_with("unbound variable") {
                TypeError::new(format!(
                    "{} in function '{}' (functions cannot capture local variables)",
                    e.0, name
                ))
            } else {
                e
            }
        })?;
        ck.unify(&bt, &ret)?;
    }

    // Main body: value lets in order, then the final expression.
    let mut env: Env = Vec::new();
    for (name, ann, rhs) in &main_lets {
        let rt = ck.infer(rhs, &mut env)?;
        if let Some(a) = ann {
            ck.unify(&rt, a)?;
        }
        ck.types.insert(name.clone(), rt.clone());
        env.push((name.clone(), rt));
    }
    let main_ty = ck.infer(&final_expr, &mut env)?;

    // Resolve everything, insisting on ground, size-determinable types.
    let mut types = HashMap::new();
    for (name, ty) in ck.types.clone() {
        let r = ck.resolve(&ty);
        ensure_ground(&name, &r)?;
        types.insert(name, r);
    }
    let main_ty = ck.resolve(&main_ty);
    ensure_ground("program result", &main_ty)?;

    let mut funcs = Vec::new();
    for (name, params, body) in funcs_raw {
        let (ptys, ret) = ck.func_sigs[&name].clone();
        let params: Vec<(Ident, Type)> = params
            .into_iter()
            .zip(ptys.iter().map(|t| ck.resolve(t)))
            .collect();
        for (p, ty) in &params {
            ensure_ground(p, ty)?;
            types.insert(p.clone(), ty.clone());
        }
        let ret = ck.resolve(&ret);
        ensure_ground(&format!("return value of '{}'", name), &ret)?;
        funcs.push(FuncDef {
            name,
            params,
            ret,
            body,
        });
    }

    // Rebuild the main body without the function groups.
    let mut main = final_expr;
    for (name, _, rhs) in main_lets.into_iter().rev() {
        main = Term::Let {
            name,
            ann: None,
            rhs: Box::new(rhs),
            body: Box::new(main),
        };
    }

    let prog = TypedProgram {
        variants: ck.variants,
        cons: ck.cons,
        funcs,
        main,
        main_ty,
        types,
        uses_data: ck.uses_data,
    };

    // Stack-allocation checks need the variant table, so they run last.
    for f in &prog.funcs {
        check_alloc(&prog, &f.body)?;
    }
    check_alloc(&prog, &prog.main)?;
    // Force size computation so undeclared payload types surface now.
    for (name, ty) in &prog.types {
        if let Type::Variant(v) = ty {
            if !prog.variants.contains_key(v) {
                return Err(TypeError::new(format!(
                    "binding '{}' has undeclared variant type '{}'",
                    name, v
                )));
            }
        }
    }
    Ok(prog)
}

fn arrow_of(params: &[Type], ret: &Type) -> Type {
    let mut ty = ret.clone();
    for p in params.iter().rev() {
        ty = Type::Arrow(Box::new(p.clone()), Box::new(ty));
    }
    ty
}

fn split_lams(t: &Term) -> (Vec<Ident>, Term) {
    let mut params = Vec::new();
    let mut cur = t;
    while let Term::Lam { param, body, .. } = cur {
        params.push(param.clone());
        cur = body;
    }
    (params, cur.clone())
}

fn ensure_ground(what: &str, ty: &Type) -> Result<(), TypeError> {
    match ty {
        Type::Var(_) => Err(TypeError::new(format!(
            "ambiguous type for {}; add an annotation",
            what
        ))),
        Type::Str => Err(TypeError::new(format!(
            "{} has type String, which is not supported at runtime",
            what
        ))),
        Type::Arrow(..) => Err(TypeError::new(format!(
            "{} has a function type; functions are not first-class",
            what
        ))),
        Type::Record(fs) => fs.iter().try_for_each(|(_, t)| ensure_ground(what, t)),
        Type::Seq(t) => ensure_ground(what, t),
        _ => Ok(()),
    }
}

/// Rejects runtime construction of recursive variants and non-constant
/// sequences: both would need dynamically sized allocation, and the
/// particle state is stack-only. Constness resolves through let-bound
/// constants, so the check accepts the same programs before and after
/// normalization.
fn check_alloc(prog: &TypedProgram, t: &Term) -> Result<(), TypeError> {
    let mut consts = HashSet::new();
    walk_alloc(prog, t, &mut consts)
}

fn const_in_env(t: &Term, consts: &HashSet<Ident>) -> bool {
    match t {
        Term::Var(x) => consts.contains(x),
        Term::Const(Const::Int(_) | Const::Float(_) | Const::Bool(_)) => true,
        Term::Record(fs) => fs.iter().all(|(_, e)| const_in_env(e, consts)),
        Term::Seq(ts) => ts.iter().all(|e| const_in_env(e, consts)),
        Term::Con(_, a) => const_in_env(a, consts),
        _ => false,
    }
}

fn walk_alloc(
    prog: &TypedProgram,
    t: &Term,
    consts: &mut HashSet<Ident>,
) -> Result<(), TypeError> {
    match t {
        Term::Con(c, arg) => {
            walk_alloc(prog, arg, consts)?;
            if let Some(info) = prog.cons.get(c.as_str()) {
                if prog.variant_is_recursive(&info.variant) && !const_in_env(t, consts) {
                    return Err(TypeError::new(format!(
                        "dynamically sized value: recursive variant '{}' can only be \
                         constructed from constants (stack allocation only); \
                         constructor '{}' has a non-constant argument",
                        info.variant, c
                    )));
                }
            }
            Ok(())
        }
        Term::Seq(elems) => {
            for e in elems {
                walk_alloc(prog, e, consts)?;
            }
            if !elems.iter().all(|e| const_in_env(e, consts)) {
                return Err(TypeError::new(
                    "dynamically sized value: sequence literals must be built from constants",
                ));
            }
            Ok(())
        }
        Term::Let { name, rhs, body, .. } => {
            walk_alloc(prog, rhs, consts)?;
            if const_in_env(rhs, consts) {
                consts.insert(name.clone());
            }
            walk_alloc(prog, body, consts)
        }
        Term::Lam { body, .. } => walk_alloc(prog, body, consts),
        Term::App(a, b) | Term::Seqcomp(a, b) | Term::Observe(a, b) => {
            walk_alloc(prog, a, consts)?;
            walk_alloc(prog, b, consts)
        }
        Term::RecLets { binds, body } => {
            for b in binds {
                walk_alloc(prog, &b.rhs, consts)?;
            }
            walk_alloc(prog, body, consts)
        }
        Term::Assume(a) | Term::Weight(a) => walk_alloc(prog, a, consts),
        Term::Match {
            scrut, thn, els, ..
        } => {
            walk_alloc(prog, scrut, consts)?;
            walk_alloc(prog, thn, consts)?;
            walk_alloc(prog, els, consts)
        }
        Term::Record(fs) => fs.iter().try_for_each(|(_, e)| walk_alloc(prog, e, consts)),
        Term::Dist(_, args) => args.iter().try_for_each(|a| walk_alloc(prog, a, consts)),
        Term::TypeDecl { body, .. } | Term::ConDecl { body, .. } => walk_alloc(prog, body, consts),
        Term::If(a, b, c) => {
            walk_alloc(prog, a, consts)?;
            walk_alloc(prog, b, consts)?;
            walk_alloc(prog, c, consts)
        }
        Term::Var(_) | Term::Const(_) | Term::Resample => Ok(()),
    }
}

fn visit(t: &Term, f: &mut impl FnMut(&Term)) {
    f(t);
    match t {
        Term::Lam { body, .. } => visit(body, f),
        Term::App(a, b) | Term::Seqcomp(a, b) | Term::Observe(a, b) => {
            visit(a, f);
            visit(b, f);
        }
        Term::Let { rhs, body, .. } => {
            visit(rhs, f);
            visit(body, f);
        }
        Term::RecLets { binds, body } => {
            binds.iter().for_each(|b| visit(&b.rhs, f));
            visit(body, f);
        }
        Term::Con(_, a) | Term::Assume(a) | Term::Weight(a) => visit(a, f),
        Term::Match {
            scrut, thn, els, ..
        } => {
            visit(scrut, f);
            visit(thn, f);
            visit(els, f);
        }
        Term::Seq(ts) => ts.iter().for_each(|t| visit(t, f)),
        Term::Record(fs) => fs.iter().for_each(|(_, t)| visit(t, f)),
        Term::Dist(_, args) => args.iter().for_each(|a| visit(a, f)),
        Term::TypeDecl { body, .. } | Term::ConDecl { body, .. } => visit(body, f),
        Term::If(a, b, c) => {
            visit(a, f);
            visit(b, f);
            visit(c, f);
        }
        Term::Var(_) | Term::Const(_) | Term::Resample => {}
    }
}

/// Alpha-renames every binder to a globally unique name, so later stages
/// can use flat maps keyed by name.
fn uniquify(t: &Term) -> Term {
    let mut used = HashSet::new();
    collect_names(t, &mut used);
    let mut taken = HashSet::new();
    let mut env: Vec<(Ident, Ident)> = Vec::new();
    rename(t, &mut env, &mut taken, &used)
}

fn collect_names(t: &Term, out: &mut HashSet<Ident>) {
    visit(t, &mut |t| match t {
        Term::Var(x) => {
            out.insert(x.clone());
        }
        Term::Lam { param, .. } => {
            out.insert(param.clone());
        }
        Term::Let { name, .. } => {
            out.insert(name.clone());
        }
        Term::RecLets { binds, .. } => {
            binds.iter().for_each(|b| {
                out.insert(b.name.clone());
            });
        }
        Term::Match { pat, .. } => {
            for v in pat.bound_vars() {
                out.insert(v.clone());
            }
        }
        _ => {}
    });
}

fn pick_name(
    orig: &str,
    taken: &mut HashSet<Ident>,
    used: &HashSet<Ident>,
) -> Ident {
    if !taken.contains(orig) {
        taken.insert(orig.to_string());
        return orig.to_string();
    }
    let mut k = 2;
    loop {
        let cand = format!("{}_{}", orig, k);
        if !taken.contains(&cand) && !used.contains(&cand) {
            taken.insert(cand.clone());
            return cand;
        }
        k += 1;
    }
}

fn rename(
    t: &Term,
    env: &mut Vec<(Ident, Ident)>,
    taken: &mut HashSet<Ident>,
    used: &HashSet<Ident>,
) -> Term {
    match t {
        Term::Var(x) => {
            let nx = env
                .iter()
                .rev()
                .find(|(o, _)| o == x)
                .map(|(_, n)| n.clone())
                .unwrap_or_else(|| x.clone());
            Term::Var(nx)
        }
        Term::Lam { param, ann, body } => {
            let np = pick_name(param, taken, used);
            env.push((param.clone(), np.clone()));
            let b = rename(body, env, taken, used);
            env.pop();
            Term::Lam {
                param: np,
                ann: ann.clone(),
                body: Box::new(b),
            }
        }
        Term::Let {
            name,
            ann,
            rhs,
            body,
        } => {
            let r = rename(rhs, env, taken, used);
            let nn = pick_name(name, taken, used);
            env.push((name.clone(), nn.clone()));
            let b = rename(body, env, taken, used);
            env.pop();
            Term::Let {
                name: nn,
                ann: ann.clone(),
                rhs: Box::new(r),
                body: Box::new(b),
            }
        }
        Term::RecLets { binds, body } => {
            let mut nbinds = Vec::new();
            for b in binds {
                let nn = pick_name(&b.name, taken, used);
                env.push((b.name.clone(), nn.clone()));
                nbinds.push((nn, b.ann.clone()));
            }
            let mut out = Vec::new();
            for (b, (nn, ann)) in binds.iter().zip(nbinds) {
                let r = rename(&b.rhs, env, taken, used);
                out.push(Bind {
                    name: nn,
                    ann,
                    rhs: r,
                });
            }
            let nb = rename(body, env, taken, used);
            env.truncate(env.len() - binds.len());
            Term::RecLets {
                binds: out,
                body: Box::new(nb),
            }
        }
        Term::Match {
            scrut,
            pat,
            thn,
            els,
        } => {
            let s = rename(scrut, env, taken, used);
            let (npat, bindings) = rename_pattern(pat, taken, used);
            for b in &bindings {
                env.push(b.clone());
            }
            let nt = rename(thn, env, taken, used);
            env.truncate(env.len() - bindings.len());
            let ne = rename(els, env, taken, used);
            Term::Match {
                scrut: Box::new(s),
                pat: npat,
                thn: Box::new(nt),
                els: Box::new(ne),
            }
        }
        Term::App(a, b) => Term::App(
            Box::new(rename(a, env, taken, used)),
            Box::new(rename(b, env, taken, used)),
        ),
        Term::Con(n, a) => Term::Con(n.clone(), Box::new(rename(a, env, taken, used))),
        Term::Const(_) | Term::Resample => t.clone(),
        Term::Seq(ts) => Term::Seq(ts.iter().map(|e| rename(e, env, taken, used)).collect()),
        Term::Record(fs) => Term::Record(
            fs.iter()
                .map(|(l, e)| (l.clone(), rename(e, env, taken, used)))
                .collect(),
        ),
        Term::Assume(d) => Term::Assume(Box::new(rename(d, env, taken, used))),
        Term::Weight(w) => Term::Weight(Box::new(rename(w, env, taken, used))),
        Term::Observe(v, d) => Term::Observe(
            Box::new(rename(v, env, taken, used)),
            Box::new(rename(d, env, taken, used)),
        ),
        Term::Dist(d, args) => Term::Dist(
            *d,
            args.iter().map(|a| rename(a, env, taken, used)).collect(),
        ),
        Term::TypeDecl { name, body } => Term::TypeDecl {
            name: name.clone(),
            body: Box::new(rename(body, env, taken, used)),
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
            body: Box::new(rename(body, env, taken, used)),
        },
        Term::If(a, b, c) => Term::If(
            Box::new(rename(a, env, taken, used)),
            Box::new(rename(b, env, taken, used)),
            Box::new(rename(c, env, taken, used)),
        ),
        Term::Seqcomp(a, b) => Term::Seqcomp(
            Box::new(rename(a, env, taken, used)),
            Box::new(rename(b, env, taken, used)),
        ),
    }
}

fn rename_pattern(
    pat: &Pattern,
    taken: &mut HashSet<Ident>,
    used: &HashSet<Ident>,
) -> (Pattern, Vec<(Ident, Ident)>) {
    match pat {
        Pattern::Var(x) => {
            let nx = pick_name(x, taken, used);
            (Pattern::Var(nx.clone()), vec![(x.clone(), nx)])
        }
        Pattern::True | Pattern::Lit(_) => (pat.clone(), vec![]),
        Pattern::Con(c, sub) => {
            let (ns, bs) = rename_pattern(sub, taken, used);
            (Pattern::Con(c.clone(), Box::new(ns)), bs)
        }
        Pattern::Record(fields) => {
            let mut out = Vec::new();
            let mut bs = Vec::new();
            for (l, v) in fields {
                let nv = pick_name(v, taken, used);
                bs.push((v.clone(), nv.clone()));
                out.push((l.clone(), nv));
            }
            (Pattern::Record(out), bs)
        }
    }
}
