//! Independent reference implementations used by tests and examples: a
//! direct tree-walking interpreter of the ANF language (no block
//! decomposition, checkpoints are no-ops) and a one-dimensional Kalman
//! filter for the linear-Gaussian state-space model.
//!
//! The interpreter shares nothing with the block VM except the
//! distribution primitives, so exact agreement between the two on a
//! forced-choice tape is a meaningful end-to-end check of the whole
//! compilation pipeline.

use std::collections::HashMap;

use crate::ast::{Builtin, Const, Ident, Pattern, Term, Type};
use crate::dists::{DistParams, RandomSource, Value};
use crate::error::VmError;
use crate::frontend::typecheck::TypedProgram;
use crate::vm::{BlockProgram, Cell};

/// A structured runtime value of the reference interpreter.
#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Int(i64),
    Float(f64),
    Bool(bool),
    /// Fields sorted by label.
    Record(Vec<(Ident, Val)>),
    Variant(Ident, Box<Val>),
    Seq(Vec<Val>),
}

impl Val {
    pub fn unit() -> Val {
        Val::Record(Vec::new())
    }

    fn scalar(v: Value) -> Val {
        match v {
            Value::Int(i) => Val::Int(i),
            Value::Float(f) => Val::Float(f),
            Value::Bool(b) => Val::Bool(b),
        }
    }

    fn as_value(&self) -> Result<Value, VmError> {
        match self {
            Val::Int(i) => Ok(Value::Int(*i)),
            Val::Float(f) => Ok(Value::Float(*f)),
            Val::Bool(b) => Ok(Value::Bool(*b)),
            _ => Err(VmError::CellType("scalar")),
        }
    }
}

/// One reference run: result value and accumulated log-weight.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub result: Val,
    pub log_weight: f64,
    /// The forced-choice tape consumed or recorded, when available.
    pub tape: Option<Vec<Value>>,
}

/// Big-step evaluation of a type-checked ANF program: `assume` draws from
/// the source, `weight`/`observe` accumulate log-likelihood, `resample`
/// is a no-op. This is the importance-sampling reference semantics.
pub fn interpret_direct(
    prog: &TypedProgram,
    src: &mut RandomSource,
    data: Option<&[f64]>,
) -> Result<(Val, f64), VmError> {
    let mut it = Interp {
        prog,
        src,
        data,
        log_weight: 0.0,
        depth: 0,
    };
    let env: HashMap<Ident, Val> = HashMap::new();
    let v = it.eval(&prog.main, &env)?;
    Ok((v, it.log_weight))
}

struct Interp<'a> {
    prog: &'a TypedProgram,
    src: &'a mut RandomSource,
    data: Option<&'a [f64]>,
    log_weight: f64,
    depth: usize,
}

const MAX_DEPTH: usize = 100_000;

impl<'a> Interp<'a> {
    fn eval(&mut self, t: &Term, env: &HashMap<Ident, Val>) -> Result<Val, VmError> {
        match t {
            Term::Var(x) => {
                if let Some(v) = env.get(x) {
                    return Ok(v.clone());
                }
                match x.as_str() {
                    "data" => {
                        let d = self.data.ok_or(VmError::CellType("data"))?;
                        Ok(Val::Seq(d.iter().map(|y| Val::Float(*y)).collect()))
                    }
                    "dataLen" => {
                        let d = self.data.ok_or(VmError::CellType("data"))?;
                        Ok(Val::Int(d.len() as i64))
                    }
                    _ => unreachable!("unbound variable {} survived checking", x),
                }
            }
            Term::Const(Const::Int(v)) => Ok(Val::Int(*v)),
            Term::Const(Const::Float(v)) => Ok(Val::Float(*v)),
            Term::Const(Const::Bool(v)) => Ok(Val::Bool(*v)),
            Term::Const(_) => unreachable!("string/builtin constant as value"),
            Term::Resample => Ok(Val::unit()),
            Term::Let { name, rhs, body, .. } => {
                let v = self.eval(rhs, env)?;
                let mut env2 = env.clone();
                env2.insert(name.clone(), v);
                self.eval(body, &env2)
            }
            Term::App(..) => {
                let (head, args) = t.spine();
                let argv: Vec<Val> = args
                    .iter()
                    .map(|a| self.eval(a, env))
                    .collect::<Result<_, _>>()?;
                match head {
                    Term::Const(Const::Builtin(b)) => eval_builtin(*b, &argv),
                    Term::Var(f) => {
                        let def = self
                            .prog
                            .func(f)
                            .unwrap_or_else(|| unreachable!("unknown function {}", f));
                        self.depth += 1;
                        if self.depth > MAX_DEPTH {
                            return Err(VmError::StackOverflow {
                                needed: self.depth,
                                capacity: MAX_DEPTH,
                            });
                        }
                        let mut callee_env = HashMap::new();
                        for ((p, _), v) in def.params.iter().zip(argv) {
                            callee_env.insert(p.clone(), v);
                        }
                        let r = self.eval(&def.body, &callee_env);
                        self.depth -= 1;
                        r
                    }
                    _ => unreachable!("invalid application head"),
                }
            }
            Term::Assume(d) => {
                let params = self.dist(d, env)?;
                Ok(Val::scalar(self.src.draw(&params)?))
            }
            Term::Observe(v, d) => {
                let params = self.dist(d, env)?;
                let x = self.eval(v, env)?.as_value()?;
                self.log_weight += params.log_density(&x);
                if self.log_weight.is_nan() {
                    return Err(VmError::NanWeight);
                }
                Ok(Val::unit())
            }
            Term::Weight(w) => {
                let x = self.eval(w, env)?;
                match x {
                    Val::Float(f) => {
                        self.log_weight += f;
                        if self.log_weight.is_nan() {
                            return Err(VmError::NanWeight);
                        }
                        Ok(Val::unit())
                    }
                    _ => Err(VmError::CellType("float")),
                }
            }
            Term::Match {
                scrut,
                pat,
                thn,
                els,
            } => {
                let sv = self.eval(scrut, env)?;
                match match_pattern(pat, &sv) {
                    Some(binds) => {
                        let mut env2 = env.clone();
                        for (k, v) in binds {
                            env2.insert(k, v);
                        }
                        self.eval(thn, &env2)
                    }
                    None => self.eval(els, env),
                }
            }
            Term::Record(fields) => {
                let mut out = Vec::new();
                for (l, e) in fields {
                    out.push((l.clone(), self.eval(e, env)?));
                }
                out.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Val::Record(out))
            }
            Term::Seq(elems) => {
                let vs: Vec<Val> = elems
                    .iter()
                    .map(|e| self.eval(e, env))
                    .collect::<Result<_, _>>()?;
                Ok(Val::Seq(vs))
            }
            Term::Con(c, arg) => Ok(Val::Variant(c.clone(), Box::new(self.eval(arg, env)?))),
            _ => unreachable!("form not valid in a typed body: {:?}", t),
        }
    }

    fn dist(&mut self, d: &Term, env: &HashMap<Ident, Val>) -> Result<DistParams, VmError> {
        match d {
            Term::Dist(name, args) => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.eval(a, env)?.as_value()?);
                }
                Ok(DistParams::new(*name, &vals)?)
            }
            _ => unreachable!("distribution construction expected"),
        }
    }
}

fn match_pattern(pat: &Pattern, v: &Val) -> Option<Vec<(Ident, Val)>> {
    match pat {
        Pattern::Var(x) => Some(vec![(x.clone(), v.clone())]),
        Pattern::True => match v {
            Val::Bool(true) => Some(vec![]),
            _ => None,
        },
        Pattern::Lit(c) => {
            let eq = match (c, v) {
                (Const::Int(a), Val::Int(b)) => a == b,
                (Const::Float(a), Val::Float(b)) => a == b,
                (Const::Bool(a), Val::Bool(b)) => a == b,
                _ => false,
            };
            if eq {
                Some(vec![])
            } else {
                None
            }
        }
        Pattern::Con(c, sub) => match v {
            Val::Variant(name, payload) if name == c => match_pattern(sub, payload),
            _ => None,
        },
        Pattern::Record(fields) => match v {
            Val::Record(have) => {
                let mut out = Vec::new();
                for (l, var) in fields {
                    let fv = have.iter().find(|(hl, _)| hl == l)?;
                    out.push((var.clone(), fv.1.clone()));
                }
                Some(out)
            }
            _ => None,
        },
    }
}

fn eval_builtin(b: Builtin, args: &[Val]) -> Result<Val, VmError> {
    use Builtin::*;
    let f = |i: usize| -> Result<f64, VmError> {
        match &args[i] {
            Val::Float(v) => Ok(*v),
            _ => Err(VmError::CellType("float")),
        }
    };
    let i = |k: usize| -> Result<i64, VmError> {
        match &args[k] {
            Val::Int(v) => Ok(*v),
            _ => Err(VmError::CellType("int")),
        }
    };
    Ok(match b {
        Addi => Val::Int(i(0)?.wrapping_add(i(1)?)),
        Subi => Val::Int(i(0)?.wrapping_sub(i(1)?)),
        Muli => Val::Int(i(0)?.wrapping_mul(i(1)?)),
        Eqi => Val::Bool(i(0)? == i(1)?),
        Addf => Val::Float(f(0)? + f(1)?),
        Subf => Val::Float(f(0)? - f(1)?),
        Mulf => Val::Float(f(0)? * f(1)?),
        Divf => Val::Float(f(0)? / f(1)?),
        Geqf => Val::Bool(f(0)? >= f(1)?),
        Leqf => Val::Bool(f(0)? <= f(1)?),
        Eqf => Val::Bool(f(0)? == f(1)?),
        Log => Val::Float(f(0)?.ln()),
        Exp => Val::Float(f(0)?.exp()),
        Get => match (&args[0], &args[1]) {
            (Val::Seq(vs), Val::Int(idx)) => {
                if *idx < 0 || *idx as usize >= vs.len() {
                    return Err(VmError::SeqOutOfBounds {
                        idx: *idx,
                        len: vs.len(),
                    });
                }
                vs[*idx as usize].clone()
            }
            _ => return Err(VmError::CellType("sequence")),
        },
    })
}

/// Decodes a VM result-cell run into a structured value, given its type.
/// Pool references (sequences and recursive variants) are followed.
pub fn decode_cells(
    prog: &TypedProgram,
    vmprog: &BlockProgram,
    cells: &[Cell],
    ty: &Type,
) -> Result<Val, VmError> {
    let mut pos = 0;
    decode_at(prog, vmprog, cells, &mut pos, ty)
}

fn decode_at(
    prog: &TypedProgram,
    vmprog: &BlockProgram,
    cells: &[Cell],
    pos: &mut usize,
    ty: &Type,
) -> Result<Val, VmError> {
    let take = |pos: &mut usize| -> Cell {
        let c = cells[*pos];
        *pos += 1;
        c
    };
    match ty {
        Type::Int => match take(pos) {
            Cell::I(v) => Ok(Val::Int(v)),
            _ => Err(VmError::CellType("int")),
        },
        Type::Float => match take(pos) {
            Cell::F(v) => Ok(Val::Float(v)),
            _ => Err(VmError::CellType("float")),
        },
        Type::Bool => match take(pos) {
            Cell::B(v) => Ok(Val::Bool(v)),
            _ => Err(VmError::CellType("bool")),
        },
        Type::Record(fields) => {
            let mut out = Vec::new();
            for (l, fty) in fields {
                out.push((l.clone(), decode_at(prog, vmprog, cells, pos, fty)?));
            }
            Ok(Val::Record(out))
        }
        Type::Seq(elem) => match take(pos) {
            Cell::Pool(r) => {
                let r = r as usize;
                let len = match vmprog.pool[r] {
                    Cell::I(n) => n as usize,
                    _ => return Err(VmError::CellType("sequence header")),
                };
                let esz = prog.size_of(elem);
                let mut vs = Vec::new();
                for k in 0..len {
                    let start = r + 1 + k * esz;
                    let slice = &vmprog.pool[start..start + esz];
                    let mut p = 0;
                    vs.push(decode_at(prog, vmprog, slice, &mut p, elem)?);
                }
                Ok(Val::Seq(vs))
            }
            _ => Err(VmError::CellType("pool reference")),
        },
        Type::Variant(vname) => {
            if prog.variant_is_recursive(vname) {
                match take(pos) {
                    Cell::Pool(r) => {
                        let r = r as usize;
                        let tag = match vmprog.pool[r] {
                            Cell::I(t) => t as usize,
                            _ => return Err(VmError::CellType("variant tag")),
                        };
                        let (cname, pty) = &prog.variants[vname].cons[tag];
                        let psz = prog.size_of(pty);
                        let slice = &vmprog.pool[r + 1..r + 1 + psz];
                        let mut p = 0;
                        let payload = decode_at(prog, vmprog, slice, &mut p, pty)?;
                        Ok(Val::Variant(cname.clone(), Box::new(payload)))
                    }
                    _ => Err(VmError::CellType("pool reference")),
                }
            } else {
                let tag = match take(pos) {
                    Cell::I(t) => t as usize,
                    _ => return Err(VmError::CellType("variant tag")),
                };
                let total = 1 + prog.max_payload(vname);
                let (cname, pty) = &prog.variants[vname].cons[tag];
                let mut p = *pos;
                let payload = decode_at(prog, vmprog, cells, &mut p, pty)?;
                *pos += total - 1;
                Ok(Val::Variant(cname.clone(), Box::new(payload)))
            }
        }
        Type::Str | Type::Arrow(..) | Type::Var(_) => Err(VmError::CellType("decodable type")),
    }
}

/// Decodes the program result of every particle.
pub fn decode_result_values(
    prog: &TypedProgram,
    vmprog: &BlockProgram,
    states: &[crate::vm::ParticleState],
) -> Result<Vec<Val>, VmError> {
    states
        .iter()
        .map(|s| decode_cells(prog, vmprog, s.result(vmprog), &prog.main_ty))
        .collect()
}

// ---------------------------------------------------------------------
// Kalman filter for the 1-D linear-Gaussian state-space model
// ---------------------------------------------------------------------

/// Parameters of the observed chain: the first latent state's marginal
/// prior, the per-step drift and transition variance (applied from the
/// second step on), and the observation variance.
#[derive(Debug, Clone, Copy)]
pub struct SsmParams {
    pub first_mean: f64,
    pub first_var: f64,
    pub drift: f64,
    pub trans_var: f64,
    pub obs_var: f64,
}

/// Exact log marginal likelihood and the filtered means/variances after
/// each observation.
pub fn kalman_filter(p: &SsmParams, ys: &[f64]) -> Result<(f64, Vec<(f64, f64)>), String> {
    if p.first_var <= 0.0 || p.trans_var <= 0.0 || p.obs_var <= 0.0 {
        return Err("variances must be positive".into());
    }
    let mut mean = p.first_mean;
    let mut var = p.first_var;
    let mut logz = 0.0;
    let mut filtered = Vec::with_capacity(ys.len());
    for (t, y) in ys.iter().enumerate() {
        if t > 0 {
            mean += p.drift;
            var += p.trans_var;
        }
        let s = var + p.obs_var;
        let resid = y - mean;
        logz += -0.5 * (crate::dists::LN_2PI + s.ln()) - 0.5 * resid * resid / s;
        let gain = var / s;
        mean += gain * resid;
        var *= 1.0 - gain;
        filtered.push((mean, var));
    }
    Ok((logz, filtered))
}

pub fn kalman_logz(p: &SsmParams, ys: &[f64]) -> Result<f64, String> {
    kalman_filter(p, ys).map(|(z, _)| z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anf::normalize;
    use crate::frontend::{parse, typecheck_lite};

    fn anf(src: &str) -> TypedProgram {
        normalize(&typecheck_lite(&parse(src).unwrap()).unwrap())
    }

    const GEOMETRIC: &str = "recursive let geometric = lam p.\n\
        let x = assume (Bernoulli p) in\n\
        if x then\n\
          weight (log 1.5);\n\
          addi 1 (geometric p)\n\
        else 1\n\
        in geometric 0.5";

    #[test]
    fn geometric_forced_tapes() {
        use crate::dists::Value;
        let prog = anf(GEOMETRIC);

        let mut tape = RandomSource::tape(vec![
            Value::Bool(true),
            Value::Bool(true),
            Value::Bool(false),
        ]);
        let (v, lw) = interpret_direct(&prog, &mut tape, None).unwrap();
        assert_eq!(v, Val::Int(3));
        assert!((lw - 2.0 * 1.5f64.ln()).abs() < 1e-14);

        let mut tape = RandomSource::tape(vec![Value::Bool(false)]);
        let (v, lw) = interpret_direct(&prog, &mut tape, None).unwrap();
        assert_eq!(v, Val::Int(1));
        assert_eq!(lw, 0.0);
    }

    #[test]
    fn kalman_one_step_closed_form() {
        // prior N(0,1) on the first observed state, obs var 1, y = 0:
        // logZ = log N(0; 0, 2) = -0.5 ln(4 pi)
        let p = SsmParams {
            first_mean: 0.0,
            first_var: 1.0,
            drift: 0.0,
            trans_var: 1.0,
            obs_var: 1.0,
        };
        let (z, filtered) = kalman_filter(&p, &[0.0]).unwrap();
        let expect = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((z - expect).abs() < 1e-14, "z={} expect={}", z, expect);
        // posterior: mean 0, var 1/2
        assert!((filtered[0].0).abs() < 1e-14);
        assert!((filtered[0].1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn kalman_empty_observations() {
        let p = SsmParams {
            first_mean: 2.0,
            first_var: 10001.0,
            drift: 2.0,
            trans_var: 1.0,
            obs_var: 25.0,
        };
        assert_eq!(kalman_logz(&p, &[]).unwrap(), 0.0);
    }

    #[test]
    fn kalman_rejects_bad_variance() {
        let p = SsmParams {
            first_mean: 0.0,
            first_var: 1.0,
            drift: 0.0,
            trans_var: 0.0,
            obs_var: 1.0,
        };
        assert!(kalman_filter(&p, &[0.0]).is_err());
    }
}
