//! Resample-reachability analysis: which functions may, directly or
//! through calls, hit a `resample` checkpoint. Only those functions are
//! decomposed into blocks; the rest compile to direct calls with no
//! explicit stack frame.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Ident, Term};
use crate::frontend::typecheck::TypedProgram;

#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    /// Function name -> callees (declared functions only; builtins are
    /// not nodes).
    pub edges: BTreeMap<Ident, BTreeSet<Ident>>,
    /// Function name -> body syntactically contains `resample`.
    pub direct_resample: BTreeMap<Ident, bool>,
}

pub fn build_call_graph(prog: &TypedProgram) -> CallGraph {
    let mut g = CallGraph::default();
    for f in &prog.funcs {
        let mut callees = BTreeSet::new();
        let mut direct = false;
        scan(&f.body, prog, &mut callees, &mut direct);
        g.edges.insert(f.name.clone(), callees);
        g.direct_resample.insert(f.name.clone(), direct);
    }
    g
}

fn scan(t: &Term, prog: &TypedProgram, callees: &mut BTreeSet<Ident>, direct: &mut bool) {
    match t {
        Term::Resample => *direct = true,
        Term::App(..) => {
            let (head, args) = t.spine();
            if let Term::Var(f) = head {
                if prog.func(f).is_some() {
                    callees.insert(f.clone());
                }
            }
            for a in args {
                scan(a, prog, callees, direct);
            }
        }
        Term::Let { rhs, body, .. } => {
            scan(rhs, prog, callees, direct);
            scan(body, prog, callees, direct);
        }
        Term::Match {
            scrut, thn, els, ..
        } => {
            scan(scrut, prog, callees, direct);
            scan(thn, prog, callees, direct);
            scan(els, prog, callees, direct);
        }
        Term::Assume(d) | Term::Weight(d) | Term::Con(_, d) => scan(d, prog, callees, direct),
        Term::Observe(v, d) => {
            scan(v, prog, callees, direct);
            scan(d, prog, callees, direct);
        }
        Term::Dist(_, args) => args.iter().for_each(|a| scan(a, prog, callees, direct)),
        Term::Seq(es) => es.iter().for_each(|e| scan(e, prog, callees, direct)),
        Term::Record(fs) => fs.iter().for_each(|(_, e)| scan(e, prog, callees, direct)),
        Term::Var(_) | Term::Const(_) => {}
        _ => {}
    }
}

/// Least fixed point: F is in the set iff it has a direct `resample` or
/// calls some function in the set. Worklist iteration; the result is
/// order-independent.
pub fn resample_set(g: &CallGraph) -> BTreeSet<Ident> {
    let mut set: BTreeSet<Ident> = g
        .direct_resample
        .iter()
        .filter(|(_, d)| **d)
        .map(|(n, _)| n.clone())
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for (f, callees) in &g.edges {
            if !set.contains(f) && callees.iter().any(|c| set.contains(c)) {
                set.insert(f.clone());
                changed = true;
            }
        }
    }
    set
}

/// Whether the main body itself needs decomposition beyond the synthetic
/// main wrapper: it has a direct resample or calls into the set.
pub fn main_reaches_resample(prog: &TypedProgram, set: &BTreeSet<Ident>) -> bool {
    let mut callees = BTreeSet::new();
    let mut direct = false;
    scan(&prog.main, prog, &mut callees, &mut direct);
    direct || callees.iter().any(|c| set.contains(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anf::normalize;
    use crate::frontend::{parse, typecheck_lite};

    fn graph_of(src: &str) -> (TypedProgram, CallGraph) {
        let t = parse(src).unwrap();
        let prog = normalize(&typecheck_lite(&t).unwrap());
        let g = build_call_graph(&prog);
        (prog, g)
    }

    #[test]
    fn self_recursive_with_resample() {
        let (_, g) = graph_of(
            "recursive let f = lam p.\n\
             let s1 = assume (Gamma p p) in\n\
             resample;\n\
             let s4 = if geqf s1 1. then 6. else f 7. in\n\
             mulf s4 s4\n\
             in f 1.0",
        );
        assert!(g.edges["f"].contains("f"));
        assert!(g.direct_resample["f"]);
        assert_eq!(resample_set(&g), ["f".to_string()].into_iter().collect());
    }

    #[test]
    fn no_calls_no_resample() {
        let (_, g) = graph_of("let x = assume (Bernoulli 0.5) in if x then 1 else 0");
        assert!(g.edges.is_empty());
        assert!(resample_set(&g).is_empty());
    }

    #[test]
    fn builtins_are_not_edges() {
        let (_, g) = graph_of(
            "recursive let f = lam x. geqf x 1. in\n\
             recursive let g = lam x. if f x then 1. else 0. in\n\
             g 2.0",
        );
        assert_eq!(g.edges["g"], ["f".to_string()].into_iter().collect());
        assert!(g.edges["f"].is_empty());
        assert!(resample_set(&g).is_empty());
    }

    #[test]
    fn mutual_recursion_closure() {
        let (_, g) = graph_of(
            "recursive\n\
             let f = lam x. resample; g x\n\
             let g = lam x. if geqf x 1. then 0. else f x\n\
             in g 2.0",
        );
        let set = resample_set(&g);
        assert!(set.contains("f") && set.contains("g"));
    }

    /// Brute-force transitive-closure oracle over random graphs.
    #[test]
    fn fixed_point_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..8usize);
            let mut g = CallGraph::default();
            let names: Vec<String> = (0..n).map(|i| format!("f{}", i)).collect();
            for i in 0..n {
                let mut callees = BTreeSet::new();
                for j in 0..n {
                    if rng.random_bool(0.3) {
                        callees.insert(names[j].clone());
                    }
                }
                g.edges.insert(names[i].clone(), callees);
                g.direct_resample.insert(names[i].clone(), rng.random_bool(0.25));
            }
            let got = resample_set(&g);

            // oracle: for each node, DFS for a reachable direct-resample node
            let mut expect = BTreeSet::new();
            for start in &names {
                let mut stack = vec![start.clone()];
                let mut seen = BTreeSet::new();
                while let Some(f) = stack.pop() {
                    if !seen.insert(f.clone()) {
                        continue;
                    }
                    if g.direct_resample[&f] {
                        expect.insert(start.clone());
                        break;
                    }
                    for c in &g.edges[&f] {
                        stack.push(c.clone());
                    }
                }
            }
            assert_eq!(got, expect);

            // monotonicity: forcing one more direct flag never shrinks the set
            let mut g2 = g.clone();
            if let Some((k, _)) = g2.direct_resample.iter().next() {
                let k = k.clone();
                g2.direct_resample.insert(k, true);
            }
            let got2 = resample_set(&g2);
            assert!(got.is_subset(&got2));
        }
    }
}
