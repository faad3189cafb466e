//! Source-language frontend: lexing, parsing, desugaring, the canonical
//! pretty-printer, and the lite type checker.

pub mod desugar;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod typecheck;

pub use desugar::desugar;
pub use pretty::pretty;
pub use typecheck::{typecheck_lite, FuncDef, TypedProgram, VariantDef};

use crate::ast::Term;
use crate::error::ParseError;

/// Parses source text into a desugared, scope-checked [`Term`].
pub fn parse(src: &str) -> Result<Term, ParseError> {
    let raw = parser::parse_raw(src, false)?;
    parser::scope_check(&raw)?;
    Ok(desugar(&raw))
}

/// Like [`parse`], but accepts the compiler-reserved temporary names
/// (`tN`, `_N`). Stage dumps re-parse through this entry point.
pub fn parse_lenient(src: &str) -> Result<Term, ParseError> {
    let raw = parser::parse_raw(src, true)?;
    parser::scope_check(&raw)?;
    Ok(desugar(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Const, DistName, Pattern, Term};

    #[test]
    fn parse_covers_core_forms() {
        let t = parse("assume (Bernoulli 0.5)").unwrap();
        assert_eq!(
            t,
            Term::Assume(Box::new(Term::Dist(
                DistName::Bernoulli,
                vec![Term::float(0.5)]
            )))
        );

        assert_eq!(parse("1").unwrap(), Term::int(1));

        // if desugars to a boolean match
        let t = parse("let x = true in if x then 1 else 2").unwrap();
        let Term::Let { body, .. } = t else { panic!() };
        assert_eq!(
            *body,
            Term::Match {
                scrut: Box::new(Term::var("x")),
                pat: Pattern::True,
                thn: Box::new(Term::int(1)),
                els: Box::new(Term::int(2)),
            }
        );
    }

    #[test]
    fn parse_reports_position() {
        let err = parse("let x = [1, 2 in x").unwrap_err();
        assert!(err.line >= 1 && err.col > 1, "{:?}", err);
    }

    #[test]
    fn distribution_arity_checked_at_parse() {
        let err = parse("assume (Normal 1.0)").unwrap_err();
        assert!(err.msg.contains("2 parameters"), "{}", err.msg);
    }

    #[test]
    fn unbound_variable_rejected() {
        let err = parse("addi 1 y").unwrap_err();
        assert!(err.msg.contains("unbound variable 'y'"));
    }

    #[test]
    fn reserved_temporaries_rejected_strict_accepted_lenient() {
        assert!(parse("let t1 = 1 in t1").is_err());
        assert!(parse("let _2 = 1 in _2").is_err());
        assert!(parse_lenient("let t1 = 1 in t1").is_ok());
        // ordinary names starting with t are fine
        assert!(parse("let tree = 1 in tree").is_ok());
    }

    #[test]
    fn functions_cannot_be_arguments() {
        let err = parse(
            "recursive let f = lam x. x in\n\
             recursive let g = lam h. 1 in\n\
             g f",
        )
        .unwrap_err();
        assert!(err.msg.contains("may not be passed"), "{}", err.msg);
    }

    #[test]
    fn distributions_only_under_assume_observe() {
        let err = parse("let d = Normal 0.0 1.0 in assume d").unwrap_err();
        assert!(err.msg.contains("immediately"), "{}", err.msg);
    }

    #[test]
    fn desugar_sequencing_becomes_let() {
        let t = parse("let r = 1 in (weight (log 1.5); addi 1 r)").unwrap();
        let Term::Let { body, .. } = t else { panic!() };
        let Term::Let { name, rhs, body, .. } = *body else {
            panic!("expected desugared sequencing, got {:?}", body)
        };
        assert_eq!(name, "_1");
        assert!(matches!(*rhs, Term::Weight(_)));
        assert_eq!(
            *body,
            Term::app(
                Term::Const(Const::Builtin(crate::ast::Builtin::Addi)),
                vec![Term::int(1), Term::var("r")]
            )
        );
    }

    #[test]
    fn desugar_is_idempotent_and_identity_on_sugar_free() {
        let sugar_free = parser::parse_raw("let x = assume (Bernoulli 0.5) in x", false).unwrap();
        assert_eq!(desugar(&sugar_free), sugar_free);

        let sugared = parser::parse_raw("resample; if true then 1 else 2", false).unwrap();
        let once = desugar(&sugared);
        assert_eq!(desugar(&once), once);
    }

    #[test]
    fn nested_if_round_trips_through_pretty() {
        let src = "let a = true in let b = false in\n\
                   if a then (if b then 1 else 2) else (if b then 3 else 4)";
        let t = parse(src).unwrap();
        let printed = pretty(&t);
        let again = parse_lenient(&printed).unwrap();
        assert_eq!(t, again, "pretty output:\n{}", printed);
    }

    /// parse . pretty is the identity on generated well-formed programs.
    #[test]
    fn pretty_parse_round_trip_on_generated_programs() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for i in 0..500 {
            let t = crate::testsupport::gen_typed_program(&mut rng);
            let printed = pretty(&t);
            let reparsed = parser::parse_raw(&printed, false)
                .unwrap_or_else(|e| panic!("case {}: {}\n{}", i, e, printed));
            assert_eq!(t, reparsed, "case {}:\n{}", i, printed);
        }
    }

    #[test]
    fn typecheck_accepts_geometric_with_expected_signature() {
        let t = parse(
            "recursive let geometric = lam p.\n\
             let x = assume (Bernoulli p) in\n\
             if x then (weight (log 1.5); addi 1 (geometric p)) else 1\n\
             in geometric 0.5",
        )
        .unwrap();
        let prog = typecheck_lite(&t).unwrap();
        let f = prog.func("geometric").unwrap();
        assert_eq!(f.params.len(), 1);
        assert_eq!(f.params[0].1, crate::ast::Type::Float);
        assert_eq!(f.ret, crate::ast::Type::Int);
        assert_eq!(prog.main_ty, crate::ast::Type::Int);
    }

    #[test]
    fn monomorphism_rejects_polymorphic_use() {
        let t = parse(
            "recursive let id = lam x. x in\n\
             let a = id 1 in\n\
             let b = id 1.5 in\n\
             a",
        )
        .unwrap();
        let err = typecheck_lite(&t).unwrap_err();
        assert!(err.0.contains("mismatch"), "{}", err.0);
    }

    #[test]
    fn recursively_built_list_rejected_as_dynamic() {
        let t = parse(
            "type List in\n\
             con Nil : () -> List in\n\
             con Cons : {hd: Int, tl: List} -> List in\n\
             recursive let build = lam n.\n\
               if eqi n 0 then Nil ()\n\
               else Cons {hd = n, tl = build (subi n 1)}\n\
             in build 3",
        )
        .unwrap();
        let err = typecheck_lite(&t).unwrap_err();
        assert!(err.0.contains("dynamically sized"), "{}", err.0);
    }

    #[test]
    fn non_constant_sequences_rejected() {
        let t = parse("let x = assume (Normal 0.0 1.0) in let s = [x, 1.0] in get s 0").unwrap();
        let err = typecheck_lite(&t).unwrap_err();
        assert!(err.0.contains("dynamically sized"), "{}", err.0);
    }

    #[test]
    fn function_captures_are_rejected() {
        let t = parse(
            "let c = 1 in\n\
             recursive let f = lam x. addi x c in\n\
             f 2",
        )
        .unwrap();
        let err = typecheck_lite(&t).unwrap_err();
        assert!(err.0.contains("cannot capture"), "{}", err.0);
    }

    #[test]
    fn every_binder_gets_exactly_one_type() {
        let t = parse(
            "recursive let f = lam p. let y = mulf p p in y in\n\
             let a = f 2.0 in\n\
             let b = assume (Bernoulli 0.5) in\n\
             if b then a else 0.0",
        )
        .unwrap();
        let prog = typecheck_lite(&t).unwrap();
        for binder in ["p", "y", "a", "b"] {
            assert!(prog.types.contains_key(binder), "missing type for {}", binder);
        }
    }

    #[test]
    fn shadowed_binders_are_renamed_apart() {
        let t = parse("let x = 1 in let x = addi x 1 in x").unwrap();
        let prog = typecheck_lite(&t).unwrap();
        // both binders typed under distinct names
        let xs: Vec<&String> = prog.types.keys().filter(|k| k.starts_with('x')).collect();
        assert_eq!(xs.len(), 2, "{:?}", prog.types.keys());
    }
}
