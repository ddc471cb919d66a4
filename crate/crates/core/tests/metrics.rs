use std::collections::BTreeMap;

use lcqa::analysis::{mean, pearson};
use lcqa::collection::Level;
use lcqa::corpus::Tokenizer;
use lcqa::eval::{evaluate_prompt, exact_match, f1_score, normalize, ContextMode, EvalTarget};
use lcqa::llm::{ConstantModel, ContextLimitModel, EndpointConfig};
use lcqa::template::{Skill, Topic};
use proptest::prelude::*;

/// Precision/recall form, written independently of the library.
fn f1_oracle(pred: &str, gold: &str) -> f64 {
    let toks = |s: &str| -> Vec<String> {
        normalize(s).split([' ', ',']).filter(|t| !t.is_empty()).map(str::to_string).collect()
    };
    let (p, g) = (toks(pred), toks(gold));
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut left: BTreeMap<&str, i32> = BTreeMap::new();
    for t in &g {
        *left.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &p {
        if let Some(c) = left.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[test]
fn exact_match_unit_cases() {
    assert_eq!(exact_match("10", "10"), 1);
    assert_eq!(exact_match("null", "NULL"), 1);
    assert_eq!(exact_match("A. Vaswani, N. Shazeer", "N. Shazeer, A. Vaswani"), 0);
    assert_eq!(exact_match("  9,17 , 5 ", "9, 17, 5"), 1);
    assert_eq!(exact_match("10.", "10"), 1);
    assert_eq!(exact_match("10.0", "10"), 1);
    assert_eq!(exact_match("12.50", "12.5"), 1);
    assert_eq!(exact_match("11", "10"), 0);
}

#[test]
fn f1_unit_cases() {
    assert_eq!(f1_score("A. Vaswani", "A. Vaswani"), 1.0);
    let partial = f1_score("N. Shazeer, A. Vaswani", "A. Vaswani");
    assert!((partial - 2.0 / 3.0).abs() < 1e-12, "{partial}");
    assert_eq!(f1_score("alpha beta", "gamma delta"), 0.0);
    assert_eq!(f1_score("", ""), 1.0);
    assert_eq!(f1_score("", "10"), 0.0);
    assert_eq!(f1_score("10", " "), 0.0);
}

#[test]
fn over_length_prompts_are_unanswerable() {
    let t = EvalTarget {
        instance_id: "i",
        level: Level(8 * 1024),
        skill: Skill::Aggregating,
        topic: Topic::AuthorCount,
        sql: "SELECT MAX(author_count) FROM articles",
        gold: "10",
    };
    let tok = Tokenizer::default();
    let ep = EndpointConfig::default();
    let ok = evaluate_prompt(&t, "short", ContextMode::FullText, &ConstantModel { answer: "10".into() }, &ep, 3, &tok)
        .unwrap();
    assert_eq!(ok.samples, ["10", "10", "10"]);
    assert_eq!(ok.mean_em, Some(1.0));
    let one = evaluate_prompt(&t, "short", ContextMode::FullText, &ConstantModel { answer: "10".into() }, &ep, 1, &tok)
        .unwrap();
    assert_eq!(one.samples.len(), 1);

    let limited = ContextLimitModel { max_chars: 10, answer: "10".into() };
    let r = evaluate_prompt(&t, &"x".repeat(50), ContextMode::FullText, &limited, &ep, 3, &tok).unwrap();
    assert!(r.unanswerable);
    assert!(r.samples.is_empty() && r.mean_em.is_none());

    let windowed = EndpointConfig { context_window: Some(4), ..EndpointConfig::default() };
    let r = evaluate_prompt(
        &t,
        &"y".repeat(40),
        ContextMode::DbTables,
        &ConstantModel { answer: "10".into() },
        &windowed,
        3,
        &tok,
    )
    .unwrap();
    assert!(r.unanswerable);
    assert_eq!(r.prompt_tokens, 10);
}

fn closed_form_r(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| a * b).sum();
    let sxx: f64 = xs.iter().map(|a| a * a).sum();
    let syy: f64 = ys.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn pearson_matches_closed_form() {
    let c = pearson(&[1.0f64, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
    assert!((c.r - 0.5).abs() < 1e-9);
    let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 5.0 + i as f64 * 0.1).collect();
    let ys: Vec<f64> = (0..40).map(|i| (i as f64 * 0.91).cos() + i as f64 * 0.05).collect();
    let c = pearson(&xs, &ys).unwrap();
    assert!((c.r - closed_form_r(&xs, &ys)).abs() < 1e-9);
    assert!(c.p > 0.0 && c.p < 1.0);
    let c32 = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[2.0f32, 4.0, 6.5, 8.0]).unwrap();
    assert!(c32.r > 0.99);
}

fn small_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[ a-cA-C0-9.,]{0,12}").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn exact_match_implies_full_f1(p in small_text(), g in small_text()) {
        if exact_match(&p, &g) == 1 {
            prop_assert_eq!(f1_score(&p, &g), 1.0);
        }
        let f = f1_score(&p, &g);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - f1_score(&g, &p)).abs() < 1e-12);
    }

    #[test]
    fn equal_after_normalization_matches(p in small_text()) {
        let g = format!("  {}. ", p.to_uppercase());
        let ok = !p.trim_end().ends_with('.');
        if ok {
            prop_assert_eq!(exact_match(&p, &g), 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn f1_agrees_with_precision_recall_form(p in "[a-d ,]{0,16}", g in "[a-d ,]{0,16}") {
        prop_assert!((f1_score(&p, &g) - f1_oracle(&p, &g)).abs() < 1e-12);
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps(
        xs in proptest::collection::vec(-100.0f64..100.0, 3..30),
        noise in proptest::collection::vec(-50.0f64..50.0, 30),
        a in 0.1f64..10.0, b in -100.0f64..100.0,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.5 * x + e).collect();
        let base = pearson(&xs, &ys);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let m = pearson(&mapped, &ys).unwrap();
        prop_assert!((m.r - base.r).abs() < 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson(&flipped, &ys).unwrap().r + base.r).abs() < 1e-9);
        prop_assert!((pearson(&ys, &xs).unwrap().r - base.r).abs() < 1e-12);
        prop_assert!((base.r - closed_form_r(&xs, &ys)).abs() < 1e-9);
    }

    #[test]
    fn mean_ignores_order(mut xs in proptest::collection::vec(-1e6f64..1e6, 1..50), seed in any::<u64>()) {
        let m = mean(&xs).unwrap();
        use rand::{seq::SliceRandom, SeedableRng};
        xs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(mean(&xs).unwrap(), m);
    }
}
