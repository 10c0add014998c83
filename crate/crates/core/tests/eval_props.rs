use astmask::corrupt::{CorruptionPolicy, Eligibility, MaskVector, Phase, Rate, RegionRules, Strategy};
use astmask::eval::{
    brute_force_masked_count_distribution, evaluate, iterative_denoise, monte_carlo_check, pass_at_1,
    split_corpus, synthetic_records, train_denoiser, DenoiserModel, EvalConfig, McParams, McStrategy,
    PassAt1, TrainConfig,
};
use astmask::parser::Label;
use astmask::schedule::Schedule;
use astmask::tokenize::{TokenSpan, MASK_ID};
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
use proptest::strategy::Strategy as _;

fn spans_in(len: usize, max: usize) -> impl proptest::strategy::Strategy<Value = Vec<TokenSpan>> {
    proptest::collection::vec((0..len, 1..=len.min(6)), 0..=max).prop_map(move |raw| {
        raw.into_iter()
            .map(|(s, l)| TokenSpan::new(s, (s + l).min(len), Label::Assign))
            .collect()
    })
}

/// Mean by independent inclusion: E[c] = Σ_pos P(pos covered), and a
/// position is uncovered only if every span over it is rejected.
fn coverage_mean(spans: &[TokenSpan], eps: f64, len: usize) -> f64 {
    (0..len)
        .map(|pos| {
            let miss: f64 = spans
                .iter()
                .filter(|s| s.start <= pos && pos < s.end)
                .map(|s| (1.0 - eps).powi(s.len() as i32))
                .product();
            1.0 - miss
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn enumeration_agrees_with_coverage_formula(
        (len, spans) in (1usize..24).prop_flat_map(|l| (proptest::strategy::Just(l), spans_in(l, 10))),
        eps in 0.0f64..=1.0,
    ) {
        let d = brute_force_masked_count_distribution(&spans, eps, len).unwrap();
        prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.probs.iter().all(|&p| p >= -1e-15));
        prop_assert!((d.mean - coverage_mean(&spans, eps, len)).abs() < 1e-9);
        prop_assert!(d.variance >= -1e-12);
    }

    #[test]
    fn denoiser_only_touches_masked_positions(
        xt in proptest::collection::vec(0u32..20, 1..60),
        bits in proptest::collection::vec(any::<bool>(), 60),
        steps in 0usize..6,
    ) {
        let mut model = DenoiserModel::empty(2, 0.1, 20);
        for (pos, &tok) in xt.iter().enumerate() {
            model.observe(&xt, pos, (tok + 1) % 20);
        }
        let mut mask = MaskVector::zeros(xt.len());
        let mut input = xt.clone();
        for i in 0..xt.len() {
            if bits[i] {
                mask.set(i, Phase::Token);
                input[i] = MASK_ID;
            }
        }
        let out = iterative_denoise(&model, &input, &mask, steps);
        prop_assert_eq!(out.len(), input.len());
        for i in 0..xt.len() {
            if bits[i] {
                prop_assert!(out[i] != MASK_ID);
            } else {
                prop_assert_eq!(out[i], input[i]);
            }
        }
    }

    #[test]
    fn pass_at_one_is_the_solved_fraction(results in proptest::collection::vec(any::<bool>(), 1..500)) {
        let p = pass_at_1(&results).unwrap();
        let solved = results.iter().filter(|&&r| r).count();
        prop_assert_eq!(p, PassAt1::new(solved as u64, results.len() as u64).unwrap());
        let printed: f64 = p.percent_string(2).trim_end_matches('%').parse().unwrap();
        prop_assert!((printed - 100.0 * solved as f64 / results.len() as f64).abs() <= 0.005 + 1e-9);
    }
}

#[test]
fn free_monte_carlo_matches_enumeration() {
    let spans: Vec<TokenSpan> = [(0, 3), (2, 6), (5, 9), (9, 10), (1, 8)]
        .iter()
        .map(|&(s, e)| TokenSpan::new(s, e, Label::Call))
        .collect();
    for eps in [0.1, 0.4, 0.8] {
        let params = McParams {
            len: 12,
            spans: spans.clone(),
            epsilon: eps,
            seed: 17,
        };
        let r = monte_carlo_check(McStrategy::Free, 40_000, &params).unwrap();
        assert!(r.oracle_is_exact);
        assert!((r.oracle_mean - coverage_mean(&spans, eps, 12)).abs() < 1e-12);
        assert!(r.gap_in_std_errors <= 4.0, "{r:?}");
    }
}

#[test]
fn random_monte_carlo_matches_eps_len() {
    let params = McParams {
        len: 40,
        spans: vec![],
        epsilon: 0.35,
        seed: 3,
    };
    let r = monte_carlo_check(McStrategy::Random, 40_000, &params).unwrap();
    assert!(r.gap_in_std_errors <= 4.0, "{r:?}");
    let _ = Eligibility::all(1);
    let _ = Rate::new(0.5).unwrap();
}

#[test]
fn rates_do_not_rise_with_corruption() {
    let records = synthetic_records(400, 8);
    let split = split_corpus(&records, 60, 8, 4096).unwrap();
    let mut policy = CorruptionPolicy::new(Strategy::RandomToken, 0);
    policy.regions = RegionRules::uniform();
    let model = train_denoiser(
        &split.train,
        &policy,
        &Schedule::constant(0.3),
        split.vocab.len(),
        &TrainConfig::default(),
    )
    .unwrap();
    let mut prev = (1.0f64, 1.0f64);
    for eps in [0.0, 0.1, 0.3] {
        let report = evaluate(
            &model,
            &split.heldout,
            &split.vocab,
            &policy,
            &Schedule::constant(eps),
            &EvalConfig::default(),
        )
        .unwrap();
        // the generator repeats some short programs; only those may overlap
        let train: std::collections::HashSet<&[u32]> =
            split.train.iter().map(|a| a.seq.tokens.as_slice()).collect();
        let dupes = split
            .heldout
            .iter()
            .filter(|a| train.contains(a.seq.tokens.as_slice()))
            .count();
        assert_eq!(report.heldout_overlap as usize, dupes);
        if eps == 0.0 {
            assert_eq!(report.exact_reconstruction_rate, 1.0);
            assert_eq!(report.syntactic_validity_rate, 1.0);
        }
        assert!(report.exact_reconstruction_rate <= prev.0, "{eps}: {report:?}");
        assert!(report.syntactic_validity_rate <= prev.1, "{eps}: {report:?}");
        prev = (report.exact_reconstruction_rate, report.syntactic_validity_rate);
    }
}

#[test]
fn overlap_between_train_and_eval_is_detected() {
    let records = synthetic_records(30, 4);
    let split = split_corpus(&records, 5, 4, 4096).unwrap();
    let policy = CorruptionPolicy::new(Strategy::RandomToken, 0);
    let model = train_denoiser(
        &split.heldout,
        &policy,
        &Schedule::constant(0.3),
        split.vocab.len(),
        &TrainConfig::default(),
    )
    .unwrap();
    let report = evaluate(
        &model,
        &split.heldout,
        &split.vocab,
        &policy,
        &Schedule::constant(0.3),
        &EvalConfig::default(),
    )
    .unwrap();
    assert_eq!(report.heldout_overlap, 5);
}
