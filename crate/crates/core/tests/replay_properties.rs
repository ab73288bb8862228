use btp_core::replay::{
    descending_ranks, p2value, persist, priorities_from_values, sampling_distribution, PassRate,
    PriorityConfig, PriorityScheme, ReplayBuffer, ReplayEntry,
};
use proptest::prelude::*;

fn entry(i: usize, logprob: f64, tokens: usize, pass: PassRate) -> ReplayEntry {
    let mut toks: Vec<String> = (1..tokens).map(|j| format!("t{j}")).collect();
    toks.push("<eos>".into());
    let mut e = ReplayEntry::new(format!("task-{i}"), toks, format!("prog {i}"), logprob).unwrap();
    e.pass_rate = pass;
    e
}

fn arb_entry() -> impl Strategy<Value = (f64, usize, u32)> {
    // mean token logprob, token count, pass numerator out of 20
    (-6.0f64..=0.0, 1usize..8, 0u32..=20)
}

fn buffer_of(specs: &[(f64, usize, u32)]) -> ReplayBuffer {
    let mut b = ReplayBuffer::unbounded(3);
    for (i, (mean, n, pass)) in specs.iter().enumerate() {
        b.insert(entry(i, mean * *n as f64, *n, PassRate::Tested(*pass as f64 / 20.0))).unwrap();
    }
    b
}

fn config(scheme: PriorityScheme, mix: f64, beta: f64) -> PriorityConfig {
    PriorityConfig {
        mix_weight: mix,
        prioritization_exponent: beta,
        scheme,
        with_replacement: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn monotone_and_non_starving(
        specs in prop::collection::vec(arb_entry(), 1..30),
        mix in 0.0f64..=1.0,
        beta in 0.1f64..3.0,
        rank in any::<bool>(),
    ) {
        let scheme = if rank { PriorityScheme::Rank } else { PriorityScheme::Proportional };
        let b = buffer_of(&specs);
        let values: Vec<f64> = b.iter().map(|e| p2value(e, mix).unwrap()).collect();
        if values.iter().all(|v| *v > 0.0) {
            let cfg = config(scheme, mix, beta);
            let prios: Vec<f64> = b.priorities(&cfg).unwrap().into_iter().map(|(_, p)| p).collect();
            let dist: Vec<f64> = b.sampling_distribution(&cfg).unwrap().into_iter().map(|(_, p)| p).collect();
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for i in 0..dist.len() {
                prop_assert!(dist[i] > 0.0);
                for j in 0..dist.len() {
                    if prios[i] > prios[j] {
                        prop_assert!(dist[i] > dist[j]);
                    }
                    if values[i] > values[j] {
                        prop_assert!(prios[i] > prios[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn rank_distribution_order_invariant(
        values in prop::collection::vec(0.001f64..1.0, 1..30),
        beta in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        // order-preserving perturbation: strictly increasing transform
        let shift = (seed % 1000) as f64 / 1000.0;
        let perturbed: Vec<f64> = values.iter().map(|v| v.powf(0.5 + shift) * 0.9 + 0.01).collect();
        let a = sampling_distribution(&priorities_from_values(&values, PriorityScheme::Rank).unwrap(), beta).unwrap();
        let b = sampling_distribution(&priorities_from_values(&perturbed, PriorityScheme::Rank).unwrap(), beta).unwrap();
        prop_assert_eq!(descending_ranks(&values), descending_ranks(&perturbed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn p2value_affine_in_mix(mean in -6.0f64..=0.0, n in 1usize..8, pass in 0u32..=20, mix in 0.0f64..=1.0) {
        let e = entry(0, mean * n as f64, n, PassRate::Tested(pass as f64 / 20.0));
        let at = p2value(&e, mix).unwrap();
        let ends = mix * p2value(&e, 1.0).unwrap() + (1.0 - mix) * p2value(&e, 0.0).unwrap();
        prop_assert!((at - ends).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&at));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn persist_round_trip(
        specs in prop::collection::vec((-50.0f64..=0.0, 1usize..10, 0u8..4, 0u32..=7), 0..20),
        cap in prop::option::of(1usize..25),
        seed in any::<u64>(),
    ) {
        let mut b = ReplayBuffer::new(cap, seed).unwrap();
        for (i, (lp, n, kind, pass)) in specs.iter().enumerate() {
            let pr = match kind {
                0 => PassRate::Untested,
                1 => PassRate::Untestable,
                _ => PassRate::Tested(*pass as f64 / 7.0),
            };
            b.insert(entry(i, *lp, *n, pr)).unwrap();
        }
        let text = persist::to_ndjson(&b);
        let back = persist::from_ndjson(&text).unwrap();
        prop_assert_eq!(persist::to_ndjson(&back), text);
        prop_assert_eq!(back.len(), b.len());
        prop_assert_eq!(back.capacity(), b.capacity());
        prop_assert_eq!(back.rng_seed(), b.rng_seed());
        for (x, y) in back.iter().zip(b.iter()) {
            prop_assert_eq!(x.seq_logprob.to_bits(), y.seq_logprob.to_bits());
            prop_assert_eq!(x.seq_prob_normalized.to_bits(), y.seq_prob_normalized.to_bits());
            prop_assert_eq!(x, y);
        }
    }
}

#[test]
fn closed_form_table() {
    // 50 generated cases; the oracle recomputes from the raw fields
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for case in 0..50 {
        let n = 2 + case % 9;
        let mix = (case % 21) as f64 / 20.0;
        let mut b = ReplayBuffer::unbounded(0);
        for i in 0..n {
            let tokens = 1 + i % 5;
            let lp = -3.0 * next() * tokens as f64;
            let pass = (next() * 6.0).floor() / 5.0;
            b.insert(entry(i, lp, tokens, PassRate::Tested(pass.min(1.0)))).unwrap();
        }
        let want_values: Vec<f64> = b
            .iter()
            .map(|e| {
                let p = (e.seq_logprob / e.program_tokens.len() as f64).exp();
                mix * p + (1.0 - mix) * e.pass_rate.value().unwrap()
            })
            .collect();
        let got_values: Vec<f64> = b.iter().map(|e| p2value(e, mix).unwrap()).collect();
        for (g, w) in got_values.iter().zip(&want_values) {
            assert!((g - w).abs() <= 1e-12);
        }
        let cfg = config(PriorityScheme::Rank, mix, 1.0);
        let got: Vec<f64> = b.priorities(&cfg).unwrap().into_iter().map(|(_, p)| p).collect();
        for (i, g) in got.iter().enumerate() {
            let better = (0..n)
                .filter(|&j| want_values[j] > want_values[i] || (want_values[j] == want_values[i] && j < i))
                .count();
            assert!((g - 1.0 / (better + 1) as f64).abs() <= 1e-12, "case {case}");
        }
    }
}

#[test]
fn spec_examples() {
    let e = |prob: f64, pass: f64| entry(0, prob.ln(), 1, PassRate::Tested(pass));
    assert!((p2value(&e(0.8, 0.4), 0.5).unwrap() - 0.6).abs() <= 1e-12);
    assert!((p2value(&e(0.3, 0.7), 1.0).unwrap() - 0.3).abs() <= 1e-12);
    assert!((p2value(&e(0.3, 0.7), 0.0).unwrap() - 0.7).abs() <= 1e-12);
    let r = priorities_from_values(&[0.9, 0.5, 0.7], PriorityScheme::Rank).unwrap();
    assert_eq!(r, [1.0, 1.0 / 3.0, 0.5]);
    assert_eq!(priorities_from_values(&[0.4, 0.4], PriorityScheme::Rank).unwrap(), [1.0, 0.5]);
    assert_eq!(sampling_distribution(&[2.0, 1.0, 1.0], 1.0).unwrap(), [0.5, 0.25, 0.25]);
    let d = sampling_distribution(&[4.0, 1.0], 0.5).unwrap();
    assert!((d[0] - 2.0 / 3.0).abs() <= 1e-12 && (d[1] - 1.0 / 3.0).abs() <= 1e-12);
    assert!(sampling_distribution(&[1.0, 0.0], 1.0).is_err());
}

#[test]
fn fifo_eviction_and_empty_persist() {
    let mut b = ReplayBuffer::new(Some(2), 0).unwrap();
    for i in 0..3 {
        b.insert(entry(i, -1.0, 1, PassRate::Untested)).unwrap();
    }
    let ids: Vec<&str> = b.iter().map(|e| e.task_id.as_str()).collect();
    assert_eq!(ids, ["task-1", "task-2"]);
    let empty = ReplayBuffer::unbounded(9);
    let text = persist::to_ndjson(&empty);
    assert_eq!(text.lines().count(), 1);
    assert_eq!(persist::from_ndjson(&text).unwrap().len(), 0);
}
