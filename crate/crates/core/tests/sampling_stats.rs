use btp_core::replay::{PassRate, PriorityConfig, PriorityScheme, ReplayBuffer, ReplayEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Buffer whose proportional priorities equal `weights` (pass-rate only).
fn buffer(weights: &[f64]) -> ReplayBuffer {
    let mut b = ReplayBuffer::unbounded(0);
    for (i, w) in weights.iter().enumerate() {
        let mut e = ReplayEntry::new(format!("t{i}"), vec!["<eos>".into()], "", -1.0).unwrap();
        e.pass_rate = PassRate::Tested(*w);
        b.insert(e).unwrap();
    }
    b
}

/// Upper-tail p-value of Pearson's statistic, pooling bins expected below 5.
fn chi_square_p(counts: &[u64], probs: &[f64], n: u64) -> f64 {
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_o += *c as f64;
            pool_e += e;
        } else {
            stat += (*c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1e-300);
        bins += 1;
    }
    if bins < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn empirical_frequencies_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000u64;
    let mut rejected = 0;
    let mut trials = 0;
    for beta in [0.0, 0.5, 1.0, 2.0] {
        for _ in 0..5 {
            let size = rng.gen_range(2..=50);
            let weights: Vec<f64> = (0..size).map(|_| rng.gen_range(0.01..1.0)).collect();
            let cfg = PriorityConfig {
                mix_weight: 0.0,
                prioritization_exponent: beta,
                scheme: PriorityScheme::Proportional,
                with_replacement: true,
            };
            let b = buffer(&weights);
            // oracle: direct normalisation of w^beta
            let total: f64 = weights.iter().map(|w| w.powf(beta)).sum();
            let probs: Vec<f64> = weights.iter().map(|w| w.powf(beta) / total).collect();
            let draws = b.sample(&cfg, n as usize, rng.gen()).unwrap();
            let mut counts = vec![0u64; size];
            for e in draws {
                counts[e.insertion_index as usize] += 1;
            }
            trials += 1;
            if chi_square_p(&counts, &probs, n) < 0.01 {
                rejected += 1;
            }
        }
    }
    // at 1% significance, 20 independent fits reject more than twice with
    // probability below 0.1%
    assert!(rejected <= 2, "{rejected}/{trials} fits rejected");
}

#[test]
fn three_to_one_frequency() {
    let b = buffer(&[0.75, 0.25]);
    let cfg = PriorityConfig {
        mix_weight: 0.0,
        prioritization_exponent: 1.0,
        scheme: PriorityScheme::Proportional,
        with_replacement: true,
    };
    let draws = b.sample(&cfg, 100_000, 99).unwrap();
    let first = draws.iter().filter(|e| e.insertion_index == 0).count() as f64 / 1e5;
    assert!((first - 0.75).abs() <= 0.01, "{first}");
    let again: Vec<u64> = b.sample(&cfg, 1000, 99).unwrap().iter().map(|e| e.insertion_index).collect();
    let once: Vec<u64> = draws[..1000].iter().map(|e| e.insertion_index).collect();
    assert_eq!(again, once);
}

#[test]
fn without_replacement_draws_distinct() {
    let b = buffer(&[0.9, 0.1, 0.5, 0.3]);
    let cfg = PriorityConfig {
        with_replacement: false,
        ..PriorityConfig::default()
    };
    let mut got: Vec<u64> = b.sample(&cfg, 4, 1).unwrap().iter().map(|e| e.insertion_index).collect();
    got.sort();
    assert_eq!(got, [0, 1, 2, 3]);
    assert!(b.sample(&cfg, 5, 1).is_err());
}
