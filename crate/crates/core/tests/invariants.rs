use proptest::prelude::*;

use prefopt::analysis::{check_prop1, random_instance, total_variation, CampaignConfig};
use prefopt::data::State;
use prefopt::envs::FeatureMap;
use prefopt::harness::{trimmed_mean, EnvChoice, ExperimentConfig, Method};
use prefopt::math::{log_softmax, softmax};
use prefopt::policy::{kl_to_uniform, Policy};

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, len).prop_map(|w| {
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        w.iter().map(|x| (x + 1e-9 / w.len() as f64) / total).collect()
    })
}

proptest! {
    #[test]
    fn trimmed_mean_is_bounded_and_order_free(mut v in proptest::collection::vec(-1e6f64..1e6, 3..40)) {
        let t = trimmed_mean(&v).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo - 1e-9 && t <= hi + 1e-9);
        v.reverse();
        prop_assert!((trimmed_mean(&v).unwrap() - t).abs() <= 1e-9 * (1.0 + t.abs()));
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(z in proptest::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, l) in p.iter().zip(log_softmax(&z)) {
            prop_assert!((a.ln() - l).abs() < 1e-9 || *a < 1e-300);
        }
    }

    #[test]
    fn kl_to_uniform_between_zero_and_log_k(p in (2usize..10).prop_flat_map(distribution)) {
        let kl = kl_to_uniform(&p);
        prop_assert!(kl >= -1e-12);
        prop_assert!(kl <= (p.len() as f64).ln() + 1e-12);
    }

    /// TV equals the largest gap in expectation over test functions with values in [0, 1];
    /// for a finite support that maximum is attained at an indicator, so enumerate subsets.
    #[test]
    fn total_variation_matches_subset_supremum((p, q) in (1usize..7).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        let n = p.len();
        let sup = (0u32..1 << n)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| p[i] - q[i]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let tv = total_variation(&p, &q);
        prop_assert!((tv - sup).abs() < 1e-12);
        prop_assert!((tv - total_variation(&q, &p)).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
    }

    #[test]
    fn policy_rows_are_distributions(theta in proptest::collection::vec(-30.0f64..30.0, 2), s in 0.0f64..1.0) {
        for features in [FeatureMap::LinearReward, FeatureMap::LinearFlipped] {
            let p = Policy::linear(features, theta.clone(), 4).unwrap();
            let probs = p.action_probs(&State::scalar(s)).unwrap();
            prop_assert_eq!(probs.len(), 4);
            prop_assert!(probs.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn regret_bound_holds_on_random_instances(seed in any::<u64>(), index in 0usize..1_000_000) {
        let cfg = CampaignConfig { seed, ..CampaignConfig::default() };
        let (inst, pairs) = random_instance(&cfg, index);
        let report = check_prop1(&inst, &pairs).unwrap();
        prop_assert!(report.regret_rmb >= -1e-12);
        prop_assert!(report.regret_rmb <= 2.0 * report.errors.eps_r + 2.0 * report.errors.eps_s + 1e-12);
        prop_assert!(report.holds && report.chain_holds());
    }

    #[test]
    fn config_text_round_trips(
        n in 1usize..500,
        m in proptest::collection::vec(0usize..5000, 1..4),
        beta in 0.0f64..2.0,
        seeds in proptest::collection::vec(0u64..100_000, 1..12),
        neural in any::<bool>(),
        dpo_only in any::<bool>(),
    ) {
        let env = if neural { EnvChoice::Neural } else { EnvChoice::LinearFlipped };
        let cfg = ExperimentConfig {
            n,
            m,
            beta,
            seeds,
            methods: if dpo_only { vec![Method::Dpo] } else { Method::ALL.to_vec() },
            ..ExperimentConfig::defaults(env)
        };
        let back = ExperimentConfig::parse(&cfg.to_config_text(), &[]).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
