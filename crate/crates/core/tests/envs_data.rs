use std::f64::consts::PI;

use prefopt::data::{ActionId, State};
use prefopt::envs::{Env, FeatureMap, LinearBanditEnv, NeuralBanditEnv, PolicyFeatureMode};
use prefopt::eval::EvalSet;
use prefopt::math::sigmoid;
use prefopt::policy::Policy;
use prefopt::rng::{make_streams, RngStream, StreamLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear() -> Env {
    Env::Linear(LinearBanditEnv::new(PolicyFeatureMode::Matched))
}

/// Linear true reward written out directly from its definition.
fn r_linear(s: f64, a: usize) -> f64 {
    let c = (a + 1) as f64;
    c * (PI * s).cos() + 2.0 * (PI * s).sin() / c
}

fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn midpoint_states(n: usize) -> Vec<State> {
    (0..n).map(|i| State::scalar((i as f64 + 0.5) / n as f64)).collect()
}

#[test]
fn streams_match_raw_chacha() {
    for (label, id) in [
        (StreamLabel::EnvInit, 1),
        (StreamLabel::DataCollection, 2),
        (StreamLabel::ModelInit, 3),
        (StreamLabel::Training, 4),
        (StreamLabel::Evaluation, 5),
    ] {
        let mut ours = RngStream::new(2021, label);
        let mut raw = ChaCha8Rng::seed_from_u64(2021);
        raw.set_stream(id);
        for _ in 0..64 {
            assert_eq!(ours.uniform().to_bits(), raw.gen::<f64>().to_bits());
        }
    }
}

#[test]
fn streams_are_distinct_and_reproducible() {
    let first: Vec<f64> = make_streams(7).values_mut().map(|s| s.uniform()).collect();
    let again: Vec<f64> = make_streams(7).values_mut().map(|s| s.uniform()).collect();
    assert_eq!(first, again);
    for i in 0..first.len() {
        for j in i + 1..first.len() {
            assert_ne!(first[i], first[j]);
        }
    }
    // consuming one stream never moves another
    let mut a = make_streams(7);
    for _ in 0..1000 {
        a.get_mut(&StreamLabel::DataCollection).unwrap().uniform();
    }
    let eval = a.get_mut(&StreamLabel::Evaluation).unwrap().uniform();
    assert_eq!(eval, RngStream::new(7, StreamLabel::Evaluation).uniform());
}

#[test]
fn linear_uniform_policy_value_matches_integral() {
    // E_s mean_a r = (1/4) sum_a 2 (2/pi) / (a+1) = 25 / (12 pi)
    let exact = 25.0 / (12.0 * PI);
    let quad = simpson(|s| (0..4).map(|a| r_linear(s, a)).sum::<f64>() / 4.0, 2000);
    assert!((quad - exact).abs() < 1e-10);

    let set = EvalSet::from_states(&linear(), midpoint_states(20_000)).unwrap();
    let uniform = Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap();
    assert!((set.policy_value(&uniform).unwrap() - exact).abs() < 1e-8);
}

#[test]
fn linear_optimal_value_matches_quadrature() {
    let best = |s: f64| (0..4).map(|a| r_linear(s, a)).fold(f64::NEG_INFINITY, f64::max);
    let quad = simpson(best, 200_000);
    let grid = EvalSet::from_states(&linear(), midpoint_states(200_000)).unwrap();
    assert!((grid.optimal_value() - quad).abs() < 1e-7, "{} vs {quad}", grid.optimal_value());

    let mut rng = RngStream::new(3, StreamLabel::Evaluation);
    let sampled = EvalSet::sample(&linear(), 200_000, &mut rng).unwrap();
    assert!((sampled.optimal_value() - quad).abs() < 5e-3);
}

#[test]
fn linear_reward_table_matches_definition() {
    let env = linear();
    let states = midpoint_states(37);
    let table = env.reward_table(&states).unwrap();
    for (i, s) in states.iter().enumerate() {
        for a in 0..4 {
            let direct = r_linear(s.coords()[0], a);
            assert!((table[[i, a]] - direct).abs() < 1e-12);
            assert_eq!(env.true_reward(s, ActionId(a)).unwrap(), table[[i, a]]);
        }
    }
}

#[test]
fn neural_states_are_uniform_on_cube() {
    let env = Env::Neural(NeuralBanditEnv::new(&mut RngStream::new(1, StreamLabel::EnvInit), 1.0));
    let mut rng = RngStream::new(1, StreamLabel::DataCollection);
    let draws: Vec<f64> = (0..4000).flat_map(|_| env.sample_state(&mut rng).coords().to_vec()).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0 / 3.0).abs() < 0.02, "variance {var}");
    assert!(draws.iter().all(|x| (-1.0..=1.0).contains(x)));
}

#[test]
fn neural_scale_multiplies_output() {
    let base = Env::Neural(NeuralBanditEnv::new(&mut RngStream::new(5, StreamLabel::EnvInit), 1.0));
    let scaled = Env::Neural(NeuralBanditEnv::new(&mut RngStream::new(5, StreamLabel::EnvInit), 4.0));
    let mut rng = RngStream::new(5, StreamLabel::Evaluation);
    let states: Vec<State> = (0..20).map(|_| base.sample_state(&mut rng)).collect();
    let a = base.reward_table(&states).unwrap();
    let b = scaled.reward_table(&states).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((4.0 * x - y).abs() < 1e-12);
    }
}

#[test]
fn preference_labels_follow_bradley_terry() {
    let env = linear();
    let s = State::scalar(0.3);
    let (a, b) = (ActionId(0), ActionId(3));
    let p = sigmoid(r_linear(0.3, 0) - r_linear(0.3, 3));
    let mut rng = RngStream::new(11, StreamLabel::DataCollection);
    let trials = 100_000;
    let wins = (0..trials)
        .filter(|_| env.label_pair(&s, a, b, &mut rng).unwrap().winner == a)
        .count();
    let rate = wins as f64 / trials as f64;
    assert!((rate - p).abs() < 0.005, "rate {rate} vs {p}");
}

#[test]
fn collected_pairs_are_distinct_and_cover_actions() {
    let env = linear();
    let mut rng = RngStream::new(2, StreamLabel::DataCollection);
    let d = env.collect_preferences(4000, &mut rng).unwrap();
    assert_eq!(d.n(), 4000);
    let mut counts = [0usize; 4];
    for t in d.triples() {
        assert_ne!(t.winner, t.loser);
        counts[t.winner.0] += 1;
        counts[t.loser.0] += 1;
    }
    // each action appears in half the pairs
    for c in counts {
        assert!((c as f64 / 4000.0 - 0.5).abs() < 0.04, "{counts:?}");
    }
    assert!(env.collect_preferences(0, &mut rng).is_err());
}

#[test]
fn sigmoid_reference_point() {
    assert!((sigmoid(3.0) - 0.952_574_126_822_433_4).abs() < 1e-15);
}

#[test]
fn env_rejects_bad_inputs() {
    let env = linear();
    assert!(env.true_reward(&State::scalar(0.5), ActionId(4)).is_err());
    assert!(env.true_reward(&State::new(vec![0.1, 0.2]).unwrap(), ActionId(0)).is_err());
}
