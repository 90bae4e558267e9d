//! Invariants that must hold for arbitrary inputs.

use proptest::prelude::*;
use rand::Rng;

use srlf::agent::{self, AgentParams};
use srlf::autodiff::Graph;
use srlf::config::{PolicyInput, ReturnMode, RunConfig, TrainConfig};
use srlf::data::{self, SynthConfig};
use srlf::env::{self, EnvParams, Sample};
use srlf::rng;
use srlf::tensor::Tensor;
use srlf::text::{self, PAD};

fn cfg() -> TrainConfig {
    TrainConfig::tiny()
}

fn random_matrix(seed: u64, rows: usize, cols: usize, scale: f64) -> Tensor {
    let mut r = rng::stream(seed, 99);
    let data = (0..rows * cols).map(|_| r.gen_range(-scale..scale)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// A sample over a vocabulary of `vocab` ids with the given real slots.
fn random_sample(seed: u64, cfg: &TrainConfig, vocab: usize, mask: &[bool]) -> Sample {
    let mut r = rng::stream(seed, 98);
    let mut text = |real: bool| -> Vec<usize> {
        if real {
            (0..cfg.max_len).map(|_| r.gen_range(0..vocab)).collect()
        } else {
            vec![PAD; cfg.max_len]
        }
    };
    let source = text(true);
    let comments = mask.iter().map(|&m| text(m)).collect();
    let stances = mask.iter().map(|&m| if m { r.gen_range(0..4) } else { 0 }).collect();
    Sample {
        source,
        comments,
        stances,
        mask: mask.to_vec(),
        label: r.gen_range(0..4),
        corrupted: mask.iter().map(|&m| m.then(|| r.gen_bool(0.5))).collect(),
    }
}

fn models(seed: u64, vocab: usize) -> (TrainConfig, EnvParams, AgentParams) {
    let cfg = cfg();
    let mut r = rng::stream(seed, rng::INIT);
    let env = EnvParams::init(&cfg, vocab, None, &mut r);
    let agent = AgentParams::init(&cfg, &mut r);
    (cfg, env, agent)
}

fn mask_strategy(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn removing_every_stance_is_the_identity(seed in any::<u64>(), mask in mask_strategy(5)) {
        let c = random_matrix(seed, 5, 6, 2.0);
        let table = random_matrix(seed ^ 1, 4, 6, 1.0);
        let stances: Vec<usize> = (0..5).map(|n| (seed as usize + n) % 4).collect();
        let out = env::apply_actions_values(&c, &table, &stances, &[0; 5], &mask).unwrap();
        prop_assert_eq!(out, c);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..7, scale in 0.1f64..60.0) {
        let mut g = Graph::new();
        let x = g.constant(random_matrix(seed, rows, cols, scale));
        let p = g.softmax_rows(x).unwrap();
        let p = g.value(p);
        for i in 0..rows {
            let row = p.row_slice(i);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_row_never_receives_gradient(seed in any::<u64>(), ids in prop::collection::vec(0usize..6, 1..12)) {
        let mut g = Graph::new();
        let table = g.param(random_matrix(seed, 6, 4, 1.0));
        let x = g.embed(table, &ids).unwrap();
        let weights: Vec<f64> = (0..ids.len() * 4).map(|i| 1.0 + i as f64).collect();
        let loss = g.weighted_sum(x, &weights).unwrap();
        let grads = g.backward(loss).unwrap();
        let gt = grads.get_or_zeros(table, 24);
        prop_assert!(gt[..4].iter().all(|&v| v == 0.0));
        // Every other row collects exactly the weights at its positions.
        for id in 1..6 {
            for j in 0..4 {
                let expected: f64 = ids.iter().enumerate().filter(|(_, &t)| t == id).map(|(i, _)| weights[i * 4 + j]).sum();
                prop_assert_eq!(gt[id * 4 + j], expected);
            }
        }
    }

    #[test]
    fn all_pad_text_encodes_to_zero(seed in any::<u64>()) {
        let (cfg, env, _) = models(seed, 12);
        let mut g = Graph::new();
        let vars = env.register(&mut g, false);
        let v = text::encode_text(&mut g, vars.embedding, &vars.kernels, &vec![PAD; cfg.max_len]).unwrap();
        prop_assert!(g.value(v).data().iter().all(|&x| x == 0.0));
        prop_assert_eq!(g.value(v).cols(), cfg.d);
    }

    #[test]
    fn padding_slots_do_not_influence_either_model(seed in any::<u64>(), mask in mask_strategy(3)) {
        let (cfg, env, agent) = models(seed, 12);
        let sample = random_sample(seed, &cfg, 12, &mask);
        let mut other = random_sample(seed.wrapping_add(1), &cfg, 12, &mask);
        // Same real content, different garbage in the padding slots.
        other.source = sample.source.clone();
        other.label = sample.label;
        for (n, &real) in mask.iter().enumerate() {
            if real {
                other.comments[n] = sample.comments[n].clone();
                other.stances[n] = sample.stances[n];
            } else {
                other.comments[n] = vec![(seed % 11 + 1) as usize; cfg.max_len];
                other.stances[n] = 3;
            }
        }
        let actions = sample.retain_all();
        let (t, c) = env.encode_values(&sample).unwrap();
        let (t2, c2) = env.encode_values(&other).unwrap();
        prop_assert_eq!(&t, &t2);
        prop_assert_eq!(&c, &c2);
        prop_assert_eq!(env.probabilities(&t, &c, &sample, &actions).unwrap(), env.probabilities(&t2, &c2, &other, &actions).unwrap());

        let s1 = agent::policy_state(PolicyInput::Candidate, &c, &env.stance, &sample, None).unwrap();
        let s2 = agent::policy_state(PolicyInput::Candidate, &c2, &env.stance, &other, None).unwrap();
        let p1 = agent.probabilities(&t, &s1, &sample.mask).unwrap();
        let p2 = agent.probabilities(&t2, &s2, &other.mask).unwrap();
        for n in (0..3).filter(|&n| mask[n]) {
            prop_assert_eq!(p1.row_slice(n), p2.row_slice(n));
        }
    }

    #[test]
    fn attention_ignores_the_order_of_comment_slots(seed in any::<u64>(), mask in mask_strategy(4), rot in 0usize..4) {
        let (_, env, _) = models(seed, 12);
        let c = random_matrix(seed, 4, 6, 1.0);
        let t = random_matrix(seed ^ 7, 1, 6, 1.0);
        let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
        let fuse = |rows: &[usize]| {
            let mut g = Graph::new();
            let vars = env.register(&mut g, false);
            let tv = g.constant(t.clone());
            let cv = g.constant(c.clone());
            let cp = g.gather_rows(cv, rows).unwrap();
            let m: Vec<bool> = rows.iter().map(|&i| mask[i]).collect();
            let (fused, _) = env::attend(&mut g, &vars, tv, cp, &m).unwrap();
            g.value(fused).clone()
        };
        let a = fuse(&[0, 1, 2, 3]);
        let b = fuse(&perm);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn returns_match_their_direct_sums(rewards in prop::collection::vec(-0.25f64..0.75, 1..30), gamma in 0.0f64..=1.0) {
        let k_max = rewards.len();
        let literal = agent::compute_returns(&rewards, gamma, ReturnMode::Literal);
        let to_go = agent::compute_returns(&rewards, gamma, ReturnMode::ReturnToGo);
        for k in 0..k_max {
            let weight: f64 = (0..k_max - k).map(|j| gamma.powi(j as i32)).sum();
            prop_assert!((literal[k] - rewards[k] * weight).abs() < 1e-12);
            let direct: f64 = (k..k_max).map(|j| gamma.powi((j - k) as i32) * rewards[j]).sum();
            prop_assert!((to_go[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rewards_stay_in_range(seed in any::<u64>(), mask in mask_strategy(3), bits in prop::collection::vec(any::<bool>(), 3)) {
        let (cfg, env, _) = models(seed, 12);
        let sample = random_sample(seed, &cfg, 12, &mask);
        let actions: Vec<u8> = (0..3).map(|n| u8::from(mask[n] && bits[n])).collect();
        let (t, c) = env.encode_values(&sample).unwrap();
        let p = env.probabilities(&t, &c, &sample, &actions).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = env::reward(&p, sample.label);
        prop_assert!(r > -0.25 && r <= 0.75);
    }

    #[test]
    fn sampled_actions_never_retain_padding(seed in any::<u64>(), mask in mask_strategy(3)) {
        let (cfg, env, agent) = models(seed, 12);
        let sample = random_sample(seed, &cfg, 12, &mask);
        let (t, c) = env.encode_values(&sample).unwrap();
        let state = agent::policy_state(PolicyInput::Candidate, &c, &env.stance, &sample, None).unwrap();
        let p = agent.probabilities(&t, &state, &sample.mask).unwrap();
        let mut r = rng::stream(seed, rng::AGENT);
        for _ in 0..8 {
            let a = agent::sample_actions(&p, &sample.mask, &mut r);
            prop_assert!(a.iter().zip(&mask).all(|(&x, &m)| x <= 1 && (m || x == 0)));
        }
        let greedy = agent::greedy_actions(&p, &sample.mask);
        prop_assert!(greedy.iter().zip(&mask).all(|(&x, &m)| m || x == 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_partitions_every_corpus(threads in 40usize..160, seed in any::<u64>()) {
        let corpus = data::generate(&SynthConfig { threads, seed: seed % 1000, ..SynthConfig::default() }).unwrap();
        let s = data::split(&corpus, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..threads).collect::<Vec<_>>());
        prop_assert_eq!(&s, &data::split(&corpus, seed).unwrap());
    }

    #[test]
    fn config_text_round_trips(gamma in 0.0f64..=1.0, lambda in 0.0f64..1.0, epochs in 1usize..50, seed in any::<u64>()) {
        let mut c = RunConfig::default();
        c.train.gamma = gamma;
        c.train.lambda = lambda;
        c.train.epochs = epochs;
        c.train.seed = seed;
        prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}
