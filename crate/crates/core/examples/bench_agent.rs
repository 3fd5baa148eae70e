use midl_core::agent::{concat_sa, train_iteration, AgentBundle, AgentConfig};
use midl_core::ensemble::{train_ensemble, ModelConfig};
use midl_core::nn::gaussian_kl;
use midl_core::ratio::{sampling_weights, spearman, RatioConfig};
use midl_core::toy::{generate_toy_dataset, toy_mean_sigma, ToyMdpSpec};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn env_f64(k: &str, d: f64) -> f64 { std::env::var(k).map(|v| v.parse().unwrap()).unwrap_or(d) }
fn env_usize(k: &str, d: usize) -> usize { std::env::var(k).map(|v| v.parse().unwrap()).unwrap_or(d) }

fn main() {
    let seed: u64 = env_f64("SEED", 0.0) as u64;
    let ds = generate_toy_dataset(&ToyMdpSpec::default(), seed);
    let ens = train_ensemble(&ds, &ModelConfig::default(), seed ^ 0xabcdef).unwrap();
    let acfg = AgentConfig {
        alpha_lr: env_f64("ALR", 3e-3),
        discriminator_steps: env_usize("DSTEPS", 800),
        rollout_period: env_usize("RP", 125),
        penalty_state_samples: env_usize("PSS", 48),
        lambda: env_f64("LAMBDA", 5.0),
        ..AgentConfig::default()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
    let mut bundle = AgentBundle::new(1, vec![-1.0], vec![1.0], &acfg, &RatioConfig::default(), &mut rng);

    // criterion-3-style probe on the initial random-policy buffer
    train_iteration(&mut bundle, &ds, &ens, &acfg, &mut rng).unwrap();
    let probe = |bundle: &AgentBundle, rng: &mut ChaCha12Rng| -> f64 {
        let idx = bundle.buffer.sample_indices(1000, rng);
        let states = Array2::from_shape_fn((1000, 1), |(r, _)| bundle.buffer.get(idx[r]).transition.state[0]);
        let actions = Array2::from_shape_fn((1000, 1), |(r, _)| bundle.buffer.get(idx[r]).transition.action[0].clamp(-1.0, 1.0));
        let w = sampling_weights(&bundle.ratio.pair, &ens, states.view(), actions.view(), 10, acfg.error_mode, rng).unwrap();
        let true_kl: Vec<f64> = (0..1000).map(|r| {
            let (tm, ts) = toy_mean_sigma(actions[[r, 0]]).unwrap();
            let g = ens.elite_gaussians(states.row(r), actions.row(r)).unwrap();
            g.iter().map(|(m, sd)| gaussian_kl(m[0], sd[0], tm, ts)).sum::<f64>() / g.len() as f64
        }).collect();
        spearman(&w.omega, &true_kl)
    };
    println!("spearman after first refresh: {:.3}", probe(&bundle, &mut rng));

    let curve = |bundle: &AgentBundle| -> (f64, Vec<f64>) {
        let n = 401;
        let mut grid = Array2::zeros((n, 1));
        for k in 0..n { grid[[k, 0]] = -1.0 + 2.0 * k as f64 / (n - 1) as f64; }
        let q = bundle.critics.min_q(concat_sa(Array2::zeros((n, 1)).view(), grid.view()).view());
        let mut best = 0;
        for k in 0..n { if q[k] > q[best] { best = k; } }
        (grid[[best, 0]], [0usize, 100, 170, 200, 230, 300, 400].iter().map(|&k| q[k]).collect())
    };
    for i in 1..3000u64 {
        train_iteration(&mut bundle, &ds, &ens, &acfg, &mut rng).unwrap();
        if (i + 1) % 1000 == 0 {
            let (astar, qs) = curve(&bundle);
            let s = bundle.actor.mean_actions(Array2::zeros((1, 1)).view())[[0, 0]];
            println!("iter {}: a*={astar:+.3} mean-act {s:+.3} q {:?}", i + 1,
                qs.iter().map(|q| (q * 10.0).round() / 10.0).collect::<Vec<_>>());
        }
    }
    let (astar, _) = curve(&bundle);
    let s = bundle.actor.sample_batch(Array2::zeros((2048, 1)).view(), &mut rng);
    println!("FINAL a*={astar:+.4} pass={} entropy {:.3} alpha {:.4} spearman-late {:.3}",
        astar.abs() <= 0.15, -s.log_probs.sum() / 2048.0, bundle.entropy.alpha(), probe(&bundle, &mut rng));
}
