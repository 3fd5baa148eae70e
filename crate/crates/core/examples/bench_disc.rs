use midl_core::agent::{Actor, AgentConfig};
use midl_core::dataset::Transition;
use midl_core::ensemble::{rollout, train_ensemble, GaussianEnsemble, ModelBuffer, ModelConfig};
use midl_core::nn::gaussian_kl;
use midl_core::ratio::{sampling_weights, spearman, ErrorMode, RatioConfig, RatioEstimator};
use midl_core::toy::{generate_toy_dataset, toy_mean_sigma, ToyMdpSpec};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let ds = generate_toy_dataset(&ToyMdpSpec::default(), 0);
    let model_path = std::path::Path::new("/tmp/bench_ens.ckpt");
    let ens = if model_path.exists() {
        GaussianEnsemble::load(model_path).unwrap()
    } else {
        let e = train_ensemble(&ds, &ModelConfig::default(), 42).unwrap();
        e.save(model_path).unwrap();
        e
    };
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let actor = Actor::new(1, vec![-1.0], vec![1.0], 256, 2, &mut rng);
    let mut buffer = ModelBuffer::new(50_000);
    rollout(&ens, |s, r| actor.sample_batch(s, r).actions, &ds, AgentConfig::default().horizon, 1000, &mut buffer, &mut rng).unwrap();
    let model_view: Vec<Transition> = buffer.iter().map(|t| t.transition.clone()).collect();
    println!("buffer {} transitions", model_view.len());

    for width in [256usize] {
        for steps in [std::env::var("STEPS").map(|v| v.parse().unwrap()).unwrap_or(200usize)] {
            let sweep_seed: u64 = std::env::var("DSEED").map(|v| v.parse().unwrap()).unwrap_or(7);
            let mut rng = ChaCha12Rng::seed_from_u64(sweep_seed);
            let cfg = RatioConfig { hidden_units: width, batch_size: std::env::var("DBATCH").map(|v| v.parse().unwrap()).unwrap_or(256), ..RatioConfig::default() };
            let mut est = RatioEstimator::new(1, 1, &cfg, &mut rng);
            est.train(ds.transitions(), &model_view, steps, &mut rng).unwrap();
            for m in [10usize, 30] {
                let idx = buffer.sample_indices(1000, &mut rng);
                let states = Array2::from_shape_fn((1000, 1), |(r, _)| buffer.get(idx[r]).transition.state[0]);
                let actions = Array2::from_shape_fn((1000, 1), |(r, _)| buffer.get(idx[r]).transition.action[0].clamp(-1.0, 1.0));
                let w = sampling_weights(&est.pair, &ens, states.view(), actions.view(), m, ErrorMode::Kl, &mut rng).unwrap();
                let true_kl: Vec<f64> = (0..1000).map(|r| {
                    let (tm, ts) = toy_mean_sigma(actions[[r, 0]]).unwrap();
                    let g = ens.elite_gaussians(states.row(r), actions.row(r)).unwrap();
                    g.iter().map(|(mm, sd)| gaussian_kl(mm[0], sd[0], tm, ts)).sum::<f64>() / g.len() as f64
                }).collect();
                let floor = w.g.iter().filter(|&&g| g <= 1e-44).count() as f64 / 1000.0;
                println!("width {width} steps {steps} m {m}: spearman {:.3} g-floor {:.2}",
                    spearman(&w.omega, &true_kl), floor);
            }
        }
    }
}
