use midl_core::ensemble::{train_ensemble, ModelConfig};
use midl_core::nn::gaussian_kl;
use midl_core::toy::{generate_toy_dataset, toy_mean_sigma, toy_step, ToyMdpSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn main() {
    let ds = generate_toy_dataset(&ToyMdpSpec::default(), 0);
    let t = Instant::now();
    let cfg = ModelConfig { epochs: std::env::var("EP").map(|v| v.parse().unwrap()).unwrap_or(1000), ..ModelConfig::default() };
    let ens = train_ensemble(&ds, &cfg, 42).unwrap();
    println!("7-member ensemble, {} epochs", cfg.epochs); println!("time: {:.1} s", t.elapsed().as_secs_f64());

    // band-averaged NLL on fresh true transitions and analytic KL to truth
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut band = |lo: f64, hi: f64| -> (f64, f64) {
        let mut nll_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut n = 0.0;
        for k in 0..400 {
            let a = lo + (hi - lo) * (k as f64 + 0.5) / 400.0;
            for sign in [-1.0, 1.0] {
                let a = a * sign;
                let s = 0.5;
                let tr = toy_step(s, a, &mut rng).unwrap();
                nll_sum += ens.elite_mean_nll(&[tr]);
                let (tm, ts) = toy_mean_sigma(a).unwrap();
                let g = ens.elite_gaussians(ndarray::array![s].view(), ndarray::array![a].view()).unwrap();
                let kl: f64 = g.iter().map(|(m, sd)| gaussian_kl(m[0], sd[0], tm, ts)).sum::<f64>() / g.len() as f64;
                kl_sum += kl;
                n += 1.0;
            }
        }
        (nll_sum / n, kl_sum / n)
    };
    let (nll_in, kl_in) = band(0.0, 0.35);
    let (nll_out, kl_out) = band(0.7, 1.0);
    println!("in-dist  |a|<=0.35: nll {nll_in:.3} kl {kl_in:.3}");
    println!("ood      |a|>=0.7 : nll {nll_out:.3} kl {kl_out:.3}");
    println!("nll factor {:.2}, kl factor {:.2}", nll_out / nll_in, kl_out / kl_in);
    // elite spread structure
    for &a in &[0.0, 0.9_f64] {
        let g = ens.elite_gaussians(ndarray::array![0.0].view(), ndarray::array![a].view()).unwrap();
        let means: Vec<f64> = g.iter().map(|(m, _)| m[0]).collect();
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        let spread = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt();
        println!("a={a}: spread {spread:.4}");
    }
}
