use covshift::conddens::{fit_conditional_density, grid_mise};
use covshift::data::{stream_rng, Dataset};
use covshift::divergence::{DivergenceId, DivergenceSpec};
use covshift::funclass::FunctionClassConfig;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_shift_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let sx = Array2::from_shape_fn((n, 1), |_| rng.gen::<f64>());
    let sy = Array1::from_shape_fn(n, |i| {
        let z: f64 = rng.sample(StandardNormal);
        sx[(i, 0)] + z
    });
    let tx = Array2::from_shape_fn((n / 2, 1), |_| rng.gen::<f64>());
    Dataset::new(sx, sy, tx).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let w: usize = args[1].parse().unwrap();
    let depth: usize = args[2].parse().unwrap();
    let epochs: usize = args[3].parse().unwrap();
    let lr: f64 = args[4].parse().unwrap();
    let seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
    let mut means = Vec::new();
    let mut worsts = Vec::new();
    let t0 = std::time::Instant::now();
    for seed in 0..seeds {
        let ds = gaussian_shift_dataset(5000, 500 + seed);
        let mut cfg = FunctionClassConfig::mlp_default();
        cfg.degree_or_width_candidates = vec![w];
        cfg.depth_candidates = vec![depth];
        cfg.optimizer.max_epochs = epochs;
        cfg.optimizer.learning_rate = lr;
        let model = fit_conditional_density(&ds, &spec, &cfg, None, &mut stream_rng(9, seed)).unwrap();
        let mut mises = Vec::new();
        for &xv in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let x = ndarray::arr1(&[xv]);
            let mise = grid_mise(&model, x.view(), |y| {
                let z = y - xv;
                (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }).unwrap();
            mises.push(mise);
        }
        means.push(mises.iter().sum::<f64>() / 5.0);
        worsts.push(mises.iter().cloned().fold(0.0, f64::max));
    }
    let per = t0.elapsed().as_secs_f64() / seeds as f64;
    let fmt = |v: &Vec<f64>| v.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(",");
    println!("w={w} depth={depth} ep={epochs} lr={lr}: mean=[{}] worst=[{}] t/fit={per:.1}s", fmt(&means), fmt(&worsts));
}
