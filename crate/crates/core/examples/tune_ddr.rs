use covshift::data::{stream_rng, Dataset, RatioOracle};
use covshift::divergence::{DivergenceId, DivergenceSpec};
use covshift::funclass::FunctionClassConfig;
use covshift::ratio::{empirical_l2_error, fit_ddr};
use ndarray::Array2;
use rand::Rng;

fn beta21_dataset(n: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let sx = Array2::from_shape_fn((n, 1), |_| rng.gen::<f64>());
    let tx = Array2::from_shape_fn((m, 1), |_| rng.gen::<f64>().sqrt());
    let sy = ndarray::Array1::from_shape_fn(n, |_| rng.gen::<f64>());
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
    let mut errs = Vec::new();
    let t0 = std::time::Instant::now();
    for seed in 0..seeds {
        let ds = beta21_dataset(5000, 2500, 100 + seed);
        let mut cfg = FunctionClassConfig::mlp_default();
        cfg.degree_or_width_candidates = vec![w];
        cfg.depth_candidates = vec![depth];
        cfg.optimizer.max_epochs = epochs;
        cfg.optimizer.learning_rate = lr;
        let model = fit_ddr(&ds, &spec, &cfg, &mut stream_rng(7, seed)).unwrap();
        let e = empirical_l2_error(&model, &RatioOracle::LinearBeta21, ds.pooled_x().view()).unwrap();
        errs.push(e);
    }
    let per_fit = t0.elapsed().as_secs_f64() / seeds as f64;
    errs.sort_by(f64::total_cmp);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3}")).collect();
    println!("w={w} depth={depth} ep={epochs} lr={lr}: errs={shown:?} time/fit={per_fit:.2}s");
}
