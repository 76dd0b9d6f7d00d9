use covshift::data::*;
use covshift::divergence::{DivergenceId, DivergenceSpec};
use covshift::funclass::FunctionClassConfig;
use covshift::ratio::{empirical_mse, fit_ddr};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args[1].parse().unwrap();
    let w: usize = args[2].parse().unwrap();
    let depth: usize = args[3].parse().unwrap();
    let epochs: usize = args[4].parse().unwrap();
    let seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let cv: bool = args.get(6).map(|s| s == "cv").unwrap_or(false);
    let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
    let oracle = RatioOracle::S1Beta { d: 5 };
    let mut mses = Vec::new();
    let t0 = std::time::Instant::now();
    for seed in 0..seeds {
        let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M2, n, 5, 900 + seed);
        let ds = scenario.generate().unwrap();
        let mut cfg = FunctionClassConfig::mlp_default();
        cfg.degree_or_width_candidates = if cv { vec![16, 32] } else { vec![w] };
        cfg.depth_candidates = if cv { vec![1, 2] } else { vec![depth] };
        cfg.optimizer.max_epochs = epochs;
        let model = fit_ddr(&ds, &spec, &cfg, &mut stream_rng(17, seed)).unwrap();
        // Table metric: MSE over source rows.
        let mse = empirical_mse(&model, &oracle, ds.source_x()).unwrap();
        mses.push(mse);
    }
    let per = t0.elapsed().as_secs_f64() / seeds as f64;
    mses.sort_by(f64::total_cmp);
    let shown: Vec<String> = mses.iter().map(|e| format!("{e:.3}")).collect();
    println!("n={n} w={w} depth={depth} ep={epochs} cv={cv}: mse={shown:?} t/fit={per:.1}s");
}
