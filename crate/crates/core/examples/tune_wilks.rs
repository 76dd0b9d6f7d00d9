use covshift::conddens;
use covshift::data::*;
use covshift::divergence::{DivergenceId, DivergenceSpec};
use covshift::el::*;
use covshift::funclass::FunctionClassConfig;
use covshift::harness::{true_parameter_with_draws};
use covshift::moments::EstimatingFunction;
use covshift::ratio;
use rayon::prelude::*;

fn args_kappa_div() -> usize { std::env::args().nth(8).and_then(|v| v.parse().ok()).unwrap_or(2) }

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args[1].parse().unwrap();
    let reps: u64 = args[2].parse().unwrap();
    let rw: usize = args[3].parse().unwrap();   // ratio width
    let rd: usize = args[4].parse().unwrap();   // ratio depth
    let cw: usize = args[5].parse().unwrap();   // cde width
    let cd: usize = args[6].parse().unwrap();   // cde depth
    let epochs: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1500);

    let g = EstimatingFunction::mean();
    let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M2, n, 5, 0);
    let theta0 = true_parameter_with_draws(&scenario, &g, 4_000_000).unwrap();
    eprintln!("theta0 = {theta0:.5}");
    let spec = DivergenceSpec::<f64>::new(DivergenceId::Kl);
    let el = ElConfig::default();
    let t0 = std::time::Instant::now();
    let rns: Vec<Option<f64>> = (0..reps).into_par_iter().map(|rep| {
        let mut rng = stream_rng(42, rep);
        let ds = scenario.generate_with(&mut rng).unwrap();
        let mut rcfg = FunctionClassConfig::mlp_default();
        rcfg.degree_or_width_candidates = vec![rw];
        rcfg.depth_candidates = vec![rd];
        rcfg.optimizer.max_epochs = epochs;
        let r_hat = match ratio::fit_ddr(&ds, &spec, &rcfg, &mut rng) { Ok(v) => v, Err(_) => return None };
        let mut ccfg = FunctionClassConfig::mlp_default();
        ccfg.degree_or_width_candidates = vec![cw];
        ccfg.depth_candidates = vec![cd];
        ccfg.optimizer.max_epochs = epochs;
        let cde = match conddens::fit_conditional_density(&ds, &spec, &ccfg, None, &mut rng) { Ok(v) => v, Err(_) => return None };
        let kappa = ds.len() / args_kappa_div();
        let pooled = ds.pooled_x();
        let imps = match conddens::impute(&cde, pooled.view(), kappa, &mut rng) { Ok(v) => v, Err(_) => return None };
        let nuis = match Nuisances::from_models(&ds, &r_hat, &imps, &g) { Ok(v) => v, Err(_) => return None };
        let est = match maximize_el(&ds, nuis, &g, &el) { Ok(v) => v, Err(_) => return None };
        est.r_n(theta0).ok()
    }).collect();
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    let ok: Vec<f64> = rns.into_iter().flatten().collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let reject = ok.iter().filter(|&&v| v > 3.841).count() as f64 / ok.len() as f64;
    let mut sorted = ok.clone();
    sorted.sort_by(f64::total_cmp);
    println!("n={n} reps={} ok={} mean_RN={mean:.3} reject={reject:.3} q95={:.2} t/rep={per:.1}s(wall,2cores)",
        reps, ok.len(), sorted[((sorted.len() as f64-1.0)*0.95) as usize]);
}
