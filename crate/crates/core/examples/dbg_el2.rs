use covshift::conddens::{self, CondDensityModel};
use covshift::data::*;
use covshift::moments::*;
use covshift::ratio::RatioModel;

fn pseudo_log(v: f64, vstar: f64) -> (f64, f64, f64) {
    if v >= vstar { (v.ln(), v.recip(), -(v*v).recip()) }
    else { let z = v/vstar; (vstar.ln() - 1.5 + 2.0*z - z*z/2.0, (2.0 - z)/vstar, -(vstar*vstar).recip()) }
}

fn main() {
    let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M2, 160, 2, 0);
    let mut rng = stream_rng(11, 0);
    let ds = scenario.generate_with(&mut rng).unwrap();
    let r_hat = RatioModel::from_oracle(RatioOracle::for_setting(CovariateSetting::S1, 2));
    let cde = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
    let pooled = ds.pooled_x();
    let imps = conddens::impute(&cde, pooled.view(), 50, &mut rng).unwrap();
    let g = EstimatingFunction::mean();
    let t = 0.3;
    let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &[t]).unwrap();
    let rows: Vec<f64> = mm.values.column(0).to_vec();
    let n = rows.len();
    let vstar = 1.0 / n as f64;
    let eval = |lam: f64| -> f64 { rows.iter().map(|&m| pseudo_log(1.0 + lam*m, vstar).0).sum() };
    let mut lambda = 0.0f64;
    let mut objective = eval(lambda);
    for iter in 0..20 {
        let mut grad = 0.0; let mut hess = 0.0;
        for &m in &rows {
            let (_, d1, d2) = pseudo_log(1.0 + lambda*m, vstar);
            grad += m*d1; hess += m*m*d2;
        }
        println!("iter {iter}: lambda={lambda:.6} obj={objective:.9} grad={grad:.3e} hess={hess:.3e}");
        if grad.abs() < 1e-9 { println!("converged"); break; }
        let step = grad / (-hess);
        let mut alpha = 1.0; let mut improved = false;
        for ls in 0..60 {
            let cand = lambda + alpha*step;
            let cobj = eval(cand);
            if cobj > objective { lambda = cand; objective = cobj; improved = true;
                if ls > 0 { println!("  backtracked {ls} times"); }
                break; }
            alpha /= 2.0;
        }
        if !improved { println!("  NO IMPROVEMENT: step={step:.3e}"); break; }
    }
}
