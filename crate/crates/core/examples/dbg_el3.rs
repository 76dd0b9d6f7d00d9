use covshift::conddens::{self, CondDensityModel};
use covshift::data::*;
use covshift::el::*;
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
    let cfg = ElConfig::default();
    let t = 0.3;
    let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &[t]).unwrap();
    let sol = solve_lambda(mm.values.view(), &cfg).unwrap();
    println!("solver: lambda={:.15} converged={} iters={}", sol.lambda[0], sol.converged, sol.iterations);
    let rows: Vec<f64> = mm.values.column(0).to_vec();
    let vstar = 1.0 / rows.len() as f64;
    // gradient and objective at solver lambda and nearby
    for dl in [-1e-7f64, 0.0, 1e-7] {
        let lam = sol.lambda[0] + dl;
        let grad: f64 = rows.iter().map(|&m| m * pseudo_log(1.0 + lam*m, vstar).1).sum();
        let obj: f64 = rows.iter().map(|&m| pseudo_log(1.0 + lam*m, vstar).0).sum();
        println!("lam={lam:.10}: grad={grad:.6e} obj={obj:.15}");
    }
}
