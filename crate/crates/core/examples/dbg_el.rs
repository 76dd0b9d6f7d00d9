use covshift::conddens::{self, CondDensityModel};
use covshift::data::*;
use covshift::el::*;
use covshift::moments::*;
use covshift::ratio::RatioModel;

fn main() {
    let scenario = ScenarioConfig::new(CovariateSetting::S1, ResponseModel::M2, 160, 2, 0);
    let mut rng = stream_rng(11, 0);
    let ds = scenario.generate_with(&mut rng).unwrap();
    let oracle = RatioOracle::for_setting(CovariateSetting::S1, 2);
    let r_hat = RatioModel::from_oracle(oracle);
    let cde = CondDensityModel::OracleGaussian { model: ResponseModel::M2 };
    let pooled = ds.pooled_x();
    let imps = conddens::impute(&cde, pooled.view(), 50, &mut rng).unwrap();
    let g = EstimatingFunction::mean();
    let cfg = ElConfig::default();

    // Profile over a grid and report failures
    for k in 0..41 {
        let t = -2.0 + 4.0 * k as f64 / 40.0;
        let mm = orthogonal_moments(&ds, &r_hat, &imps, &g, &[t]).unwrap();
        match solve_lambda(mm.values.view(), &cfg) {
            Ok(sol) => {
                if !sol.converged {
                    let col = mm.values.column(0);
                    let (mn, mx) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a,b), &v| (a.min(v), b.max(v)));
                    println!("theta={t:.2}: STALL iters={} lambda={:?} log_el={} rows min={mn:.4} max={mx:.4}", sol.iterations, sol.lambda, sol.log_el);
                }
            }
            Err(e) => println!("theta={t:.2}: {e}"),
        }
    }
}
