//! Derivative-free scalar and simplex minimizers for the outer parameter
//! search. Objectives may return `+inf` to mark infeasible points.

use crate::scalar::Scalar;

/// Golden-section minimization of a unimodal-ish objective on [a, b].
///
/// Returns the bracketing midpoint and its objective value once the interval
/// shrinks below `tol`.
pub fn golden_section<T: Scalar>(mut f: impl FnMut(T) -> T, a: T, b: T, tol: T) -> (T, T) {
    let phi = T::from_config(0.618_033_988_749_894_9);
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut guard = 0usize;
    while (hi - lo) > tol && guard < 200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
        guard += 1;
    }
    let mid = (lo + hi) / T::from_config(2.0);
    let fm = f(mid);
    // Keep the best of the three probes; the objective may be flat or noisy
    // at the resolution of tol.
    if f1 <= f2 && f1 <= fm {
        (x1, f1)
    } else if f2 <= fm {
        (x2, f2)
    } else {
        (mid, fm)
    }
}

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex minimization from a starting point.
///
/// `step` sets the initial simplex edge per coordinate. Stops when the spread
/// of simplex values falls below `ftol` or `max_iter` is reached.
pub fn nelder_mead<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    start: &[T],
    step: T,
    ftol: T,
    max_iter: usize,
) -> SimplexResult<T> {
    let n = start.len();
    let one = T::one();
    let two = T::from_config(2.0);
    let half = T::from_config(0.5);

    let mut simplex: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if (values[worst] - values[best]).abs() <= ftol
            && values[worst].is_finite()
            && values[best].is_finite()
        {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![T::zero(); n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, vi) in centroid.iter_mut().zip(v.iter()) {
                *c += *vi;
            }
        }
        let inv = one / T::from_usize(n).expect("dimension fits scalar");
        for c in centroid.iter_mut() {
            *c *= inv;
        }

        let reflect: Vec<T> = centroid
            .iter()
            .zip(simplex[worst].iter())
            .map(|(&c, &w)| c + (c - w))
            .collect();
        let f_reflect = f(&reflect);

        if f_reflect < values[order[0]] {
            let expand: Vec<T> = centroid
                .iter()
                .zip(simplex[worst].iter())
                .map(|(&c, &w)| c + two * (c - w))
                .collect();
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let contract: Vec<T> = centroid
                .iter()
                .zip(simplex[worst].iter())
                .map(|(&c, &w)| c + half * (w - c))
                .collect();
            let f_contract = f(&contract);
            if f_contract < values[worst] {
                simplex[worst] = contract;
                values[worst] = f_contract;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for (vi, bi) in v.iter_mut().zip(best_point.iter()) {
                        *vi = *bi + half * (*vi - *bi);
                    }
                    values[idx] = f(v);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    SimplexResult { x: simplex[best].clone(), value: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (x, v) = golden_section(|t: f64| (t - 1.3).powi(2), -4.0, 5.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-6, "x = {x}");
        assert!(v < 1e-10);
    }

    #[test]
    fn golden_section_handles_infeasible_plateau() {
        // +inf outside [0, 2], quadratic inside.
        let f = |t: f64| if (0.0..=2.0).contains(&t) { (t - 0.5).powi(2) } else { f64::INFINITY };
        let (x, _) = golden_section(f, -1.0, 3.0, 1e-9);
        assert!((x - 0.5).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let rosen = |p: &[f64]| {
            let (a, b) = (p[0], p[1]);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let res = nelder_mead(rosen, &[-1.2, 1.0], 0.5, 1e-12, 5000);
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_works_at_f32() {
        let sphere = |p: &[f32]| p.iter().map(|v| v * v).sum::<f32>();
        let res = nelder_mead(sphere, &[2.0f32, -1.5], 0.5, 1e-6, 2000);
        assert!(res.x.iter().all(|v| v.abs() < 1e-2));
    }
}
