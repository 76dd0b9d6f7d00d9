//! Catalog of phi-divergences and the dual loss pairs driving ratio
//! estimation.
//!
//! Each divergence contributes a pair `(ell1, ell2)` such that the population
//! criterion `L(r) = E_P[ell1(r(X))] - E_Q[ell2(r(X))]` is minimized at the
//! true density ratio `r0 = q0/p0`, and `-L(r0)` (up to the pair's constant
//! offset) equals the divergence between Q and P. The pairs satisfy
//! `ell1'(r) = r * ell2'(r)` for every r in their domain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The four shipped divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceId {
    Kl,
    ReverseKl,
    Pearson,
    Hellinger,
}

impl DivergenceId {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kl" => Ok(DivergenceId::Kl),
            "reverse-kl" => Ok(DivergenceId::ReverseKl),
            "pearson" => Ok(DivergenceId::Pearson),
            "hellinger" => Ok(DivergenceId::Hellinger),
            other => Err(Error::Config(format!(
                "unknown divergence `{other}` (expected kl | reverse-kl | pearson | hellinger)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DivergenceId::Kl => "kl",
            DivergenceId::ReverseKl => "reverse-kl",
            DivergenceId::Pearson => "pearson",
            DivergenceId::Hellinger => "hellinger",
        }
    }
}

/// How a function class parametrizes the ratio.
///
/// `Exp` optimizes h with r = exp(h), enforcing positivity by construction;
/// `Identity` leaves the raw output as r and relies on clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Exp,
}

type LossFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A divergence's loss pair with derivatives and its preferred link.
#[derive(Clone)]
pub struct DivergenceSpec<T> {
    id: Option<DivergenceId>,
    name: String,
    link: Link,
    /// Smallest admissible ratio value (inclusive); `None` means any real.
    domain_min: Option<T>,
    ell1: LossFn<T>,
    ell2: LossFn<T>,
    ell1_deriv: LossFn<T>,
    ell2_deriv: LossFn<T>,
}

impl<T> std::fmt::Debug for DivergenceSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DivergenceSpec")
            .field("name", &self.name)
            .field("link", &self.link)
            .finish()
    }
}

/// Hard floor for losses that blow up at zero (squared Hellinger).
pub const HELLINGER_FLOOR: f64 = 1e-6;

impl<T: Scalar> DivergenceSpec<T> {
    pub fn new(id: DivergenceId) -> Self {
        let one = T::one();
        let half = T::from_config(0.5);
        let two = T::from_config(2.0);
        match id {
            DivergenceId::Kl => Self {
                id: Some(id),
                name: id.name().into(),
                link: Link::Exp,
                domain_min: Some(T::zero()),
                ell1: Arc::new(|r| r),
                ell2: Arc::new(move |r: T| r.ln() + one),
                ell1_deriv: Arc::new(move |_| one),
                ell2_deriv: Arc::new(|r: T| r.recip()),
            },
            DivergenceId::ReverseKl => Self {
                id: Some(id),
                name: id.name().into(),
                link: Link::Exp,
                domain_min: Some(T::zero()),
                ell1: Arc::new(move |r: T| r.ln() + one),
                ell2: Arc::new(|r: T| -r.recip()),
                ell1_deriv: Arc::new(|r: T| r.recip()),
                ell2_deriv: Arc::new(|r: T| (r * r).recip()),
            },
            DivergenceId::Pearson => Self {
                id: Some(id),
                name: id.name().into(),
                link: Link::Identity,
                domain_min: None,
                ell1: Arc::new(move |r: T| r * r - one),
                ell2: Arc::new(move |r: T| two * (r - one)),
                ell1_deriv: Arc::new(move |r: T| two * r),
                ell2_deriv: Arc::new(move |_| two),
            },
            DivergenceId::Hellinger => Self {
                id: Some(id),
                name: id.name().into(),
                link: Link::Exp,
                domain_min: Some(T::from_config(HELLINGER_FLOOR)),
                ell1: Arc::new(move |r: T| r.sqrt() - one),
                ell2: Arc::new(move |r: T| one - r.sqrt().recip()),
                ell1_deriv: Arc::new(move |r: T| half / r.sqrt()),
                ell2_deriv: Arc::new(move |r: T| half / (r * r.sqrt())),
            },
        }
    }

    /// Register a loss pair not in the shipped catalog. The pair must satisfy
    /// `ell1'(r) = r * ell2'(r)` on its domain for the criterion to identify
    /// the density ratio.
    pub fn custom(
        name: impl Into<String>,
        link: Link,
        domain_min: Option<T>,
        ell1: LossFn<T>,
        ell2: LossFn<T>,
        ell1_deriv: LossFn<T>,
        ell2_deriv: LossFn<T>,
    ) -> Self {
        Self { id: None, name: name.into(), link, domain_min, ell1, ell2, ell1_deriv, ell2_deriv }
    }

    pub fn id(&self) -> Option<DivergenceId> {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn link(&self) -> Link {
        self.link
    }

    fn check_domain(&self, r: T) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::Domain(format!("ratio value {r} is not finite")));
        }
        if let Some(min) = self.domain_min {
            // Zero floor means strictly positive (log/reciprocal losses).
            let ok = if min == T::zero() { r > T::zero() } else { r >= min };
            if !ok {
                return Err(Error::Domain(format!(
                    "ratio value {r} outside the domain of the {} losses",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Checked evaluation of the loss pair at a ratio value.
    pub fn losses(&self, r: T) -> Result<(T, T)> {
        self.check_domain(r)?;
        Ok(((self.ell1)(r), (self.ell2)(r)))
    }

    /// Unchecked loss evaluation for hot loops; callers guarantee the domain.
    pub fn ell1(&self, r: T) -> T {
        (self.ell1)(r)
    }

    pub fn ell2(&self, r: T) -> T {
        (self.ell2)(r)
    }

    pub fn ell1_deriv(&self, r: T) -> T {
        (self.ell1_deriv)(r)
    }

    pub fn ell2_deriv(&self, r: T) -> T {
        (self.ell2_deriv)(r)
    }

    /// Smallest ratio value the losses accept, if any.
    pub fn domain_min(&self) -> Option<T> {
        self.domain_min
    }

    /// Constant offset `ell1(1) - ell2(1)` of the pair relative to the exact
    /// conjugate pair; added back when converting an objective value into a
    /// divergence estimate so that P = Q maps to zero.
    pub fn offset_at_one(&self) -> T {
        (self.ell1)(T::one()) - (self.ell2)(T::one())
    }
}

/// Empirical two-sample criterion: mean of `ell1` over ratio values on the
/// source sample minus mean of `ell2` over ratio values on the target sample.
pub fn population_objective<T: Scalar>(
    spec: &DivergenceSpec<T>,
    r_values_source: &[T],
    r_values_target: &[T],
) -> Result<T> {
    if r_values_source.is_empty() || r_values_target.is_empty() {
        return Err(Error::Config("objective needs non-empty samples".into()));
    }
    let mut s1 = T::zero();
    for &r in r_values_source {
        spec.losses(r)?;
        s1 += spec.ell1(r);
    }
    let mut s2 = T::zero();
    for &r in r_values_target {
        spec.losses(r)?;
        s2 += spec.ell2(r);
    }
    let n = T::from_usize(r_values_source.len()).expect("sample size fits scalar");
    let m = T::from_usize(r_values_target.len()).expect("sample size fits scalar");
    Ok(s1 / n - s2 / m)
}

/// Divergence estimate implied by a fitted objective value: the negated
/// objective, shifted by the pair's constant so identical populations give 0.
pub fn divergence_estimate<T: Scalar>(spec: &DivergenceSpec<T>, fitted_objective_value: T) -> T {
    spec.offset_at_one() - fitted_objective_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_specs() -> Vec<DivergenceSpec<f64>> {
        [DivergenceId::Kl, DivergenceId::ReverseKl, DivergenceId::Pearson, DivergenceId::Hellinger]
            .into_iter()
            .map(DivergenceSpec::new)
            .collect()
    }

    #[test]
    fn loss_values_match_catalog() {
        let kl = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        assert_eq!(kl.losses(1.0).unwrap(), (1.0, 1.0));
        let pearson = DivergenceSpec::<f64>::new(DivergenceId::Pearson);
        assert_eq!(pearson.losses(1.0).unwrap(), (0.0, 0.0));
        let hellinger = DivergenceSpec::<f64>::new(DivergenceId::Hellinger);
        let (l1, l2) = hellinger.losses(4.0).unwrap();
        assert_abs_diff_eq!(l1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l2, 0.5, epsilon = 1e-15);
        let rkl = DivergenceSpec::<f64>::new(DivergenceId::ReverseKl);
        assert_eq!(rkl.losses(1.0).unwrap(), (1.0, -1.0));
    }

    #[test]
    fn kl_rejects_nonpositive_ratio() {
        let kl = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        assert!(matches!(kl.losses(0.0), Err(Error::Domain(_))));
        assert!(matches!(kl.losses(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hellinger_floor_is_enforced() {
        let h = DivergenceSpec::<f64>::new(DivergenceId::Hellinger);
        assert!(h.losses(1e-7).is_err());
        assert!(h.losses(1e-6).is_ok());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for spec in all_specs() {
            let mut r: f64 = 0.1;
            while r <= 10.0 {
                let h = 1e-6 * r.max(1.0);
                let fd1 = (spec.ell1(r + h) - spec.ell1(r - h)) / (2.0 * h);
                let fd2 = (spec.ell2(r + h) - spec.ell2(r - h)) / (2.0 * h);
                let d1 = spec.ell1_deriv(r);
                let d2 = spec.ell2_deriv(r);
                assert!(
                    ((d1 - fd1) / fd1.abs().max(1e-8)).abs() < 1e-5,
                    "{} ell1' at {r}: {d1} vs {fd1}",
                    spec.name()
                );
                assert!(
                    ((d2 - fd2) / fd2.abs().max(1e-8)).abs() < 1e-5,
                    "{} ell2' at {r}: {d2} vs {fd2}",
                    spec.name()
                );
                r += 0.17;
            }
        }
    }

    #[test]
    fn first_order_relation_holds() {
        // ell1'(r) = r * ell2'(r) on a grid, for every spec.
        for spec in all_specs() {
            let mut r: f64 = 0.05;
            while r <= 20.0 {
                let lhs = spec.ell1_deriv(r);
                let rhs = r * spec.ell2_deriv(r);
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                    "{} at r={r}: {lhs} vs {rhs}",
                    spec.name()
                );
                r *= 1.3;
            }
        }
    }

    #[test]
    fn constant_ratio_objectives_vanish() {
        let kl = DivergenceSpec::<f64>::new(DivergenceId::Kl);
        let ones = vec![1.0; 8];
        let obj = population_objective(&kl, &ones, &ones).unwrap();
        assert_abs_diff_eq!(obj, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(divergence_estimate(&kl, obj), 0.0, epsilon = 1e-15);
        let pearson = DivergenceSpec::<f64>::new(DivergenceId::Pearson);
        let obj = population_objective(&pearson, &ones, &ones).unwrap();
        assert_abs_diff_eq!(obj, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reverse_kl_offset_restores_zero_divergence() {
        let rkl = DivergenceSpec::<f64>::new(DivergenceId::ReverseKl);
        let ones = vec![1.0; 4];
        let obj = population_objective(&rkl, &ones, &ones).unwrap();
        assert_abs_diff_eq!(divergence_estimate(&rkl, obj), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn generic_scalar_instantiates_at_f32() {
        let kl = DivergenceSpec::<f32>::new(DivergenceId::Kl);
        let (l1, l2) = kl.losses(2.0f32).unwrap();
        assert!((l1 - 2.0).abs() < 1e-6);
        assert!((l2 - (2.0f32.ln() + 1.0)).abs() < 1e-6);
    }
}
