//! Prefix synthesis: control points from an equal-area partition, sampled
//! sup-norm errors, the denominator statistic and the element-wise extension
//! to sequences.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    assemble_prefix_tokens, build_universal_head, log_denominator, split_head, AttentionHeadParams, ControlPoints,
    PrefixTokens,
};
use crate::bounds::{normalized_head_parameters, DimensionMode, NormalizedHeadParameters, SmoothnessSpec};
use crate::error::{check_dim, domain, Error, Result};
use crate::kernel::vmf_log_normalizer;
use crate::linalg::{dist, dot, norm};
use crate::rng;
use crate::sphere::{equal_area_partition, project_to_sphere, uniform_sphere_sample, Partition, SpherePoint};

pub type TargetFn = Arc<dyn Fn(&SpherePoint) -> Vec<f64> + Send + Sync>;

/// A vector-valued target S^m → R^{m+1} with its smoothness data.
#[derive(Clone)]
pub struct TargetFunction {
    pub m: usize,
    pub name: String,
    pub spec: SmoothnessSpec,
    /// `spec.l` and `spec.f_sup` are sampled estimates rather than analytic.
    pub spec_estimated: bool,
    f: TargetFn,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("m", &self.m)
            .field("name", &self.name)
            .field("spec", &self.spec)
            .field("spec_estimated", &self.spec_estimated)
            .finish()
    }
}

/// Names accepted by [`TargetFunction::builtin`].
pub const BUILTIN_TARGETS: [&str; 5] = ["constant", "identity", "linear", "vmf-bump", "coordinate-max"];

impl TargetFunction {
    pub fn new(
        name: &str,
        m: usize,
        spec: SmoothnessSpec,
        f: impl Fn(&SpherePoint) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if m < 1 {
            return domain("targets need m >= 1");
        }
        spec.validate()?;
        Ok(TargetFunction { m, name: name.to_string(), spec, spec_estimated: false, f: Arc::new(f) })
    }

    /// A target whose Lipschitz constant and sup norm are estimated from
    /// `samples` random points and close pairs. Estimates are lower bounds,
    /// so both are inflated by 10%.
    pub fn sampled(
        name: &str,
        m: usize,
        samples: usize,
        seed: u64,
        f: impl Fn(&SpherePoint) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if samples < 2 {
            return domain("need at least 2 samples to estimate smoothness");
        }
        let pts = uniform_sphere_sample(m, samples, rng::stage(seed, "points"))?;
        let dirs = uniform_sphere_sample(m, samples, rng::stage(seed, "directions"))?;
        let f_sup = pts.iter().map(|x| norm(&f(x))).fold(0.0, f64::max);
        let mut l = 0.0f64;
        for (i, (x, v)) in pts.iter().zip(&dirs).enumerate() {
            // step along a tangent direction, at scales 1e-2 .. 1e-4
            let t: Vec<f64> = {
                let p = dot(x.coords(), v.coords());
                v.coords().iter().zip(x.coords()).map(|(vi, xi)| vi - p * xi).collect()
            };
            let tn = norm(&t);
            if tn < 1e-8 {
                continue;
            }
            let h: f64 = [1e-2, 1e-3, 1e-4][i % 3];
            let (s, c) = h.sin_cos();
            let y: Vec<f64> = x.coords().iter().zip(&t).map(|(xi, ti)| c * xi + s * ti / tn).collect();
            let y = project_to_sphere(&y)?;
            l = l.max(dist(&f(x), &f(&y)) / h);
        }
        let spec = SmoothnessSpec::with_defaults(1.1 * l, 1.1 * f_sup)?;
        let mut t = Self::new(name, m, spec, f)?;
        t.spec_estimated = true;
        Ok(t)
    }

    pub fn eval(&self, x: &SpherePoint) -> Result<Vec<f64>> {
        check_dim(self.m + 1, x.coords().len())?;
        Ok((self.f)(x))
    }

    pub fn out_dim(&self) -> usize {
        self.m + 1
    }

    /// f ≡ c.
    pub fn constant(m: usize, c: Vec<f64>) -> Result<Self> {
        check_dim(m + 1, c.len())?;
        let spec = SmoothnessSpec::with_defaults(0.0, norm(&c))?;
        Self::new("constant", m, spec, move |_| c.clone())
    }

    /// f(x) = x.
    pub fn identity(m: usize) -> Result<Self> {
        Self::new("identity", m, SmoothnessSpec::with_defaults(1.0, 1.0)?, |x| x.coords().to_vec())
    }

    /// f(x) = ⟨a, x⟩ a.
    pub fn linear(m: usize, a: Vec<f64>) -> Result<Self> {
        check_dim(m + 1, a.len())?;
        let a2 = dot(&a, &a);
        Self::new("linear", m, SmoothnessSpec::with_defaults(a2, a2)?, move |x| {
            let p = dot(&a, x.coords());
            a.iter().map(|ai| p * ai).collect()
        })
    }

    /// f(x) = exp(s(⟨x, c⟩ − 1)) c, a vMF bump scaled to peak value 1.
    pub fn vmf_bump(m: usize, s: f64, center: SpherePoint) -> Result<Self> {
        check_dim(m + 1, center.coords().len())?;
        if !(s > 0.0) || !s.is_finite() {
            return domain(format!("bump concentration must be positive, got {s}"));
        }
        // max over θ of s·sinθ·exp(s(cosθ − 1)), attained at
        // cosθ = (√(1 + 4s²) − 1)/(2s)
        let ct = ((1.0 + 4.0 * s * s).sqrt() - 1.0) / (2.0 * s);
        let l = s * (1.0 - ct * ct).sqrt() * (s * (ct - 1.0)).exp();
        Self::new("vmf-bump", m, SmoothnessSpec::with_defaults(l, 1.0)?, move |x| {
            let g = (s * (dot(x.coords(), center.coords()) - 1.0)).exp();
            center.coords().iter().map(|c| g * c).collect()
        })
    }

    /// f(x) = (max_i x_i, 0, …, 0): Lipschitz but not differentiable.
    pub fn coordinate_max(m: usize) -> Result<Self> {
        Self::new("coordinate-max", m, SmoothnessSpec::with_defaults(1.0, 1.0)?, move |x| {
            let mut out = vec![0.0; m + 1];
            out[0] = x.coords().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out
        })
    }

    /// Registry lookup with fixed default parameters: the constant
    /// (1,…,1)/√(m+1), the linear form with a = e_1, and a bump of
    /// concentration 4 at the pole.
    pub fn builtin(name: &str, m: usize) -> Result<Self> {
        if m < 1 {
            return domain("targets need m >= 1");
        }
        match name {
            "constant" => Self::constant(m, vec![1.0 / ((m + 1) as f64).sqrt(); m + 1]),
            "identity" => Self::identity(m),
            "linear" => {
                let mut a = vec![0.0; m + 1];
                a[0] = 1.0;
                Self::linear(m, a)
            }
            "vmf-bump" => Self::vmf_bump(m, 4.0, SpherePoint::pole(m)),
            "coordinate-max" => Self::coordinate_max(m),
            _ => domain(format!("unknown target {name:?}; known: {}", BUILTIN_TARGETS.join(", "))),
        }
    }
}

/// Control points p^α_k = b_k (cell centers of the equal-area partition),
/// p^β_k = f(b_k).
pub fn synthesize_prefix(f: &TargetFunction, n: usize, lambda: f64, seed: u64) -> Result<ControlPoints> {
    let part = equal_area_partition(f.m, n, seed)?;
    control_points_from(f, &part, lambda, |_, v| v)
}

/// [`synthesize_prefix`] for a bare map with no smoothness data, such as the
/// step functions of the sequence construction.
pub fn synthesize_prefix_fn(
    m: usize,
    n: usize,
    lambda: f64,
    seed: u64,
    g: impl Fn(&SpherePoint) -> Result<Vec<f64>>,
) -> Result<ControlPoints> {
    let part = equal_area_partition(m, n, seed)?;
    let items = part
        .cells
        .into_iter()
        .map(|c| {
            let v = g(&c.center)?;
            Ok((c.center, v))
        })
        .collect::<Result<Vec<_>>>()?;
    ControlPoints::new(m, lambda, items)
}

/// Core-head weights ξ_k = c_{m+1}(λ) f(b_k) w(V_k)/w_m. Fails with
/// `NumericalFailure` when c_{m+1}(λ) underflows; use the split head there.
pub fn synthesize_core_weights(f: &TargetFunction, part: &Partition, lambda: f64) -> Result<ControlPoints> {
    check_dim(f.m, part.m)?;
    if !(lambda > 0.0) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let c = vmf_log_normalizer(f.m, lambda)?.exp();
    if c == 0.0 || !c.is_finite() {
        return Err(Error::NumericalFailure(format!("c_(m+1)({lambda}) is not representable")));
    }
    let total = part.total_measure();
    control_points_from(f, part, lambda, |cell_measure, v| {
        let s = c * cell_measure / total;
        v.into_iter().map(|vi| s * vi).collect()
    })
}

fn control_points_from(
    f: &TargetFunction,
    part: &Partition,
    lambda: f64,
    weight: impl Fn(f64, Vec<f64>) -> Vec<f64>,
) -> Result<ControlPoints> {
    let items = part
        .cells
        .iter()
        .map(|cell| Ok((cell.center.clone(), weight(cell.measure, f.eval(&cell.center)?))))
        .collect::<Result<Vec<_>>>()?;
    ControlPoints::new(f.m, lambda, items)
}

/// Sizes and concentration prescribed by the Jackson-type bound for accuracy
/// ε, reported in logs because they are far beyond anything executable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundPlan {
    pub epsilon: f64,
    pub params: NormalizedHeadParameters,
    pub log10_n: f64,
}

pub fn bound_driven_plan(f: &TargetFunction, epsilon: f64, mode: DimensionMode) -> Result<BoundPlan> {
    let params = normalized_head_parameters(epsilon, &f.spec, f.m, mode)?;
    Ok(BoundPlan { epsilon, params, log10_n: params.n.log10() })
}

/// Bound-driven synthesis. Refuses with `InstanceTooLarge` whenever the
/// prescribed N exceeds `n_cap`, which in practice is always.
pub fn synthesize_bound_driven(
    f: &TargetFunction,
    epsilon: f64,
    mode: DimensionMode,
    n_cap: usize,
    seed: u64,
) -> Result<ControlPoints> {
    let plan = bound_driven_plan(f, epsilon, mode)?;
    let n = plan.params.n.value.ceil();
    if plan.params.n.overflow || !(n <= n_cap as f64) {
        return Err(Error::InstanceTooLarge(format!("bound prescribes N = 10^{:.2}, cap is {n_cap}", plan.log10_n)));
    }
    synthesize_prefix(f, n as usize, plan.params.lambda.value, seed)
}

/// Max and mean of ‖f(x) − approx(x)‖₂ over `n_samples` uniform points.
///
/// The max is a lower bound on the true sup norm. Sample sets are nested in
/// `n_samples` for a fixed seed, so a larger run never reports a smaller sup.
pub fn sup_error_estimate<A>(f: &TargetFunction, approx: A, n_samples: usize, seed: u64) -> Result<(f64, f64)>
where
    A: Fn(&SpherePoint) -> Result<Vec<f64>> + Sync,
{
    if n_samples < 1 {
        return domain("sup_error_estimate needs n_samples >= 1");
    }
    let pts = uniform_sphere_sample(f.m, n_samples, seed)?;
    let errs = pts
        .par_iter()
        .map(|x| {
            let a = approx(x)?;
            let v = f.eval(x)?;
            check_dim(v.len(), a.len())?;
            Ok(dist(&v, &a))
        })
        .collect::<Result<Vec<f64>>>()?;
    let sup = errs.iter().copied().fold(0.0, f64::max);
    let mean = errs.iter().sum::<f64>() / n_samples as f64;
    Ok((sup, mean))
}

/// Sup over samples of |1 − (c_{m+1}(λ)/N) Σ_k exp(λ⟨x, p^α_k⟩)|, computed in
/// the log domain.
pub fn verify_denominator_constancy(cp: &ControlPoints, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples < 1 {
        return domain("need n_samples >= 1");
    }
    let log_scale = vmf_log_normalizer(cp.m, cp.lambda)? - (cp.len() as f64).ln();
    let pts = uniform_sphere_sample(cp.m, n_samples, seed)?;
    let devs = pts
        .par_iter()
        .map(|x| Ok((log_scale + log_denominator(cp, x)?).exp_m1().abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// M recommended for sequences of length up to `t`: −(λ + 40 + ln(N + t)).
pub fn sequence_m(lambda: f64, n: usize, t: usize) -> f64 {
    -(lambda + 40.0 + ((n + t) as f64).ln())
}

/// The augmented universal head and its prefix. The pair is valid for input
/// sequences of any length: each output position equals the single-element
/// evaluation up to the finite-M slack.
pub fn element_wise_extend(cp: &ControlPoints, m_const: f64) -> Result<(PrefixTokens, AttentionHeadParams)> {
    Ok((assemble_prefix_tokens(cp, m_const, true)?, build_universal_head(cp.m, m_const, true)?))
}

/// One row of an approximation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub name: String,
    pub m: usize,
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sup_error: f64,
    pub mean_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub wall_time_ms: u64,
}

impl ApproximationReport {
    pub const CSV_HEADER: [&'static str; 9] =
        ["name", "m", "lambda", "N", "sup_error", "mean_error", "samples", "seed", "wall_time_ms"];

    pub fn csv_record(&self) -> [String; 9] {
        [
            self.name.clone(),
            self.m.to_string(),
            format!("{:e}", self.lambda),
            self.n.to_string(),
            format!("{:e}", self.sup_error),
            format!("{:e}", self.mean_error),
            self.samples.to_string(),
            self.seed.to_string(),
            self.wall_time_ms.to_string(),
        ]
    }
}

/// Budget-driven run: synthesize with (N, λ) and measure the split-head error.
/// The evaluation points depend only on `seed`, not on N or λ.
pub fn approximate(
    f: &TargetFunction,
    n: usize,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<(ControlPoints, ApproximationReport)> {
    let start = Instant::now();
    let cp = synthesize_prefix(f, n, lambda, rng::stage(seed, "partition"))?;
    let (sup, mean) = sup_error_estimate(f, |x| split_head(&cp, x), samples, rng::stage(seed, "eval"))?;
    let report = ApproximationReport {
        name: f.name.clone(),
        m: f.m,
        lambda,
        n,
        sup_error: sup,
        mean_error: mean,
        samples,
        seed,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    Ok((cp, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{classical_head, core_head, lift, project};
    use crate::kernel::kernel_eigenvalue;

    #[test]
    fn declared_sup_covers_samples() {
        for m in [1, 2, 5] {
            for name in BUILTIN_TARGETS {
                let f = TargetFunction::builtin(name, m).unwrap();
                let emp = uniform_sphere_sample(m, 4000, 1)
                    .unwrap()
                    .iter()
                    .map(|x| norm(&f.eval(x).unwrap()))
                    .fold(0.0, f64::max);
                assert!(f.spec.f_sup * 1.05 >= emp, "{name} m={m}: {} < {emp}", f.spec.f_sup);
                assert!(!f.spec_estimated);
            }
        }
        assert!(TargetFunction::builtin("nope", 2).is_err());
    }

    #[test]
    fn analytic_lipschitz_dominates_sampled() {
        for name in BUILTIN_TARGETS {
            let f = TargetFunction::builtin(name, 2).unwrap();
            let g = f.clone();
            let s = TargetFunction::sampled("s", 2, 3000, 5, move |x| g.eval(x).unwrap()).unwrap();
            assert!(s.spec_estimated);
            // sampled values are inflated by 10%, so they exceed sharp analytic ones
            assert!(s.spec.l / 1.1 <= f.spec.l * (1.0 + 1e-3), "{name}: {} vs {}", s.spec.l, f.spec.l);
            assert!(s.spec.l / 1.1 >= 0.8 * f.spec.l, "{name}: {} vs {}", s.spec.l, f.spec.l);
        }
    }

    #[test]
    fn constant_target_is_exact() {
        let c = vec![0.3, -0.7, 2.0];
        let f = TargetFunction::constant(2, c.clone()).unwrap();
        for (n, lambda) in [(1, 1.0), (7, 30.0), (300, 200.0)] {
            let cp = synthesize_prefix(&f, n, lambda, 0).unwrap();
            let (sup, mean) = sup_error_estimate(&f, |x| split_head(&cp, x), 200, 3).unwrap();
            assert_eq!((sup, mean), (0.0, 0.0));
        }
    }

    #[test]
    fn sup_error_of_exact_and_shifted() {
        let f = TargetFunction::identity(3).unwrap();
        assert_eq!(sup_error_estimate(&f, |x| f.eval(x), 500, 1).unwrap(), (0.0, 0.0));
        let shift = [0.06, 0.0, -0.08, 0.0];
        let (sup, mean) =
            sup_error_estimate(&f, |x| Ok(x.coords().iter().zip(shift).map(|(a, b)| a + b).collect()), 500, 1).unwrap();
        assert!((sup - 0.1).abs() < 1e-12 && (mean - 0.1).abs() < 1e-12);
    }

    #[test]
    fn nested_samples_never_lower_sup() {
        let f = TargetFunction::builtin("coordinate-max", 2).unwrap();
        let cp = synthesize_prefix(&f, 100, 20.0, 0).unwrap();
        let mut last = 0.0;
        for n in [64, 128, 256, 512, 1024, 5000, 10000] {
            let (sup, _) = sup_error_estimate(&f, |x| split_head(&cp, x), n, 9).unwrap();
            assert!(sup >= last);
            last = sup;
        }
    }

    #[test]
    fn core_weights() {
        let part = equal_area_partition(2, 500, 0).unwrap();
        let one = TargetFunction::constant(2, vec![1.0, 0.0, 0.0]).unwrap();
        let lambda = 6.0;
        let cp = synthesize_core_weights(&one, &part, lambda).unwrap();
        let c = vmf_log_normalizer(2, lambda).unwrap().exp();
        for x in uniform_sphere_sample(2, 10, 4).unwrap() {
            let stat: f64 = part.centers().iter().map(|b| (lambda * x.dot(b).unwrap()).exp()).sum::<f64>() * c / 500.0;
            let out = core_head(&cp, &x).unwrap();
            assert!((out[0] - stat).abs() <= 1e-12 * stat);
        }
        // core / denominator statistic = split head
        let f = TargetFunction::identity(2).unwrap();
        let core = synthesize_core_weights(&f, &part, lambda).unwrap();
        let split = synthesize_prefix(&f, 500, lambda, 0).unwrap();
        for x in uniform_sphere_sample(2, 100, 8).unwrap() {
            let stat =
                (vmf_log_normalizer(2, lambda).unwrap() - 500f64.ln() + log_denominator(&split, &x).unwrap()).exp();
            let a = core_head(&core, &x).unwrap();
            let b = split_head(&split, &x).unwrap();
            for (ai, bi) in a.iter().zip(&b) {
                assert!((ai / stat - bi).abs() < 1e-12);
            }
        }
        assert!(matches!(synthesize_core_weights(&f, &part, 5000.0), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn core_head_matches_funk_hecke() {
        let mut a = vec![0.0; 3];
        a[0] = 1.0;
        let f = TargetFunction::linear(2, a).unwrap();
        let part = equal_area_partition(2, 8192, 0).unwrap();
        let cp = synthesize_core_weights(&f, &part, 10.0).unwrap();
        let a1 = kernel_eigenvalue(2, 1, 10.0).unwrap();
        for x in uniform_sphere_sample(2, 30, 2).unwrap() {
            let out = core_head(&cp, &x).unwrap();
            assert!((out[0] - a1 * x.coords()[0]).abs() < 0.02, "{} vs {}", out[0], a1 * x.coords()[0]);
        }
    }

    #[test]
    fn denominator_constancy() {
        let f = TargetFunction::identity(2).unwrap();
        let devs: Vec<f64> = [256, 1024, 4096]
            .iter()
            .map(|&n| verify_denominator_constancy(&synthesize_prefix(&f, n, 8.0, 0).unwrap(), 2000, 1).unwrap())
            .collect();
        assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
        let single = verify_denominator_constancy(&synthesize_prefix(&f, 1, 8.0, 0).unwrap(), 500, 1).unwrap();
        assert!(single > 1.0, "{single}");
    }

    #[test]
    fn identity_converges_in_n() {
        let f = TargetFunction::identity(2).unwrap();
        for lambda in [8.0, 32.0] {
            let errs: Vec<f64> = [64, 256, 1024, 4096]
                .iter()
                .map(|&n| approximate(&f, n, lambda, 2048, 0).unwrap().1.sup_error)
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "lambda {lambda}: {errs:?}");
        }
    }

    #[test]
    fn element_wise_extension() {
        let f = TargetFunction::identity(2).unwrap();
        let cp = synthesize_prefix(&f, 64, 10.0, 0).unwrap();
        let t = 8;
        let (tok, head) = element_wise_extend(&cp, sequence_m(10.0, 64, t)).unwrap();
        let pts = uniform_sphere_sample(2, t, 5).unwrap();
        let xs: Vec<Vec<f64>> = pts.iter().map(|x| lift(x, true)).collect();
        let joint = classical_head(&xs, &tok, &head).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let alone = classical_head(std::slice::from_ref(x), &tok, &head).unwrap();
            assert!(dist(&joint[i], &alone[0]) <= 1e-10);
            assert!(dist(&project(&joint[i]).unwrap()[..3], &split_head(&cp, &pts[i]).unwrap()) <= 1e-10);
        }
        let mut rev = xs.clone();
        rev.reverse();
        let out = classical_head(&rev, &tok, &head).unwrap();
        for i in 0..t {
            assert!(dist(&out[i], &joint[t - 1 - i]) <= 1e-12);
        }
    }

    #[test]
    fn bound_driven_is_refused() {
        let f = TargetFunction::identity(8).unwrap();
        let plan = bound_driven_plan(&f, 0.5, DimensionMode::Strict).unwrap();
        assert!(plan.log10_n > 100.0);
        assert!(matches!(
            synthesize_bound_driven(&f, 0.5, DimensionMode::Strict, 1 << 20, 0),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn csv_record_shape() {
        let f = TargetFunction::builtin("constant", 2).unwrap();
        let (_, r) = approximate(&f, 10, 5.0, 10, 1).unwrap();
        assert_eq!(r.csv_record().len(), ApproximationReport::CSV_HEADER.len());
        assert_eq!(r.sup_error, 0.0);
    }
}
