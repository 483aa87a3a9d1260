//! One-class kernel methods in dual form.
//!
//! Both methods solve a quadratic program over the capped simplex
//! `sum(a) = 1, 0 <= a_i <= C`:
//!
//! * `ocsvm` separates the data from the origin; `f(x) = sum_i a_i k(x_i, x) - b`.
//! * `svdd` encloses the data in a sphere; `f(x) = R - a(x)` with
//!   `a(x) = k(x, x) - 2 sum_i a_i k(x_i, x) + sum_ij a_i a_j k(x_i, x_j)`.
//!
//! A point is anomalous when `f(x) < 0`.

mod model;
mod smo;

use std::collections::BTreeMap;
use std::sync::OnceLock;

pub use model::{OneClassModel, MODEL_VERSION};

use crate::error::{Error, Result};
use crate::features::{Dim, FeatureVector};
use crate::kernels::{Kernel, KernelSpec};
use smo::SimplexQp;

pub const OCSVM: &str = "ocsvm";
pub const SVDD: &str = "svdd";

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Upper bound on each dual weight. Must be at least `1/N`.
    pub c: f64,
    /// Bound on the maximal KKT violation at termination.
    pub solver_tolerance: f64,
    /// Iteration cap; `None` means `100_000 * N`.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            solver_tolerance: 1e-6,
            max_iterations: None,
        }
    }
}

impl TrainConfig {
    pub fn with_c(c: f64) -> Self {
        TrainConfig {
            c,
            ..Default::default()
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.solver_tolerance > 0.0) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        // small slack so that C = 1/N stays admissible despite rounding
        if !(self.c.is_finite() && self.c * n as f64 >= 1.0 - 1e-12) {
            return Err(Error::config(format!(
                "C = {} is infeasible for {n} training points (needs C >= 1/N)",
                self.c
            )));
        }
        Ok(())
    }
}

/// A one-class learning strategy.
pub trait OneClassMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(&self, data: &[FeatureVector], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<OneClassModel>;

    /// Signed prediction `f(x)`; negative means anomalous.
    fn decision(&self, model: &OneClassModel, x: &FeatureVector) -> Result<f64>;

    /// Per-dimension decomposition of the unthresholded prediction.
    /// Requires a sum-decomposable kernel.
    fn dimensional_scores(&self, model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>>;

    /// True when larger dimensional scores mean "more normal".
    fn scores_are_benignity(&self) -> bool;

    /// Dual objective in the method's own convention (minimized for
    /// `ocsvm`, maximized for `svdd`).
    fn dual_objective(&self, gram: &[f64], alphas: &[f64]) -> f64;
}

/// One-class methods keyed by name.
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn OneClassMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            methods: BTreeMap::new(),
        }
    }

    /// Registry holding `ocsvm` and `svdd`.
    pub fn standard() -> &'static MethodRegistry {
        static STANDARD: OnceLock<MethodRegistry> = OnceLock::new();
        STANDARD.get_or_init(|| {
            let mut r = MethodRegistry::empty();
            r.register(Box::new(OneClassSvm));
            r.register(Box::new(Svdd));
            r
        })
    }

    pub fn register(&mut self, method: Box<dyn OneClassMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn OneClassMethod> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                what: "one-class method",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.methods.keys().copied()
    }
}

/// Looks up a method in the standard registry.
pub fn method(name: &str) -> Result<&'static dyn OneClassMethod> {
    MethodRegistry::standard().get(name)
}

pub fn train_ocsvm(data: &[FeatureVector], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<OneClassModel> {
    OneClassSvm.train(data, kernel, cfg)
}

pub fn train_svdd(data: &[FeatureVector], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<OneClassModel> {
    Svdd.train(data, kernel, cfg)
}

/// `f(x) = sum_i a_i k(x_i, x) - b`.
pub fn predict_ocsvm(model: &OneClassModel, x: &FeatureVector) -> Result<f64> {
    OneClassSvm.decision(model, x)
}

/// Returns `(f(x), a(x))` with `f = R - a`.
pub fn predict_svdd(model: &OneClassModel, x: &FeatureVector) -> Result<(f64, f64)> {
    let a = model.squared_distance(x)?;
    Ok((model.offset() - a, a))
}

/// Full kernel matrix, row-major.
pub(crate) fn gram_matrix(kernel: &dyn Kernel, data: &[FeatureVector]) -> Result<Vec<f64>> {
    let n = data.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.evaluate(&data[i], &data[j])?;
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    Ok(gram)
}

fn check_data(data: &[FeatureVector]) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::input("empty training set"))?;
    if let FeatureVector::Dense(v) = first {
        for x in data {
            match x {
                FeatureVector::Dense(w) if w.len() == v.len() => {}
                _ => return Err(Error::input("training vectors differ in dimension or representation")),
            }
        }
    } else if data.iter().any(|x| !x.is_sparse()) {
        return Err(Error::input("training vectors differ in representation"));
    }
    Ok(())
}

struct Dual {
    gram: Vec<f64>,
    alphas: Vec<f64>,
    /// `(K a)_i` for every training point.
    expansion: Vec<f64>,
}

fn solve_dual(
    data: &[FeatureVector],
    kernel: &dyn Kernel,
    cfg: &TrainConfig,
    linear_from_diag: impl Fn(f64) -> f64,
) -> Result<Dual> {
    check_data(data)?;
    cfg.validate(data.len())?;
    let n = data.len();
    let gram = gram_matrix(kernel, data)?;
    let linear: Vec<f64> = (0..n).map(|i| linear_from_diag(gram[i * n + i])).collect();
    let qp = SimplexQp {
        quad: &gram,
        linear: &linear,
        cap: cfg.c,
    };
    let max_iterations = cfg.max_iterations.unwrap_or(100_000usize.saturating_mul(n));
    let solution = qp.solve(cfg.solver_tolerance, max_iterations)?;
    let expansion = solution
        .gradient
        .iter()
        .zip(&linear)
        .map(|(g, p)| g - p)
        .collect();
    Ok(Dual {
        gram,
        alphas: solution.alphas,
        expansion,
    })
}

/// Averages `value` over free support vectors (`0 < a_i < C`). Without any,
/// takes the midpoint between the extremes of the capped and zero-weight points.
fn boundary_average(alphas: &[f64], cap: f64, value: impl Fn(usize) -> f64, at_cap_below: bool) -> f64 {
    let free: Vec<f64> = (0..alphas.len())
        .filter(|&i| alphas[i] > 0.0 && alphas[i] < cap)
        .map(&value)
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let at_cap: Vec<f64> = (0..alphas.len()).filter(|&i| alphas[i] >= cap).map(&value).collect();
    let at_zero: Vec<f64> = (0..alphas.len()).filter(|&i| alphas[i] <= 0.0).map(&value).collect();
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    // at_cap_below: capped points sit below the threshold (ocsvm scores);
    // otherwise above it (svdd distances).
    let (cap_edge, zero_edge) = if at_cap_below {
        (max(&at_cap), min(&at_zero))
    } else {
        (min(&at_cap), max(&at_zero))
    };
    if at_zero.is_empty() {
        cap_edge
    } else {
        0.5 * (cap_edge + zero_edge)
    }
}

pub struct OneClassSvm;

impl OneClassMethod for OneClassSvm {
    fn name(&self) -> &'static str {
        OCSVM
    }

    fn train(&self, data: &[FeatureVector], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<OneClassModel> {
        let k = kernel.build()?;
        let dual = solve_dual(data, k.as_ref(), cfg, |_| 0.0)?;
        let offset = boundary_average(&dual.alphas, cfg.c, |i| dual.expansion[i], true);
        let self_term = quadratic_form(&dual.gram, &dual.alphas);
        OneClassModel::from_dual(OCSVM, kernel.clone(), k, data, &dual.alphas, offset, self_term)
    }

    fn decision(&self, model: &OneClassModel, x: &FeatureVector) -> Result<f64> {
        Ok(model.expansion(x)? - model.offset())
    }

    fn dimensional_scores(&self, model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>> {
        crate::localization::dimensional_scores_ocsvm(model, x)
    }

    fn scores_are_benignity(&self) -> bool {
        true
    }

    fn dual_objective(&self, gram: &[f64], alphas: &[f64]) -> f64 {
        0.5 * quadratic_form(gram, alphas)
    }
}

pub struct Svdd;

impl OneClassMethod for Svdd {
    fn name(&self) -> &'static str {
        SVDD
    }

    fn train(&self, data: &[FeatureVector], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<OneClassModel> {
        let k = kernel.build()?;
        // Halved dual: min 1/2 a'Ka - 1/2 sum a_i k_ii. Same minimizer as the
        // SVDD dual and the same step sequence as the OCSVM when k_ii is constant.
        let dual = solve_dual(data, k.as_ref(), cfg, |kii| -0.5 * kii)?;
        let n = data.len();
        let self_term = quadratic_form(&dual.gram, &dual.alphas);
        let distance = |i: usize| dual.gram[i * n + i] - 2.0 * dual.expansion[i] + self_term;
        let radius = boundary_average(&dual.alphas, cfg.c, distance, false).max(0.0);
        OneClassModel::from_dual(SVDD, kernel.clone(), k, data, &dual.alphas, radius, self_term)
    }

    fn decision(&self, model: &OneClassModel, x: &FeatureVector) -> Result<f64> {
        Ok(model.offset() - model.squared_distance(x)?)
    }

    fn dimensional_scores(&self, model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>> {
        crate::localization::dimensional_scores_svdd(model, x)
    }

    fn scores_are_benignity(&self) -> bool {
        false
    }

    fn dual_objective(&self, gram: &[f64], alphas: &[f64]) -> f64 {
        let n = alphas.len();
        let linear: f64 = (0..n).map(|i| alphas[i] * gram[i * n + i]).sum();
        linear - quadratic_form(gram, alphas)
    }
}

pub(crate) fn quadratic_form(gram: &[f64], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    (0..n)
        .map(|i| {
            let row = &gram[i * n..(i + 1) * n];
            alphas[i] * row.iter().zip(alphas).map(|(k, a)| k * a).sum::<f64>()
        })
        .sum()
}
