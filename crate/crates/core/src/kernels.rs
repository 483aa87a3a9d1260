//! Kernel functions and the name-keyed kernel registry.
//!
//! A [`KernelSpec`] is the serializable description stored in model files;
//! [`KernelSpec::build`] resolves it through the standard registry into a
//! boxed [`Kernel`] strategy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const RBF: &str = "rbf";
pub const LINEAR: &str = "linear";
pub const HISTOGRAM_INTERSECTION: &str = "histogram-intersection";

/// Serialized kernel description, `{"kind": "...", "sigma": <number>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        KernelSpec {
            kind: RBF.to_string(),
            sigma: Some(sigma),
        }
    }

    pub fn linear() -> Self {
        KernelSpec {
            kind: LINEAR.to_string(),
            sigma: None,
        }
    }

    pub fn histogram_intersection() -> Self {
        KernelSpec {
            kind: HISTOGRAM_INTERSECTION.to_string(),
            sigma: None,
        }
    }

    /// Builds the kernel through [`KernelRegistry::standard`].
    pub fn build(&self) -> Result<Box<dyn Kernel>> {
        KernelRegistry::standard().build(self)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sigma {
            Some(s) => write!(f, "{}(sigma={s})", self.kind),
            None => f.write_str(&self.kind),
        }
    }
}

pub trait Kernel: Send + Sync + fmt::Debug {
    fn spec(&self) -> KernelSpec;

    fn evaluate(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64>;

    /// Whether `k(x, y) = sum_d k(x_d, y_d)` holds.
    fn is_decomposable(&self) -> bool {
        false
    }

    /// Single-dimension term of a sum-decomposable kernel.
    fn evaluate_dimension(&self, _xd: f64, _yd: f64) -> Result<f64> {
        Err(Error::UnsupportedKernel(self.spec().kind))
    }
}

/// Gaussian RBF, `exp(-|x - y|^2 / (2 sigma^2))`.
#[derive(Debug, Clone)]
pub struct Rbf {
    sigma: f64,
    gamma: f64,
}

impl Rbf {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!("rbf sigma must be positive, got {sigma}")));
        }
        Ok(Rbf {
            sigma,
            gamma: -1.0 / (2.0 * sigma * sigma),
        })
    }
}

impl Kernel for Rbf {
    fn spec(&self) -> KernelSpec {
        KernelSpec::rbf(self.sigma)
    }

    fn evaluate(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
        let d2 = match (x, y) {
            // hot path for telemetry windows
            (FeatureVector::Dense(a), FeatureVector::Dense(b)) if a.len() == b.len() => {
                a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
            }
            _ => x.fold_pairs(y, 0.0, |acc, p, q| acc + (p - q) * (p - q))?,
        };
        Ok((self.gamma * d2).exp())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Linear;

impl Kernel for Linear {
    fn spec(&self) -> KernelSpec {
        KernelSpec::linear()
    }

    fn evaluate(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
        x.fold_pairs(y, 0.0, |acc, p, q| acc + p * q)
    }

    fn is_decomposable(&self) -> bool {
        true
    }

    fn evaluate_dimension(&self, xd: f64, yd: f64) -> Result<f64> {
        Ok(xd * yd)
    }
}

/// Histogram intersection, `sum_d min(x_d, y_d)` over nonnegative inputs.
#[derive(Debug, Clone, Default)]
pub struct HistogramIntersection;

impl Kernel for HistogramIntersection {
    fn spec(&self) -> KernelSpec {
        KernelSpec::histogram_intersection()
    }

    fn evaluate(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
        let mut negative = false;
        let v = x.fold_pairs(y, 0.0, |acc, p, q| {
            negative |= p < 0.0 || q < 0.0;
            acc + p.min(q)
        })?;
        if negative {
            return Err(Error::input("histogram intersection requires nonnegative entries"));
        }
        Ok(v)
    }

    fn is_decomposable(&self) -> bool {
        true
    }

    fn evaluate_dimension(&self, xd: f64, yd: f64) -> Result<f64> {
        if xd < 0.0 || yd < 0.0 {
            return Err(Error::input("histogram intersection requires nonnegative entries"));
        }
        Ok(xd.min(yd))
    }
}

type KernelFactory = fn(&KernelSpec) -> Result<Box<dyn Kernel>>;

/// Kernel constructors keyed by kind name.
pub struct KernelRegistry {
    factories: BTreeMap<&'static str, KernelFactory>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        KernelRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding `rbf`, `linear` and `histogram-intersection`.
    pub fn standard() -> &'static KernelRegistry {
        static STANDARD: OnceLock<KernelRegistry> = OnceLock::new();
        STANDARD.get_or_init(|| {
            let mut r = KernelRegistry::empty();
            r.register(RBF, |spec| {
                let sigma = spec
                    .sigma
                    .ok_or_else(|| Error::config("rbf kernel requires sigma"))?;
                Ok(Box::new(Rbf::new(sigma)?))
            });
            r.register(LINEAR, |spec| {
                no_sigma(spec)?;
                Ok(Box::new(Linear))
            });
            r.register(HISTOGRAM_INTERSECTION, |spec| {
                no_sigma(spec)?;
                Ok(Box::new(HistogramIntersection))
            });
            r
        })
    }

    pub fn register(&mut self, name: &'static str, factory: KernelFactory) {
        self.factories.insert(name, factory);
    }

    pub fn build(&self, spec: &KernelSpec) -> Result<Box<dyn Kernel>> {
        let factory = self
            .factories
            .get(spec.kind.as_str())
            .ok_or_else(|| Error::UnknownStrategy {
                what: "kernel",
                name: spec.kind.clone(),
            })?;
        factory(spec)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

fn no_sigma(spec: &KernelSpec) -> Result<()> {
    match spec.sigma {
        Some(_) => Err(Error::config(format!("kernel `{}` takes no sigma", spec.kind))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(v: &[f64]) -> FeatureVector {
        FeatureVector::Dense(v.to_vec())
    }

    #[test]
    fn examples() {
        let rbf = KernelSpec::rbf(1.0).build().unwrap();
        assert_eq!(rbf.evaluate(&dense(&[0.3, 2.0]), &dense(&[0.3, 2.0])).unwrap(), 1.0);
        // exp(-0.5), evaluated by hand
        let v = rbf.evaluate(&dense(&[0.0]), &dense(&[1.0])).unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);

        let lin = KernelSpec::linear().build().unwrap();
        assert_eq!(lin.evaluate(&dense(&[1.0, 2.0]), &dense(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(lin.evaluate_dimension(3.0, 4.0).unwrap(), 12.0);

        let hik = KernelSpec::histogram_intersection().build().unwrap();
        assert_eq!(
            hik.evaluate(&dense(&[1.0, 0.0, 2.0]), &dense(&[0.0, 1.0, 1.0])).unwrap(),
            1.0
        );
        assert_eq!(hik.evaluate_dimension(0.2, 0.5).unwrap(), 0.2);
    }

    #[test]
    fn error_paths() {
        let lin = KernelSpec::linear().build().unwrap();
        assert!(lin.evaluate(&dense(&[1.0]), &dense(&[1.0, 2.0])).is_err());
        let hik = KernelSpec::histogram_intersection().build().unwrap();
        assert!(hik.evaluate(&dense(&[-1.0]), &dense(&[1.0])).is_err());
        let rbf = KernelSpec::rbf(2.0).build().unwrap();
        assert!(matches!(
            rbf.evaluate_dimension(1.0, 1.0),
            Err(Error::UnsupportedKernel(_))
        ));
        assert!(KernelSpec::rbf(0.0).build().is_err());
        assert!(KernelSpec { kind: "rbf".into(), sigma: None }.build().is_err());
        assert!(KernelSpec { kind: "linear".into(), sigma: Some(1.0) }.build().is_err());
        assert!(matches!(
            KernelSpec { kind: "poly".into(), sigma: None }.build(),
            Err(Error::UnknownStrategy { .. })
        ));
    }

    #[test]
    fn spec_serialization_shape() {
        let s = serde_json::to_string(&KernelSpec::rbf(0.5)).unwrap();
        assert_eq!(s, r#"{"kind":"rbf","sigma":0.5}"#);
        let s = serde_json::to_string(&KernelSpec::histogram_intersection()).unwrap();
        assert_eq!(s, r#"{"kind":"histogram-intersection"}"#);
    }

    #[test]
    fn sparse_and_dense_agree() {
        let a = FeatureVector::sparse(vec![(0, 0.5), (2, 1.0)]).unwrap();
        let b = FeatureVector::sparse(vec![(1, 0.25), (2, 0.5)]).unwrap();
        let (da, db) = (dense(&[0.5, 0.0, 1.0]), dense(&[0.0, 0.25, 0.5]));
        for spec in [KernelSpec::rbf(0.7), KernelSpec::linear(), KernelSpec::histogram_intersection()] {
            let k = spec.build().unwrap();
            let s = k.evaluate(&a, &b).unwrap();
            let d = k.evaluate(&da, &db).unwrap();
            assert!((s - d).abs() < 1e-15, "{spec}");
        }
    }

    fn vec5() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..10.0, 5)
    }

    proptest! {
        #[test]
        fn symmetric(x in vec5(), y in vec5(), sigma in 0.1f64..5.0) {
            for spec in [KernelSpec::rbf(sigma), KernelSpec::linear(), KernelSpec::histogram_intersection()] {
                let k = spec.build().unwrap();
                prop_assert_eq!(k.evaluate(&dense(&x), &dense(&y)).unwrap(), k.evaluate(&dense(&y), &dense(&x)).unwrap());
            }
        }

        #[test]
        fn rbf_range(x in vec5(), y in vec5(), sigma in 0.1f64..5.0) {
            let k = KernelSpec::rbf(sigma).build().unwrap();
            let v = k.evaluate(&dense(&x), &dense(&y)).unwrap();
            prop_assert!(v <= 1.0);
            prop_assert!(v >= 0.0);
            if x == y { prop_assert_eq!(v, 1.0); }
        }

        #[test]
        fn decomposition_exact(x in vec5(), y in vec5()) {
            for spec in [KernelSpec::linear(), KernelSpec::histogram_intersection()] {
                let k = spec.build().unwrap();
                let whole = k.evaluate(&dense(&x), &dense(&y)).unwrap();
                let parts: f64 = x.iter().zip(&y).map(|(a, b)| k.evaluate_dimension(*a, *b).unwrap()).sum();
                prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
            }
        }

        #[test]
        fn hik_self_is_l1(x in vec5()) {
            let k = KernelSpec::histogram_intersection().build().unwrap();
            let l1: f64 = x.iter().sum();
            prop_assert!((k.evaluate(&dense(&x), &dense(&x)).unwrap() - l1).abs() < 1e-12);
        }
    }
}
