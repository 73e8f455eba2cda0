//! Benchmark objectives on periodic domains.
//!
//! Built-ins:
//!
//! * [`Objective::cosine_quadratic`] — a quadratic envelope plus a cosine
//!   ripple on `[0,4]^d`, normalized so the global maximum is 1 and the
//!   unique global minimum at `(2, …, 2)` is exactly 0;
//! * [`Objective::four_minima`] — `Σ (x_i² − 4)² / 288` on `[-4,4]²`, four
//!   symmetric global minimizers `(±2, ±2)`;
//! * [`Objective::rastrigin`] — the standard Rastrigin landscape (A = 10)
//!   rescaled so its maximum over the configured domain is 1.
//!
//! Custom objectives register a closure (and optionally its gradient)
//! through [`Objective::custom`].

use std::fmt;
use std::sync::Arc;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// Normalization constant of the cosine-quadratic landscape, stored to the
/// four printed decimals; the known maximum of 1 then holds to about 1e-4.
const FBAR: f64 = 2.3455;

type DynF = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Shared gradient closure for custom objectives.
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Quadratic growth/gap constants of a landscape near its minimizer:
/// `b·|x − x*|² ≤ f(x) − f_min ≤ a·|x − x*|²` for `|x − x*| ≤ r`, and every
/// non-global local minimum has value at least `gap` above `f_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analytic {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub gap: f64,
}

#[derive(Clone)]
enum Kind {
    CosineQuadratic,
    FourMinima,
    /// `per_coord_max` is the maximum of `x² + 10(1 − cos 2πx)` over one
    /// domain edge, so the rescaled maximum over the cube is exactly 1.
    Rastrigin { per_coord_max: f64 },
    Custom { name: String, f: DynF, grad: Option<GradientFn> },
}

/// An evaluable objective bound to its periodic domain, with optional
/// knowledge of the minimum value, the minimizer set, and growth constants.
#[derive(Clone)]
pub struct Objective {
    kind: Kind,
    domain: DomainSpec,
    known_fmin: Option<f64>,
    minimizers: Option<Vec<Vec<f64>>>,
    analytic: Option<Analytic>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("id", &self.id())
            .field("dim", &self.dim())
            .field("known_fmin", &self.known_fmin)
            .finish()
    }
}

impl Objective {
    /// The cosine-quadratic landscape on `[0,4]^d`:
    /// `f(x) = (0.3|x−2|² − Σ cos(4x_i − 8) + d) / (d·2.3455)`.
    pub fn cosine_quadratic(dim: usize) -> Result<Self> {
        let domain = DomainSpec::cube(dim, 0.0, 4.0)?;
        let norm = dim as f64 * FBAR;
        // 1 − cos(4s) ≤ 8s² globally and ≥ 7.333·s² for |s| ≤ 0.25; the
        // lowest non-global local value sits one half-ripple out per axis.
        let analytic = Analytic {
            a: 8.3 / norm,
            b: 7.6 / norm,
            r: 0.25,
            gap: 0.3 * (std::f64::consts::FRAC_PI_2).powi(2) / norm,
        };
        Ok(Objective {
            kind: Kind::CosineQuadratic,
            domain,
            known_fmin: Some(0.0),
            minimizers: Some(vec![vec![2.0; dim]]),
            analytic: Some(analytic),
        })
    }

    /// `Σ (x_i² − 4)² / 288` on `[-4,4]²` with minimizers `(±2, ±2)`.
    pub fn four_minima() -> Result<Self> {
        let domain = DomainSpec::cube(2, -4.0, 8.0)?;
        let minimizers = vec![
            vec![2.0, 2.0],
            vec![-2.0, 2.0],
            vec![-2.0, -2.0],
            vec![2.0, -2.0],
        ];
        // Saddle between adjacent wells, e.g. (2, 0), has value 16/288.
        let analytic = Analytic { a: 0.075, b: 0.04, r: 0.5, gap: 16.0 / 288.0 };
        Ok(Objective {
            kind: Kind::FourMinima,
            domain,
            known_fmin: Some(0.0),
            minimizers: Some(minimizers),
            analytic: Some(analytic),
        })
    }

    /// Standard Rastrigin (A = 10) on `[-5.12, 5.12]^d`, rescaled to max 1.
    pub fn rastrigin(dim: usize) -> Result<Self> {
        Objective::rastrigin_on(dim, 5.12)
    }

    /// Rastrigin on `[-half_width, half_width]^d`, rescaled so the maximum
    /// over that cube is 1.
    pub fn rastrigin_on(dim: usize, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::invalid("rastrigin half_width must be positive"));
        }
        let domain = DomainSpec::cube(dim, -half_width, 2.0 * half_width)?;
        let per_coord_max = rastrigin_coord_max(half_width);
        Ok(Objective {
            kind: Kind::Rastrigin { per_coord_max },
            domain,
            known_fmin: Some(0.0),
            minimizers: Some(vec![vec![0.0; dim]]),
            analytic: None,
        })
    }

    /// Register a custom objective. Every declared minimizer must evaluate
    /// to `known_fmin` within 1e-12.
    pub fn custom(
        name: impl Into<String>,
        domain: DomainSpec,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: Option<GradientFn>,
        known_fmin: Option<f64>,
        minimizers: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if let Some(ms) = &minimizers {
            let fmin = known_fmin.ok_or_else(|| {
                Error::invalid("custom objective: minimizers declared without known_fmin")
            })?;
            for m in ms {
                if m.len() != domain.dim() {
                    return Err(Error::invalid("custom objective: minimizer dimension mismatch"));
                }
                let v = f(m);
                if (v - fmin).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "custom objective: f(minimizer) = {v} but known_fmin = {fmin}"
                    )));
                }
            }
        }
        Ok(Objective {
            kind: Kind::Custom { name: name.into(), f: Arc::new(f), grad },
            domain,
            known_fmin,
            minimizers,
            analytic: None,
        })
    }

    pub fn id(&self) -> &str {
        match &self.kind {
            Kind::CosineQuadratic => "cosine_quadratic",
            Kind::FourMinima => "four_minima",
            Kind::Rastrigin { .. } => "rastrigin",
            Kind::Custom { name, .. } => name,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn known_fmin(&self) -> Option<f64> {
        self.known_fmin
    }

    pub fn minimizers(&self) -> Option<&[Vec<f64>]> {
        self.minimizers.as_deref()
    }

    pub fn analytic(&self) -> Option<Analytic> {
        self.analytic
    }

    /// Evaluate at a canonical point. Pure and thread-safe.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match &self.kind {
            Kind::CosineQuadratic => {
                let d = x.len() as f64;
                let mut quad = 0.0;
                let mut cos = 0.0;
                for &xi in x {
                    let s = xi - 2.0;
                    quad += s * s;
                    cos += (4.0 * xi - 8.0).cos();
                }
                (0.3 * quad - cos + d) / (d * FBAR)
            }
            Kind::FourMinima => {
                x.iter().map(|&xi| (xi * xi - 4.0).powi(2)).sum::<f64>() / 288.0
            }
            Kind::Rastrigin { per_coord_max } => {
                let d = x.len() as f64;
                let raw: f64 = x
                    .iter()
                    .map(|&xi| {
                        xi * xi + 10.0 * (1.0 - (2.0 * std::f64::consts::PI * xi).cos())
                    })
                    .sum();
                raw / (d * per_coord_max)
            }
            Kind::Custom { f, .. } => f(x),
        }
    }

    /// Exact analytic gradient, for test oracles and gradient-assisted runs
    /// with `GradSource::Analytic`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(x.len(), self.dim());
        match &self.kind {
            Kind::CosineQuadratic => {
                let d = x.len() as f64;
                Ok(x.iter()
                    .map(|&xi| (0.6 * (xi - 2.0) + 4.0 * (4.0 * xi - 8.0).sin()) / (d * FBAR))
                    .collect())
            }
            Kind::FourMinima => {
                Ok(x.iter().map(|&xi| 4.0 * xi * (xi * xi - 4.0) / 288.0).collect())
            }
            Kind::Rastrigin { per_coord_max } => {
                let d = x.len() as f64;
                let tau = 2.0 * std::f64::consts::PI;
                Ok(x.iter()
                    .map(|&xi| (2.0 * xi + 10.0 * tau * (tau * xi).sin()) / (d * per_coord_max))
                    .collect())
            }
            Kind::Custom { grad, name, .. } => match grad {
                Some(g) => Ok(g(x)),
                None => Err(Error::Unsupported(format!(
                    "custom objective '{name}' has no registered gradient"
                ))),
            },
        }
    }
}

/// Maximum of `g(x) = x² + 10(1 − cos 2πx)` over `[-half_width, half_width]`,
/// located by a dense deterministic scan with a parabolic refinement.
fn rastrigin_coord_max(half_width: f64) -> f64 {
    let n = 1 << 20;
    let g = |x: f64| x * x + 10.0 * (1.0 - (2.0 * std::f64::consts::PI * x).cos());
    let h = 2.0 * half_width / n as f64;
    let mut best = (g(-half_width), -half_width);
    for i in 1..=n {
        let x = -half_width + i as f64 * h;
        let v = g(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    // Golden-section polish around the scan winner.
    let (mut lo, mut hi) = (best.1 - h, best.1 + h);
    let inv_phi = 0.618_033_988_749_894_9;
    for _ in 0..80 {
        let a = hi - inv_phi * (hi - lo);
        let b = lo + inv_phi * (hi - lo);
        if g(a) < g(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    g(0.5 * (lo + hi)).max(best.0)
}
