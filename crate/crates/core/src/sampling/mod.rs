//! Distance kernel, neighborhood radius and perturbation samplers.
//!
//! Two samplers generate the local neighborhood of an instance:
//!
//! * [`sample_gaussian`] draws unit-variance Gaussian perturbations around the
//!   instance and weights them by the kernel (the LIME scheme).
//! * [`sample_nball`] draws points inside a ball of radius `r_max`: a
//!   direction from a normalized standard-normal vector, and a radius either
//!   uniform in volume (`r_max · U^{1/p}`) or following the kernel-induced
//!   radial density `k(r) r^{p-1}` truncated at `r_max`.

pub mod gamma;
pub mod rng;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rng::NormalSource;

/// Gaussian distance kernel `k(d) = exp(-d²/σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub sigma: f64,
}

impl Kernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel width must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn weight(&self, d: f64) -> f64 {
        (-(d * d) / (self.sigma * self.sigma)).exp()
    }

    /// Fraction of the radial measure `k(r) r^{dim-1} dr` inside radius `r`.
    pub fn radial_cdf(&self, r: f64, dim: usize) -> f64 {
        let u = (r / self.sigma).powi(2);
        gamma::lower_regularized(dim as f64 / 2.0, u)
    }

    /// Radius enclosing `p_mass` of the radial measure, i.e.
    /// `σ · sqrt(P⁻¹(dim/2, p_mass))`.
    pub fn rmax(&self, p_mass: f64, dim: usize) -> Result<f64> {
        compute_rmax(self, p_mass, dim)
    }
}

pub fn kernel_weight(k: &Kernel, d: f64) -> f64 {
    k.weight(d)
}

pub fn compute_rmax(k: &Kernel, p_mass: f64, dim: usize) -> Result<f64> {
    if !(p_mass > 0.0 && p_mass < 1.0) {
        return Err(Error::InvalidInput(format!(
            "r_max mass must lie in (0, 1), got {p_mass}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("r_max needs dim >= 1".into()));
    }
    let u = gamma::inverse_lower_regularized(dim as f64 / 2.0, p_mass)?;
    Ok(k.sigma * u.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialLaw {
    /// Uniform in the ball's volume.
    UniformInBall,
    /// Radial density proportional to `k(r) r^{p-1}`, truncated at `r_max`.
    KernelMatched,
}

impl RadialLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            RadialLaw::UniformInBall => "uniform-in-ball",
            RadialLaw::KernelMatched => "kernel-matched",
        }
    }
}

impl std::str::FromStr for RadialLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-in-ball" | "uniform" => Ok(RadialLaw::UniformInBall),
            "kernel-matched" => Ok(RadialLaw::KernelMatched),
            other => Err(Error::InvalidInput(format!("unknown radial law {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub center: Array1<f64>,
    pub r_max: f64,
    pub radial_law: RadialLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: Array2<f64>,
    /// Euclidean distance of each point to the center.
    pub distances: Array1<f64>,
    pub weights: Array1<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

const MAX_DIRECTION_REDRAWS: usize = 64;

fn unit_direction<R: Rng + ?Sized>(
    rng: &mut R,
    normal: &mut NormalSource,
    out: &mut [f64],
) -> Result<()> {
    for _ in 0..MAX_DIRECTION_REDRAWS {
        normal.fill(rng, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 1e-300 {
            out.iter_mut().for_each(|v| *v /= norm);
            return Ok(());
        }
    }
    Err(Error::NonConvergence {
        what: "unit direction draw",
        iterations: MAX_DIRECTION_REDRAWS,
    })
}

pub fn sample_nball<R: Rng + ?Sized>(
    spec: &BallSpec,
    k: &Kernel,
    n: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    let p = spec.center.len();
    if p == 0 {
        return Err(Error::InvalidInput("ball center has no coordinates".into()));
    }
    if !(spec.r_max > 0.0) || !spec.r_max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "r_max must be positive, got {}",
            spec.r_max
        )));
    }
    let a = p as f64 / 2.0;
    // kernel-matched radii: invert P(p/2, ·) on [0, P(p/2, r_max²/σ²)]
    let mass_cap = k.radial_cdf(spec.r_max, p);

    let mut normal = NormalSource::new();
    let mut points = Array2::<f64>::zeros((n, p));
    let mut distances = Array1::<f64>::zeros(n);
    let mut dir = vec![0.0; p];
    for i in 0..n {
        unit_direction(rng, &mut normal, &mut dir)?;
        let u: f64 = rng.random();
        let r = match spec.radial_law {
            RadialLaw::UniformInBall => spec.r_max * u.powf(1.0 / p as f64),
            RadialLaw::KernelMatched => {
                let q = gamma::inverse_lower_regularized(a, u * mass_cap)?;
                (k.sigma * q.sqrt()).min(spec.r_max)
            }
        };
        let mut row = points.row_mut(i);
        for j in 0..p {
            row[j] = spec.center[j] + r * dir[j];
        }
        distances[i] = euclidean(row.view(), spec.center.view());
    }
    let weights = distances.mapv(|d| k.weight(d));
    Ok(SampleBatch {
        points,
        distances,
        weights,
    })
}

pub fn sample_gaussian<R: Rng + ?Sized>(
    center: ArrayView1<f64>,
    n: usize,
    rng: &mut R,
    k: &Kernel,
) -> Result<SampleBatch> {
    let p = center.len();
    let mut normal = NormalSource::new();
    let mut points = Array2::<f64>::zeros((n, p));
    let mut distances = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut row = points.row_mut(i);
        for j in 0..p {
            row[j] = center[j] + normal.sample(rng);
        }
        distances[i] = euclidean(row.view(), center);
    }
    let weights = distances.mapv(|d| k.weight(d));
    Ok(SampleBatch {
        points,
        distances,
        weights,
    })
}

pub(crate) fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
