//! Gaussian kernel density estimates with Silverman's bandwidth rule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KDE_GRID_POINTS: usize = 512;

/// Bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKde {
    samples: Vec<f64>,
    bandwidth: f64,
}

/// Density sampled on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Grid abscissa of the highest density (first one on ties).
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    pub fn step(&self) -> f64 {
        if self.grid.len() < 2 {
            return 0.0;
        }
        self.grid[1] - self.grid[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,density\n");
        for (x, d) in self.grid.iter().zip(&self.density) {
            s.push_str(&format!("{x},{d}\n"));
        }
        s
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `0.9 · min(σ, IQR/1.34) · n^(-1/5)`. Falls back to σ when the IQR is zero,
/// and to `max(1e-3, |x|·1e-3)` when all samples are equal.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoData("KDE needs at least one sample".into()));
    }
    let n = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = if samples.len() < 2 {
        0.0
    } else {
        let mean = samples.iter().sum::<f64>() / n;
        let sigma = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        if iqr > 0.0 {
            sigma.min(iqr / 1.34)
        } else {
            sigma
        }
    };
    if spread > 0.0 {
        Ok(0.9 * spread * n.powf(-0.2))
    } else {
        Ok((sorted[0].abs() * 1e-3).max(1e-3))
    }
}

impl GaussianKde {
    pub fn new(samples: &[f64], bandwidth: Bandwidth) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoData("KDE needs at least one sample".into()));
        }
        if !samples.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("KDE samples must be finite"));
        }
        let h = match bandwidth {
            Bandwidth::Auto => silverman_bandwidth(samples)?,
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        };
        Ok(Self {
            samples: samples.to_vec(),
            bandwidth: h,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `f(x) = 1/(n h) Σ φ((x - xᵢ)/h)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * PI).sqrt());
        norm * self
            .samples
            .iter()
            .map(|xi| {
                let z = (x - xi) / h;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
    }

    /// Density on 512 evenly spaced points over `[min - 5h, max + 5h]`.
    pub fn curve(&self) -> KdeCurve {
        let h = self.bandwidth;
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
        let hi = self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
        let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|i| lo + step * i as f64).collect();
        let density = grid.iter().map(|&x| self.evaluate(x)).collect();
        KdeCurve {
            grid,
            density,
            bandwidth: h,
        }
    }
}

pub fn kde(samples: &[f64], bandwidth: Bandwidth) -> Result<KdeCurve> {
    Ok(GaussianKde::new(samples, bandwidth)?.curve())
}
