//! Periodic hypercube domains.
//!
//! All dynamics live on a d-dimensional cube with a single edge length and
//! periodic (torus) topology. Points are kept in the canonical box
//! `[origin_i, origin_i + edge_length)`; displacements and distances use the
//! minimal image.

use rand::Rng;

use crate::error::{Error, Result};

/// A periodic hypercube: `dim` axes, common edge length, lower corner `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    dim: usize,
    edge_length: f64,
    origin: Vec<f64>,
}

impl DomainSpec {
    pub fn new(dim: usize, edge_length: f64, origin: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("domain dim must be >= 1"));
        }
        if !(edge_length > 0.0) || !edge_length.is_finite() {
            return Err(Error::invalid("domain edge_length must be positive and finite"));
        }
        if origin.len() != dim {
            return Err(Error::invalid(format!(
                "domain origin has length {} but dim is {dim}",
                origin.len()
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("domain origin must be finite"));
        }
        Ok(DomainSpec { dim, edge_length, origin })
    }

    /// Cube with the same lower corner on every axis.
    pub fn cube(dim: usize, lower: f64, edge_length: f64) -> Result<Self> {
        DomainSpec::new(dim, edge_length, vec![lower; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn volume(&self) -> f64 {
        self.edge_length.powi(self.dim as i32)
    }

    fn wrap_coord(&self, i: usize, x: f64) -> f64 {
        let lo = self.origin[i];
        let mut r = (x - lo).rem_euclid(self.edge_length);
        // rem_euclid can round up to the period itself for tiny negative
        // inputs; keep the canonical half-open interval.
        if r >= self.edge_length {
            r -= self.edge_length;
        }
        lo + r
    }

    /// Map `x` into the canonical box by modular reduction per axis.
    pub fn wrap(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("wrap: non-finite coordinate"));
        }
        Ok(x.iter().enumerate().map(|(i, &v)| self.wrap_coord(i, v)).collect())
    }

    /// Minimal-image displacement `x - y`, each component in
    /// `[-edge_length/2, edge_length/2)`.
    pub fn min_image_disp(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let l = self.edge_length;
        Ok(x.iter()
            .zip(y)
            .map(|(&a, &b)| {
                let mut d = (a - b).rem_euclid(l);
                if d >= l {
                    d -= l;
                }
                if d >= l / 2.0 {
                    d -= l;
                }
                d
            })
            .collect())
    }

    /// Euclidean length of the minimal-image difference.
    pub fn torus_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.min_image_disp(x, y)?;
        Ok(d.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// A uniform point in the canonical box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.origin[i] + rng.random::<f64>() * self.edge_length)
            .collect()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {}, domain has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }
}
