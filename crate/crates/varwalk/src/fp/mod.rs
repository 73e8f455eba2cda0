//! Finite-difference validation layer for the annealed diffusion limit.
//!
//! On a periodic cell-centered grid this module computes instantaneous
//! equilibria `ū ∝ 1/(φ + ε)` of the degenerate diffusion coefficient
//! `D = φ + ε`, partition constants and their ε-scaling, sublevel-set
//! concentration masses, weak-convergence gaps against point evaluation,
//! Muckenhoupt-style weight ratios, and (in [`evolve`]) the full
//! conservative evolution `∂_t u = Δ(D_ε(t)·u)` with decay diagnostics.

mod evolve;

pub use evolve::{evolve, DecaySample, DecaySeries, EvolveParams};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::stats::{kahan_sum, ols_line};

/// Periodic cell-centered mesh over a hypercube domain, `points_per_dim`
/// nodes per axis (node `i` at `origin + (i + ½)h`).
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
    domain: DomainSpec,
}

impl Grid {
    pub fn new(domain: &DomainSpec, points_per_dim: usize) -> Result<Self> {
        let dim = domain.dim();
        if dim != 1 && dim != 2 {
            return Err(Error::unsupported(format!(
                "grids are limited to 1 or 2 dimensions; got {dim}"
            )));
        }
        if points_per_dim < 8 {
            return Err(Error::invalid("grid needs at least 8 points per dimension"));
        }
        Ok(Grid {
            dim,
            n: points_per_dim,
            h: domain.edge_length() / points_per_dim as f64,
            domain: domain.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Coordinates of flat node index `j` (axis 0 fastest).
    pub fn node_coord(&self, j: usize) -> Vec<f64> {
        let mut coords = Vec::with_capacity(self.dim);
        let mut rest = j;
        for a in 0..self.dim {
            let idx = rest % self.n;
            rest /= self.n;
            coords.push(self.domain.origin()[a] + (idx as f64 + 0.5) * self.h);
        }
        coords
    }

    /// Evaluate a scalar function at every node, in flat-index order.
    pub fn sample_scalar(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.num_nodes()).map(|j| f(&self.node_coord(j))).collect()
    }
}

/// Nonnegative density with midpoint-rule quadrature weights `h^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
}

impl DensityField {
    /// The uniform density `1/V` at every node.
    pub fn uniform(grid: &Grid) -> Self {
        DensityField { values: vec![1.0 / grid.domain().volume(); grid.num_nodes()] }
    }

    /// Build from raw node values: rejects entries below −1e-14, clips the
    /// remaining tiny negatives to zero, and normalizes to unit mass.
    pub fn normalized(grid: &Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::invalid("density length does not match grid"));
        }
        for v in &mut values {
            if !v.is_finite() || *v < -1e-14 {
                return Err(Error::invalid(format!("density node value {v} is not admissible")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass = kahan_sum(values.iter().map(|v| v * grid.cell_volume()));
        if mass <= 0.0 {
            return Err(Error::invalid("density has no mass"));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(DensityField { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        DensityField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        kahan_sum(self.values.iter().map(|v| v * grid.cell_volume()))
    }
}

/// Node values of the diffusion coefficient `D = ((f − f_min)⁺)^β + ε`.
#[derive(Debug, Clone)]
pub struct DiffusionField {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// `φ_j = ((f(x_j) − f_min)⁺)^β` at every node.
pub(crate) fn phi_field(grid: &Grid, objective: &Objective, beta: f64, f_min: f64) -> Vec<f64> {
    grid.sample_scalar(|x| (objective.evaluate(x) - f_min).max(0.0).powf(beta))
}

pub fn diffusion_field(
    grid: &Grid,
    objective: &Objective,
    beta: f64,
    epsilon: f64,
    f_min: f64,
) -> Result<DiffusionField> {
    check_beta_eps(beta, epsilon)?;
    let values = phi_field(grid, objective, beta, f_min).iter().map(|p| p + epsilon).collect();
    Ok(DiffusionField { values, epsilon })
}

fn check_beta_eps(beta: f64, epsilon: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::invalid("beta must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon must be positive: with the floor removed the diffusion degenerates at the \
             minimizer and the equilibrium density is non-normalizable",
        ));
    }
    Ok(())
}

pub(crate) fn partition_constant(phi: &[f64], epsilon: f64, cell_volume: f64) -> f64 {
    kahan_sum(phi.iter().map(|p| cell_volume / (p + epsilon)))
}

/// Instantaneous equilibrium `ū_j = Z⁻¹/(φ_j + ε)` and the partition
/// constant `Z = Σ h^d/(φ_j + ε)`.
pub fn equilibrium(
    grid: &Grid,
    objective: &Objective,
    beta: f64,
    epsilon: f64,
    f_min: f64,
) -> Result<(DensityField, f64)> {
    check_beta_eps(beta, epsilon)?;
    let phi = phi_field(grid, objective, beta, f_min);
    let z = partition_constant(&phi, epsilon, grid.cell_volume());
    let values = phi.iter().map(|p| 1.0 / (z * (p + epsilon))).collect();
    Ok((DensityField { values }, z))
}

/// Predicted growth exponent of `Z` in `1/ε` for `β > d/2`:
/// `(2β − d)/(2β)` (continuously approaching 0 as `β ↓ d/2`).
pub fn predicted_partition_exponent(beta: f64, dim: usize) -> f64 {
    (2.0 * beta - dim as f64) / (2.0 * beta)
}

/// Fitted ε-scaling of the partition constant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum PartitionScaling {
    /// `β > d/2`: slope of `log Z` against `log(1/ε)` with the predicted
    /// exponent `(2β − d)/(2β)`.
    Power { fitted: f64, predicted: f64, stderr: f64 },
    /// `β = d/2`: coefficient of the linear fit of `Z` against `log(1/ε)`.
    Logarithmic { coefficient: f64, r_squared: f64 },
}

/// Fit how `Z` scales as `ε → 0` over `epsilon_list` (≥ 3 values spanning
/// ≥ 3 decades). Requires the objective's declared quadratic-growth
/// constants to verify the smallest ε-ball is resolved (`r_ε ≥ 2h`).
pub fn partition_scaling(
    grid: &Grid,
    objective: &Objective,
    beta: f64,
    epsilon_list: &[f64],
) -> Result<PartitionScaling> {
    if epsilon_list.len() < 3 {
        return Err(Error::invalid("partition scaling needs at least 3 epsilon values"));
    }
    let mut eps_min = f64::INFINITY;
    let mut eps_max = 0.0f64;
    for &e in epsilon_list {
        check_beta_eps(beta, e)?;
        eps_min = eps_min.min(e);
        eps_max = eps_max.max(e);
    }
    if eps_max / eps_min < 0.999e3 {
        return Err(Error::invalid("partition scaling needs epsilons spanning >= 3 decades"));
    }
    let analytic = objective.analytic().ok_or_else(|| {
        Error::invalid("partition scaling requires declared quadratic growth constants")
    })?;
    let f_min = objective
        .known_fmin()
        .ok_or_else(|| Error::invalid("partition scaling requires a declared minimum value"))?;
    // Radius of the region where φ ≤ ε under the quadratic upper envelope:
    // a·r² = ε^(1/β).
    let r_eps = (eps_min.powf(1.0 / beta) / analytic.a).sqrt();
    if r_eps < 2.0 * grid.spacing() {
        return Err(Error::resolution(format!(
            "epsilon ball radius {r_eps:.3e} is below 2h = {:.3e}; increase grid resolution",
            2.0 * grid.spacing()
        )));
    }

    let phi = phi_field(grid, objective, beta, f_min);
    let zs: Vec<f64> =
        epsilon_list.iter().map(|&e| partition_constant(&phi, e, grid.cell_volume())).collect();
    let inv_log: Vec<f64> = epsilon_list.iter().map(|&e| (1.0 / e).ln()).collect();

    let d_half = grid.dim() as f64 / 2.0;
    if beta == d_half {
        let (coefficient, intercept, _) = ols_line(&inv_log, &zs)?;
        let mean_z = zs.iter().sum::<f64>() / zs.len() as f64;
        let ss_tot: f64 = zs.iter().map(|z| (z - mean_z) * (z - mean_z)).sum();
        let ss_res: f64 = inv_log
            .iter()
            .zip(&zs)
            .map(|(&x, &z)| {
                let r = z - (intercept + coefficient * x);
                r * r
            })
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Ok(PartitionScaling::Logarithmic { coefficient, r_squared })
    } else {
        let log_z: Vec<f64> = zs.iter().map(|z| z.ln()).collect();
        let (fitted, _, stderr) = ols_line(&inv_log, &log_z)?;
        Ok(PartitionScaling::Power {
            fitted,
            predicted: predicted_partition_exponent(beta, grid.dim()),
            stderr,
        })
    }
}

/// Quadrature of a density over the discrete sublevel set `{f ≤ level}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConcentrationMass {
    pub mass: f64,
    pub nodes_in_set: usize,
    /// Set when no node fell below the level, so the grid cannot resolve
    /// the sublevel set and the returned mass of 0 is a resolution floor.
    pub resolution_warning: bool,
}

pub fn concentration_mass(
    grid: &Grid,
    density: &DensityField,
    objective: &Objective,
    level: f64,
) -> Result<ConcentrationMass> {
    if density.values.len() != grid.num_nodes() {
        return Err(Error::invalid("density length does not match grid"));
    }
    let f_vals = grid.sample_scalar(|x| objective.evaluate(x));
    let nodes_in_set = f_vals.iter().filter(|&&f| f <= level).count();
    let mass = kahan_sum(
        f_vals
            .iter()
            .zip(&density.values)
            .filter(|(&f, _)| f <= level)
            .map(|(_, &u)| u * grid.cell_volume()),
    );
    Ok(ConcentrationMass { mass, nodes_in_set, resolution_warning: nodes_in_set == 0 })
}

/// `|∫ψ·density dx − ψ(x*)|` with the quadrature ratio-normalized by the
/// density's own discrete mass (so a constant ψ gives 0 exactly).
pub fn weak_delta_gap(
    grid: &Grid,
    density: &DensityField,
    psi: impl Fn(&[f64]) -> f64,
    x_star: &[f64],
) -> Result<f64> {
    grid.domain().check_dim(x_star)?;
    if density.values.len() != grid.num_nodes() {
        return Err(Error::invalid("density length does not match grid"));
    }
    let num = kahan_sum(
        (0..grid.num_nodes())
            .map(|j| psi(&grid.node_coord(j)) * density.values[j] * grid.cell_volume()),
    );
    let den = kahan_sum(density.values.iter().map(|u| u * grid.cell_volume()));
    if den <= 0.0 {
        return Err(Error::invalid("density has no mass"));
    }
    Ok((num / den - psi(x_star)).abs())
}

/// Max/min ratio of the diffusion coefficient over the grid — the
/// computable surrogate for the weight's Muckenhoupt bound. Always at
/// most `C_β/ε` with `C_β = (f_max − f_min)^β + ε`.
pub fn a2_bound(
    grid: &Grid,
    objective: &Objective,
    beta: f64,
    epsilon: f64,
    f_min: f64,
) -> Result<f64> {
    let d = diffusion_field(grid, objective, beta, epsilon, f_min)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &v in &d.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let ratio = hi / lo;
    debug_assert!(ratio <= hi / epsilon, "weight ratio exceeds its ε-bound");
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::objective::Objective;

    fn grid1(n: usize) -> (Grid, Objective) {
        let obj = Objective::cosine_quadratic(1).unwrap();
        let grid = Grid::new(obj.domain(), n).unwrap();
        (grid, obj)
    }

    #[test]
    fn grid_construction_and_coords() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let g = Grid::new(&domain, 8).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.num_nodes(), 8);
        assert_eq!(g.node_coord(0), vec![0.25]);
        assert_eq!(g.node_coord(7), vec![3.75]);

        assert!(Grid::new(&domain, 7).is_err());
        let d3 = DomainSpec::cube(3, 0.0, 4.0).unwrap();
        assert!(matches!(Grid::new(&d3, 16), Err(Error::Unsupported(_))));

        let d2 = DomainSpec::cube(2, -4.0, 8.0).unwrap();
        let g2 = Grid::new(&d2, 16).unwrap();
        assert_eq!(g2.num_nodes(), 256);
        // Axis 0 is the fastest index.
        assert_eq!(g2.node_coord(1)[0], -4.0 + 1.5 * 0.5);
        assert_eq!(g2.node_coord(16)[1], -4.0 + 1.5 * 0.5);
        assert_eq!(g2.cell_volume(), 0.25);
    }

    #[test]
    fn uniform_density_has_unit_mass() {
        let (grid, _) = grid1(64);
        let u = DensityField::uniform(&grid);
        assert!((u.mass(&grid) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn normalized_density_validates_and_clips() {
        let (grid, _) = grid1(8);
        let mut vals = vec![1.0; 8];
        vals[3] = -5e-15; // clipped
        let u = DensityField::normalized(&grid, vals).unwrap();
        assert_eq!(u.values()[3], 0.0);
        assert!((u.mass(&grid) - 1.0).abs() <= 1e-12);

        let mut bad = vec![1.0; 8];
        bad[0] = -1e-10;
        assert!(DensityField::normalized(&grid, bad).is_err());
        assert!(DensityField::normalized(&grid, vec![0.0; 8]).is_err());
        assert!(DensityField::normalized(&grid, vec![1.0; 9]).is_err());
    }

    #[test]
    fn equilibrium_of_constant_landscape_is_uniform() {
        let domain = DomainSpec::cube(2, 0.0, 4.0).unwrap();
        let obj = Objective::custom("flat", domain, |_: &[f64]| 0.7, None, Some(0.7), None)
            .unwrap();
        let grid = Grid::new(obj.domain(), 16).unwrap();
        let (ubar, z) = equilibrium(&grid, &obj, 2.0, 1e-2, 0.7).unwrap();
        let v0 = ubar.values()[0];
        for &v in ubar.values() {
            assert_eq!(v, v0);
        }
        assert!((v0 - 1.0 / 16.0).abs() < 1e-12);
        assert!((z - 16.0 / 1e-2).abs() / z < 1e-12);
        assert!((ubar.mass(&grid) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn equilibrium_rejects_degenerate_floor() {
        let (grid, obj) = grid1(64);
        let err = equilibrium(&grid, &obj, 1.0, 0.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("non-normalizable"), "{err}");
        assert!(equilibrium(&grid, &obj, 1.0, -1e-3, 0.0).is_err());
    }

    #[test]
    fn partition_constant_grid_refinement() {
        let (g_coarse, obj) = grid1(512);
        let (g_fine, _) = grid1(5120);
        let (_, z_c) = equilibrium(&g_coarse, &obj, 1.0, 1e-2, 0.0).unwrap();
        let (_, z_f) = equilibrium(&g_fine, &obj, 1.0, 1e-2, 0.0).unwrap();
        assert!((z_c - z_f).abs() / z_f < 0.005, "coarse {z_c}, fine {z_f}");
    }

    #[test]
    fn partition_constant_upper_bound() {
        let (grid, obj) = grid1(256);
        let volume = obj.domain().volume();
        for beta in [0.5, 1.0, 2.0, 4.0] {
            for eps in [1e-1, 1e-3, 1e-6] {
                let (_, z) = equilibrium(&grid, &obj, beta, eps, 0.0).unwrap();
                assert!(z <= 2.5 * volume / eps, "beta {beta}, eps {eps}: Z = {z}");
            }
        }
    }

    #[test]
    fn partition_scaling_power_branch() {
        let (grid, obj) = grid1(8192);
        let eps_list = [1e-2, 1e-3, 1e-4, 1e-5];
        match partition_scaling(&grid, &obj, 1.0, &eps_list).unwrap() {
            PartitionScaling::Power { fitted, predicted, .. } => {
                assert_eq!(predicted, 0.5);
                assert!((fitted - predicted).abs() <= 0.1, "fitted {fitted}");
            }
            other => panic!("expected power branch, got {other:?}"),
        }
    }

    #[test]
    fn partition_scaling_log_branch() {
        // d = 2, β = 1 = d/2: Z grows linearly in log(1/ε).
        let obj = Objective::cosine_quadratic(2).unwrap();
        let grid = Grid::new(obj.domain(), 2048).unwrap();
        let eps_list = [3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5];
        match partition_scaling(&grid, &obj, 1.0, &eps_list).unwrap() {
            PartitionScaling::Logarithmic { coefficient, r_squared } => {
                assert!(coefficient > 0.0);
                assert!(r_squared > 0.98, "r² = {r_squared}");
            }
            other => panic!("expected logarithmic branch, got {other:?}"),
        }
    }

    #[test]
    fn partition_scaling_exponent_is_continuous_at_the_branch() {
        assert!((predicted_partition_exponent(0.5 + 1e-9, 1)).abs() < 1e-8);
        assert!((predicted_partition_exponent(1.0, 1) - 0.5).abs() < 1e-15);
        assert!((predicted_partition_exponent(2.0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_scaling_input_validation() {
        let (grid, obj) = grid1(64);
        // Too few epsilons / too narrow a span.
        assert!(partition_scaling(&grid, &obj, 1.0, &[1e-2, 1e-3]).is_err());
        assert!(partition_scaling(&grid, &obj, 1.0, &[1e-2, 3e-3, 1e-3]).is_err());
        // Coarse grid cannot resolve the smallest epsilon ball.
        let err = partition_scaling(&grid, &obj, 1.0, &[1e-2, 1e-3, 1e-4, 1e-5]).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
    }

    #[test]
    fn concentration_mass_behaviour() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let grid = Grid::new(obj.domain(), 128).unwrap();
        let (ubar, z) = equilibrium(&grid, &obj, 2.0, 1e-4, 0.0).unwrap();

        // Full domain at or above the maximum value.
        let full = concentration_mass(&grid, &ubar, &obj, 1.0).unwrap();
        assert_eq!(full.nodes_in_set, grid.num_nodes());
        assert!((full.mass - 1.0).abs() <= 1e-12);

        // Monotone nondecreasing in the level.
        let mut prev = 0.0;
        for level in [0.01, 0.05, 0.1, 0.3, 0.6, 1.0] {
            let m = concentration_mass(&grid, &ubar, &obj, level).unwrap().mass;
            assert!(m >= prev);
            prev = m;
        }

        // Deficit bound 1 − mass ≤ V/((𝔣 − f_min)^β · Z).
        for level in [0.05, 0.1, 0.3] {
            let m = concentration_mass(&grid, &ubar, &obj, level).unwrap().mass;
            let bound = obj.domain().volume() / (level.powf(2.0) * z);
            assert!(1.0 - m <= bound + 1e-12, "level {level}: deficit {}", 1.0 - m);
        }

        // Level between f_min and the smallest node value: unresolved.
        let empty = concentration_mass(&grid, &ubar, &obj, 1e-12).unwrap();
        assert_eq!(empty.mass, 0.0);
        assert_eq!(empty.nodes_in_set, 0);
        assert!(empty.resolution_warning);
    }

    #[test]
    fn weak_delta_gap_examples() {
        let (grid, obj) = grid1(2048);

        // Constant test function: exactly zero by ratio normalization.
        let (ubar, _) = equilibrium(&grid, &obj, 1.0, 1e-2, 0.0).unwrap();
        assert_eq!(weak_delta_gap(&grid, &ubar, |_| 1.0, &[2.0]).unwrap(), 0.0);

        // Uniform density: gap is |mean ψ − ψ(x*)|.
        let uniform = DensityField::uniform(&grid);
        let psi = |x: &[f64]| (std::f64::consts::PI * (x[0] - 2.0) / 2.0).cos();
        let mean_psi = kahan_sum(grid.sample_scalar(psi).iter().map(|p| p * grid.cell_volume()))
            / obj.domain().volume();
        let gap_u = weak_delta_gap(&grid, &uniform, psi, &[2.0]).unwrap();
        assert!((gap_u - (mean_psi - 1.0).abs()).abs() < 1e-12);

        // Sharpening equilibria: the gap decreases along ε → 0.
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let (u, _) = equilibrium(&grid, &obj, 1.0, eps, 0.0).unwrap();
            let gap = weak_delta_gap(&grid, &u, psi, &[2.0]).unwrap();
            assert!(gap < prev, "eps {eps}: gap {gap} !< {prev}");
            prev = gap;
        }
    }

    #[test]
    fn a2_ratio_examples() {
        // Constant landscape: ratio exactly 1.
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let flat =
            Objective::custom("flat", domain, |_: &[f64]| 0.3, None, Some(0.3), None).unwrap();
        let gf = Grid::new(flat.domain(), 64).unwrap();
        assert_eq!(a2_bound(&gf, &flat, 1.0, 1e-3, 0.3).unwrap(), 1.0);

        // Bounded by C_β/ε and monotone nonincreasing in ε.
        let (grid, obj) = grid1(512);
        let r = a2_bound(&grid, &obj, 1.0, 1e-3, 0.0).unwrap();
        assert!(r <= (1.0 + 1e-3) / 1e-3, "ratio {r}");
        let mut prev = f64::INFINITY;
        for eps in [1e-4, 2e-4, 1e-3, 1e-2, 1e-1] {
            let v = a2_bound(&grid, &obj, 1.0, eps, 0.0).unwrap();
            assert!(v <= prev, "eps {eps}: {v} !<= {prev}");
            prev = v;
        }
    }
}
