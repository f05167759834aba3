//! Integrated mean squared error acquisition.
//!
//! For a candidate `t` the acquisition is the drop in integrated posterior
//! variance from adding `t`,
//! `IMSE(t) = int_Omega [k(x, t) - k_N(x)^T (K + eta I)^{-1} k_N(t)]^2 dx / (P(t)^2 + eta)`.
//! The exact version integrates numerically. The reduced-rank version
//! replaces the kernel sections in `x` by the sine-basis expansion, which
//! integrates in closed form:
//! `h^T W (G1 ⊗ ... ⊗ G1) W h / (P(t)^2 + eta)` with
//! `h = phi(t) - Phi^T (K + eta I)^{-1} k_N(t)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gp::{clamp_mse, GpModel};
use crate::hsgp::{apply_gd_columns, HsgpBasis};
use crate::kernels::cross_correlation;
use crate::linalg::{chol_solve, solve_lower_in_place, solve_lower_transpose_in_place};
use crate::points::{dist, inside_open_cube, PointSet};
use crate::quadrature::TensorQuadrature;

/// Working-set size (in doubles) for batched evaluations.
const BATCH_BUDGET: usize = 1 << 22;

/// Per-candidate solves shared by both acquisitions.
struct CandidateSolves {
    /// `(C + g I)^{-1} c_N(t)` per column.
    weights: DMatrix<f64>,
    /// `P(t)^2 + eta` per candidate.
    denominators: Vec<f64>,
}

fn candidate_solves(model: &GpModel, candidates: &PointSet) -> Result<CandidateSolves> {
    check_dim(model.spec().dim, candidates.dim())?;
    let mut v = cross_correlation(model.spec(), model.points(), candidates);
    solve_lower_in_place(model.chol(), &mut v);
    let sigma2 = model.sigma2();
    let eta = model.eta();
    let mut denominators = Vec::with_capacity(candidates.len());
    for col in v.column_iter() {
        let p2 = clamp_mse(sigma2 * (1.0 - col.norm_squared()), sigma2)?;
        let denom = p2 + eta;
        if !(denom > 0.0) {
            return Err(Error::DegenerateCandidate(denom));
        }
        denominators.push(denom);
    }
    solve_lower_transpose_in_place(model.chol(), &mut v);
    Ok(CandidateSolves {
        weights: v,
        denominators,
    })
}

/// Exact acquisition at every candidate, integrating with `quad`.
pub fn imse_quadrature_batch(model: &GpModel, candidates: &PointSet, quad: &TensorQuadrature) -> Result<Vec<f64>> {
    check_dim(model.spec().dim, quad.nodes().dim())?;
    let solves = candidate_solves(model, candidates)?;
    let nodes = quad.nodes();
    let weights = quad.weights();
    let dim = nodes.dim();
    let n_cand = candidates.len();
    let mut sums = vec![0.0; n_cand];
    let block = (BATCH_BUDGET / (model.len() + n_cand).max(1)).clamp(64, 8192);
    let mut start = 0;
    while start < nodes.len() {
        let end = (start + block).min(nodes.len());
        let chunk = PointSet::from_flat(dim, nodes.as_flat()[start * dim..end * dim].to_vec())?;
        let to_design = cross_correlation(model.spec(), &chunk, model.points());
        let mut resid = cross_correlation(model.spec(), &chunk, candidates);
        resid.gemm(-1.0, &to_design, &solves.weights, 1.0);
        for (c, col) in resid.column_iter().enumerate() {
            sums[c] += col.iter().zip(&weights[start..end]).map(|(r, w)| w * r * r).sum::<f64>();
        }
        start = end;
    }
    let s4 = model.sigma2() * model.sigma2();
    Ok(sums
        .iter()
        .zip(&solves.denominators)
        .map(|(s, d)| s4 * s / d)
        .collect())
}

/// Exact acquisition at one candidate.
pub fn imse_quadrature_with(model: &GpModel, t: &[f64], quad: &TensorQuadrature) -> Result<f64> {
    let c = PointSet::from_rows(model.spec().dim, &[t])?;
    Ok(imse_quadrature_batch(model, &c, quad)?[0])
}

/// Exact acquisition with a tensor Gauss–Legendre rule of `nodes_per_dim`
/// nodes per axis on `(-b, b)^d`.
pub fn imse_quadrature(model: &GpModel, t: &[f64], half_width: f64, nodes_per_dim: usize) -> Result<f64> {
    if nodes_per_dim < 8 {
        return Err(Error::invalid("quadrature needs at least 8 nodes per axis"));
    }
    let quad = TensorQuadrature::gauss_legendre(model.spec().dim, half_width, nodes_per_dim)?;
    imse_quadrature_with(model, t, &quad)
}

/// Everything the closed-form acquisition needs for one design and one set
/// of hyperparameters.
#[derive(Clone, Debug)]
pub struct AcquisitionContext {
    basis: HsgpBasis,
    /// `Phi^T`, one column per design point.
    design_t: DMatrix<f64>,
    g1: DMatrix<f64>,
    half_width: f64,
}

impl AcquisitionContext {
    pub fn new(model: &GpModel, basis: HsgpBasis, half_width: f64) -> Result<Self> {
        check_dim(model.spec().dim, basis.dim())?;
        if !(half_width < basis.half_width()) {
            return Err(Error::invalid(format!(
                "expansion half-width {} must exceed the domain half-width {half_width}",
                basis.half_width()
            )));
        }
        let design_t = basis.design_matrix_transposed(model.points())?;
        let g1 = basis.gram_g1(half_width)?;
        Ok(AcquisitionContext {
            basis,
            design_t,
            g1,
            half_width,
        })
    }

    /// Convenience constructor: basis for the model's current kernel.
    pub fn for_model(model: &GpModel, m: usize, l: f64, half_width: f64) -> Result<Self> {
        let basis = HsgpBasis::new(model.spec(), m, l)?;
        Self::new(model, basis, half_width)
    }

    pub fn basis(&self) -> &HsgpBasis {
        &self.basis
    }

    pub fn g1(&self) -> &DMatrix<f64> {
        &self.g1
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `Phi^T` (M x N).
    pub fn design_matrix_transposed(&self) -> &DMatrix<f64> {
        &self.design_t
    }

    /// `u^T (G1 ⊗ ... ⊗ G1) u` for each column `u` of `w_h`, overwriting it.
    fn quadratic_forms(&self, w_h: &mut DMatrix<f64>) -> Vec<f64> {
        let original = w_h.clone();
        let mut scratch = DMatrix::zeros(w_h.nrows(), w_h.ncols());
        apply_gd_columns(&self.g1, self.basis.dim(), w_h, &mut scratch);
        original
            .column_iter()
            .zip(w_h.column_iter())
            .map(|(u, gu)| u.dot(&gu))
            .collect()
    }

    /// `h(t)` for each candidate, scaled by the spectral weights.
    fn weighted_residual_features(&self, candidates: &PointSet, solve_weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        // k_N(t) / (K + eta I) equals c_N(t) / (C + g I): the variance cancels
        let mut h = self.basis.design_matrix_transposed(candidates)?;
        h.gemm(-1.0, &self.design_t, solve_weights, 1.0);
        for mut col in h.column_iter_mut() {
            for (v, w) in col.iter_mut().zip(self.basis.weights()) {
                *v *= w;
            }
        }
        Ok(h)
    }

    /// Closed-form acquisition at every candidate.
    pub fn hsgp_imse_batch(&self, model: &GpModel, candidates: &PointSet) -> Result<Vec<f64>> {
        check_dim(self.basis.dim(), candidates.dim())?;
        if self.design_t.ncols() != model.len() {
            return Err(Error::invalid("acquisition context is stale for this model"));
        }
        let chunk = (BATCH_BUDGET / self.basis.size()).max(1);
        let mut out = Vec::with_capacity(candidates.len());
        let dim = candidates.dim();
        for rows in candidates.as_flat().chunks(chunk * dim) {
            let part = PointSet::from_flat(dim, rows.to_vec())?;
            let solves = candidate_solves(model, &part)?;
            let mut wh = self.weighted_residual_features(&part, &solves.weights)?;
            let numerators = self.quadratic_forms(&mut wh);
            out.extend(numerators.iter().zip(&solves.denominators).map(|(n, d)| n / d));
        }
        Ok(out)
    }

    /// Closed-form acquisition at one candidate without batching, at cost
    /// `O((N + d m) M)` beyond the triangular solves.
    pub fn hsgp_imse(&self, model: &GpModel, t: &[f64]) -> Result<f64> {
        check_dim(self.basis.dim(), t.len())?;
        let corr = model.spec().correlation();
        let cn = DVector::from_iterator(model.len(), model.points().iter().map(|x| corr.eval(x, t)));
        let a = chol_solve(model.chol(), &DMatrix::from_column_slice(cn.len(), 1, cn.as_slice()));
        let sigma2 = model.sigma2();
        let p2 = clamp_mse(sigma2 * (1.0 - cn.dot(&a.column(0))), sigma2)?;
        let denom = p2 + model.eta();
        if !(denom > 0.0) {
            return Err(Error::DegenerateCandidate(denom));
        }
        let mut h = DMatrix::from_column_slice(self.basis.size(), 1, &self.basis.features(t)?);
        h.gemm(-1.0, &self.design_t, &a, 1.0);
        for (v, w) in h.iter_mut().zip(self.basis.weights()) {
            *v *= w;
        }
        Ok(self.quadratic_forms(&mut h)[0] / denom)
    }
}

/// Half the smallest pairwise distance.
pub fn separation_distance(points: &PointSet) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("separation distance needs at least two points"));
    }
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(dist(points.point(i), points.point(j)));
        }
    }
    Ok(0.5 * best)
}

/// Fill distance of `points` in `[-b, b]^d`, estimated on a uniform grid of
/// `grid_per_dim` points per axis. The grid value is a lower bound of the
/// true supremum.
pub fn fill_distance(points: &PointSet, half_width: f64, grid_per_dim: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("fill distance of an empty design"));
    }
    let grid = PointSet::grid(points.dim(), half_width, grid_per_dim);
    Ok(grid
        .iter()
        .map(|g| points.iter().map(|p| dist(g, p)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// `t` lies in the open domain and at least `gamma h` from every design point.
pub fn is_feasible(t: &[f64], points: &PointSet, half_width: f64, gamma: f64, fill: f64) -> bool {
    inside_open_cube(t, half_width) && points.iter().all(|p| dist(t, p) >= gamma * fill)
}

/// Grid used to estimate the fill distance: 256 points for `d = 1`,
/// 128 per axis for `d = 2`, coarser beyond.
pub fn default_grid_per_dim(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 128,
        3 => 32,
        _ => 8,
    }
}

/// Incrementally maintained fill and separation distances of a growing
/// design, with the stabilizing fraction `gamma`.
#[derive(Clone, Debug)]
pub struct FeasibilityState {
    gamma: f64,
    half_width: f64,
    points: PointSet,
    grid: PointSet,
    nearest: Vec<f64>,
    fill: f64,
    min_pair: f64,
}

impl FeasibilityState {
    pub fn new(points: &PointSet, half_width: f64, gamma: f64, grid_per_dim: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("feasibility needs a nonempty design"));
        }
        let grid = PointSet::grid(points.dim(), half_width, grid_per_dim);
        let nearest: Vec<f64> = grid
            .iter()
            .map(|g| points.iter().map(|p| dist(g, p)).fold(f64::INFINITY, f64::min))
            .collect();
        let fill = nearest.iter().cloned().fold(0.0, f64::max);
        let min_pair = if points.len() >= 2 {
            2.0 * separation_distance(points)?
        } else {
            f64::INFINITY
        };
        Ok(FeasibilityState {
            gamma,
            half_width,
            points: points.clone(),
            grid,
            nearest,
            fill,
            min_pair,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        self.gamma = gamma;
        Ok(())
    }

    /// Grid estimate of the fill distance.
    pub fn fill_distance(&self) -> f64 {
        self.fill
    }

    /// Half the smallest pairwise distance (infinite for one point).
    pub fn separation_distance(&self) -> f64 {
        0.5 * self.min_pair
    }

    /// Minimum distance a candidate must keep from the design.
    pub fn radius(&self) -> f64 {
        self.gamma * self.fill
    }

    pub fn is_feasible(&self, t: &[f64]) -> bool {
        is_feasible(t, &self.points, self.half_width, self.gamma, self.fill)
    }

    /// Indices of feasible candidates.
    pub fn feasible_indices(&self, candidates: &PointSet) -> Vec<usize> {
        candidates
            .iter()
            .enumerate()
            .filter(|(_, t)| self.is_feasible(t))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn add(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.points.dim(), x.len())?;
        for p in self.points.iter() {
            self.min_pair = self.min_pair.min(dist(p, x));
        }
        self.points.push(x)?;
        for (g, near) in self.grid.iter().zip(self.nearest.iter_mut()) {
            *near = near.min(dist(g, x));
        }
        self.fill = self.nearest.iter().cloned().fold(0.0, f64::max);
        Ok(())
    }
}
