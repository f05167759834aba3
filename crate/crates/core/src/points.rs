use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A set of points in `R^d`, stored row-major in one flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "points need at least one coordinate");
        PointSet {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates cannot be split into points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut set = PointSet::new(dim);
        for row in rows {
            set.push(row.as_ref())?;
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        self.coords.extend_from_slice(x);
        Ok(())
    }

    pub fn extend(&mut self, other: &PointSet) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Keeps the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&[f64]) -> bool) -> PointSet {
        let coords = self
            .iter()
            .filter(|p| keep(p))
            .flat_map(|p| p.iter().copied())
            .collect();
        PointSet {
            dim: self.dim,
            coords,
        }
    }

    /// Uniform tensor grid on `[-b, b]^d` with `per_dim` points per axis,
    /// endpoints included; a single point per axis sits at the centre.
    pub fn grid(dim: usize, half_width: f64, per_dim: usize) -> PointSet {
        let axis = linspace(half_width, per_dim);
        let total = per_dim.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; dim];
            for k in (0..dim).rev() {
                idx[k] = rem % per_dim;
                rem /= per_dim;
            }
            coords.extend(idx.iter().map(|&i| axis[i]));
        }
        PointSet { dim, coords }
    }
}

pub(crate) fn linspace(half_width: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// `true` when every coordinate lies in the open cube `(-b, b)^d`.
pub fn inside_open_cube(x: &[f64], half_width: f64) -> bool {
    x.iter().all(|v| v.abs() < half_width)
}

/// `true` when every coordinate lies in the closed cube `[-b, b]^d`.
pub fn inside_closed_cube(x: &[f64], half_width: f64) -> bool {
    x.iter().all(|v| v.abs() <= half_width)
}
