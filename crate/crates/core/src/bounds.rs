//! Uniform error bounds for the truncated sine-basis kernel approximation,
//! and the measured errors they are checked against.
//!
//! The kernel error splits into an aliasing part (infinite series on the
//! padded domain versus the true kernel) and a truncation part (series tail
//! beyond `m` terms per axis).
//!
//! The infinite series has a closed form by Poisson summation. In one
//! dimension
//! `khat_inf(x, t) = sum_n k(x - t + 4Ln) - sum_n k(x + t + 2L + 4Ln)`,
//! and in `d` dimensions the image set is the product of the per-axis ones,
//! with a sign for every reflected axis. Measuring aliasing through the image
//! sum avoids the cancellation that a long series difference would suffer.

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::hsgp::HsgpBasis;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::points::PointSet;
use crate::special::{bessel_k, gamma, ln_gamma};

/// Smallest admissible `L` for the Gaussian truncation bound (strict).
pub fn gaussian_truncation_min_l(spec: &KernelSpec) -> f64 {
    spec.lengthscales[0] * (PI / 2.0).sqrt()
}

/// Smallest admissible `L` for the Matérn bounds (strict).
pub fn matern_min_l(spec: &KernelSpec, b: f64) -> f64 {
    let d = spec.dim as f64;
    let nu = spec.nu();
    let ell = spec.lengthscales[0];
    (0.5 * (b + (2.0 * d * nu).sqrt() * ell)).max(d.sqrt() * ell / (2.0 * (2.0 * nu).sqrt()) * 3f64.ln())
}

fn require_isotropic(spec: &KernelSpec, family: KernelFamily) -> Result<()> {
    spec.validate()?;
    if spec.family != family {
        return Err(Error::invalid(format!("bound requires a {family:?} kernel, got {:?}", spec.family)));
    }
    Ok(())
}

/// Aliasing bound for the Gaussian kernel, valid for `L > B`.
pub fn gaussian_aliasing_bound(spec: &KernelSpec, b: f64, l: f64) -> Result<f64> {
    require_isotropic(spec, KernelFamily::Gaussian)?;
    if !(l > b) {
        return Err(Error::invalid(format!("aliasing bound requires L > B, got L = {l}, B = {b}")));
    }
    let d = spec.dim as i32;
    let ell = spec.lengthscales[0];
    let base = 3.0 + (2.0 * PI).sqrt() * ell / (4.0 * l);
    Ok(spec.sigma2
        * (2f64.powi(d) + 2.0 * d as f64 - 1.0)
        * base.powi(d)
        * (-2.0 * (l - b).powi(2) / (ell * ell)).exp())
}

/// Truncation bound for the Gaussian kernel, valid for `L > ell sqrt(pi/2)`.
pub fn gaussian_truncation_bound(spec: &KernelSpec, m: usize, l: f64) -> Result<f64> {
    require_isotropic(spec, KernelFamily::Gaussian)?;
    let min_l = gaussian_truncation_min_l(spec);
    if !(l > min_l) {
        return Err(Error::invalid(format!(
            "truncation bound requires L > ell sqrt(pi/2) = {min_l}, got {l}"
        )));
    }
    let d = spec.dim as f64;
    let ell = spec.lengthscales[0];
    let mf = m as f64;
    Ok(4.0 * 2f64.sqrt() / (PI.powf(1.5) * ell)
        * 3f64.powi(spec.dim as i32 - 1)
        * d
        * spec.sigma2
        * (l / mf)
        * (-PI * PI * ell * ell * mf * mf / (8.0 * l * l)).exp())
}

/// `beta(d, nu)`: `1/(2 nu)` at `d = 1`, then multiplied by `4 + 2/(2 nu + d - 1)`.
pub fn matern_beta(dim: usize, nu: f64) -> f64 {
    let mut beta = 1.0 / (2.0 * nu);
    for k in 2..=dim {
        beta *= 4.0 + 2.0 / (2.0 * nu + k as f64 - 1.0);
    }
    beta
}

fn check_matern_l(spec: &KernelSpec, b: f64, l: f64) -> Result<()> {
    require_isotropic(spec, KernelFamily::Matern)?;
    let min_l = matern_min_l(spec, b);
    if !(l > min_l) || !(l > b) {
        return Err(Error::invalid(format!(
            "Matérn bounds require L > max(B, (B + sqrt(2 d nu) ell)/2, sqrt(d) ell log 3 / (2 sqrt(2 nu))) = {}, got {l}",
            min_l.max(b)
        )));
    }
    Ok(())
}

/// Aliasing bound for the isotropic Matérn kernel.
pub fn matern_aliasing_bound(spec: &KernelSpec, b: f64, l: f64) -> Result<f64> {
    check_matern_l(spec, b, l)?;
    let d = spec.dim as f64;
    let nu = spec.nu();
    let ell = spec.lengthscales[0];
    let rate = (2.0 * nu).sqrt() / (d.sqrt() * ell);
    let log_front = (d + nu + 2.0) * 2f64.ln() - ln_gamma(nu) + nu * nu.ln() + bessel_k(nu, 4.0 * nu).ln();
    Ok(spec.sigma2
        * (d + 2f64.powi(spec.dim as i32) - 1.0)
        * (log_front + 2.0 * nu + rate * (b - l)).exp())
}

/// Truncation bound for the isotropic Matérn kernel.
pub fn matern_truncation_bound(spec: &KernelSpec, b: f64, m: usize, l: f64) -> Result<f64> {
    check_matern_l(spec, b, l)?;
    let d = spec.dim as f64;
    let nu = spec.nu();
    let ell = spec.lengthscales[0];
    Ok(spec.sigma2
        * 2f64.powf(2.0 * nu + d + 1.0)
        * d
        * (gamma(nu + 0.5 * d) / gamma(nu))
        * PI.powf(-(2.0 * nu + 0.5 * d))
        * (2.0 * nu / (ell * ell)).powf(nu)
        * matern_beta(spec.dim, nu)
        * (l / m as f64).powf(2.0 * nu))
}

/// Aliasing and truncation bounds for an isotropic Gaussian or Matérn kernel.
pub fn theoretical_bounds(spec: &KernelSpec, b: f64, m: usize, l: f64) -> Result<(f64, f64)> {
    match spec.family {
        KernelFamily::Gaussian => Ok((
            gaussian_aliasing_bound(spec, b, l)?,
            gaussian_truncation_bound(spec, m, l)?,
        )),
        KernelFamily::Matern => Ok((
            matern_aliasing_bound(spec, b, l)?,
            matern_truncation_bound(spec, b, m, l)?,
        )),
        KernelFamily::MaternProduct => Err(Error::invalid("error bounds cover isotropic kernels only")),
    }
}

/// Number of periods in each direction beyond which image terms are dropped.
fn image_range(spec: &KernelSpec, l: f64) -> i64 {
    // correlations decay at least like exp(-min(1, sqrt(2 nu)) r / ell)
    let ell = spec.lengthscales.iter().cloned().fold(0.0, f64::max);
    let rate = match spec.family {
        KernelFamily::Gaussian => 1.0,
        _ => (2.0 * spec.nu()).sqrt().min(1.0),
    };
    ((60.0 * ell / rate) / (4.0 * l)).ceil() as i64 + 1
}

/// Infinite-series error `khat_inf(x, t) - k(x, t)` from the image sum.
pub fn aliasing_error(spec: &KernelSpec, l: f64, x: &[f64], t: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_dim(spec.dim, x.len())?;
    check_dim(spec.dim, t.len())?;
    let corr = spec.correlation();
    let reach = image_range(spec, l);
    let d = spec.dim;
    if matches!(spec.family, KernelFamily::Gaussian | KernelFamily::MaternProduct) {
        // separable: per-axis images, then prod(a + e) - prod(a) expanded
        let axis_spec = |k: usize| match spec.family {
            KernelFamily::Gaussian => KernelSpec::gaussian(1, 1.0, spec.lengthscales[0]),
            _ => KernelSpec::matern(1, 1.0, spec.lengthscales[k], spec.nu()),
        };
        let mut base = Vec::with_capacity(d);
        let mut extra = Vec::with_capacity(d);
        for k in 0..d {
            let c = axis_spec(k).correlation();
            let direct = x[k] - t[k];
            let mirror = x[k] + t[k] + 2.0 * l;
            let mut e = 0.0;
            for n in -reach..=reach {
                let shift = 4.0 * l * n as f64;
                if n != 0 {
                    e += c.eval(&[direct + shift], &[0.0]);
                }
                e -= c.eval(&[mirror + shift], &[0.0]);
            }
            base.push(c.eval(&[direct], &[0.0]));
            extra.push(e);
        }
        let mut total = 0.0;
        for k in 0..d {
            let before: f64 = base[..k].iter().product();
            let after: f64 = (k + 1..d).map(|i| base[i] + extra[i]).product();
            total += extra[k] * before * after;
        }
        return Ok(spec.sigma2 * total);
    }
    // isotropic Matérn: full image lattice with reflections
    let width = (2 * reach + 1) as usize;
    let mut total = 0.0;
    let mut shift = vec![0.0; d];
    let origin = vec![0.0; d];
    for mask in 0..(1usize << d) {
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        for flat in 0..width.pow(d as u32) {
            let mut rem = flat;
            let mut all_zero = true;
            for k in 0..d {
                let n = (rem % width) as i64 - reach;
                rem /= width;
                all_zero &= n == 0;
                let u = if mask >> k & 1 == 1 {
                    x[k] + t[k] + 2.0 * l
                } else {
                    x[k] - t[k]
                };
                shift[k] = u + 4.0 * l * n as f64;
            }
            if mask == 0 && all_zero {
                continue;
            }
            total += sign * corr.eval(&shift, &origin);
        }
    }
    Ok(spec.sigma2 * total)
}

/// Series tail `khat_{m_big}(x, t) - khat_m(x, t)` summed term by term over
/// `[m_big]^d \ [m]^d`.
pub fn truncation_tail(spec: &KernelSpec, m: usize, m_big: usize, l: f64, x: &[f64], t: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_dim(spec.dim, x.len())?;
    check_dim(spec.dim, t.len())?;
    if m_big < m {
        return Err(Error::invalid("tail upper index must not be below m"));
    }
    let d = spec.dim;
    let scale = l.powi(-(d as i32));
    let step = PI / (2.0 * l);
    let prod_sin = |j: usize, k: usize| {
        let w = step * j as f64;
        (w * (x[k] + l)).sin() * (w * (t[k] + l)).sin()
    };
    if matches!(spec.family, KernelFamily::Gaussian | KernelFamily::MaternProduct) {
        // separable weights: W_j = sigma2 prod_k w_k(j_k)
        let axis_density = |k: usize| match spec.family {
            KernelFamily::Gaussian => KernelSpec::gaussian(1, 1.0, spec.lengthscales[0]),
            _ => KernelSpec::matern(1, 1.0, spec.lengthscales[k], spec.nu()),
        };
        let mut head = Vec::with_capacity(d);
        let mut tail = Vec::with_capacity(d);
        for k in 0..d {
            let dens = crate::kernels::SpectralDensity::new(&axis_density(k));
            let term = |j: usize| dens.eval(&[step * j as f64]) * prod_sin(j, k);
            head.push((1..=m).map(term).sum::<f64>());
            tail.push((m + 1..=m_big).rev().map(term).sum::<f64>());
        }
        let mut total = 0.0;
        for k in 0..d {
            let before: f64 = head[..k].iter().product();
            let after: f64 = (k + 1..d).map(|i| head[i] + tail[i]).product();
            total += tail[k] * before * after;
        }
        return Ok(spec.sigma2 * scale * total);
    }
    let dens = crate::kernels::SpectralDensity::new(spec);
    let mut omega = vec![0.0; d];
    let mut idx = vec![1usize; d];
    let mut total = 0.0;
    loop {
        if idx.iter().any(|&j| j > m) {
            let mut p = 1.0;
            for k in 0..d {
                omega[k] = step * idx[k] as f64;
                p *= prod_sin(idx[k], k);
            }
            total += dens.eval(&omega) * p;
        }
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(scale * total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= m_big {
                break;
            }
            idx[k] = 1;
        }
    }
}

/// Sup over all pairs of an evaluation grid of the aliasing error and of the
/// truncation tail (tail proxied by `4 m` terms per axis), plus the direct
/// error `|khat_{4m} - k|` for reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasuredErrors {
    pub aliasing: f64,
    pub truncation: f64,
    pub total: f64,
}

pub fn measure_errors(spec: &KernelSpec, b: f64, m: usize, l: f64, grid_per_dim: usize) -> Result<MeasuredErrors> {
    let grid = PointSet::grid(spec.dim, b, grid_per_dim);
    let m_big = 4 * m;
    let mut out = MeasuredErrors {
        aliasing: 0.0,
        truncation: 0.0,
        total: 0.0,
    };
    let big = if spec.dim == 1 || m_big.pow(spec.dim as u32) <= 1 << 16 {
        Some(HsgpBasis::new(spec, m_big, l)?)
    } else {
        None
    };
    let corr = spec.correlation();
    for x in grid.iter() {
        for t in grid.iter() {
            let a = aliasing_error(spec, l, x, t)?;
            let tr = truncation_tail(spec, m, m_big, l, x, t)?;
            out.aliasing = out.aliasing.max(a.abs());
            out.truncation = out.truncation.max(tr.abs());
            if let Some(big) = &big {
                let direct = big.khat(x, t)? - spec.sigma2 * corr.eval(x, t);
                out.total = out.total.max(direct.abs());
            }
        }
    }
    if big.is_none() {
        out.total = f64::NAN;
    }
    Ok(out)
}
