//! Special functions: the modified Bessel function of the second kind and
//! gamma-function helpers used by the Matérn family.
//!
//! `bessel_k` follows Temme's method: the order is split as `nu = n + mu` with
//! `|mu| <= 1/2`, `K_mu` and `K_{mu+1}` come from Temme's series (x < 2) or
//! Steed's continued fraction (x >= 2), and upward recurrence finishes the job.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;

/// Power-series coefficients of `1/Gamma(z) = sum_k C[k] z^(k+1)`.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `1/Gamma(1 + mu)` for `|mu| <= 1/2`.
fn recip_gamma_1p(mu: f64) -> f64 {
    RECIP_GAMMA.iter().rev().fold(0.0, |acc, &c| acc * mu + c)
}

/// Temme's auxiliary functions for `|mu| <= 1/2`:
/// `gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu)`, `gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2`,
/// plus `1/G(1+mu)` and `1/G(1-mu)`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    // even coefficients give gam1, odd give gam2
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pow = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        gam2 += pair[0] * pow;
        if let Some(&c) = pair.get(1) {
            gam1 -= c * pow;
        }
        pow *= mu2;
    }
    (gam1, gam2, recip_gamma_1p(mu), recip_gamma_1p(-mu))
}

/// Returns `(K_nu(x), K_{nu+1}(x))` for `nu >= 0`, `x > 0`.
pub fn bessel_k_pair(nu: f64, x: f64) -> (f64, f64) {
    assert!(nu >= 0.0 && x > 0.0, "bessel_k_pair requires nu >= 0, x > 0");
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut k_mu, mut k_mu1) = if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum, sum1 * xi2)
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let k = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        (k, k * (mu + x + 0.5 - h) * xi)
    };

    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    (k_mu, k_mu1)
}

/// Modified Bessel function of the second kind `K_nu(x)`, any real order, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_pair(nu.abs(), x).0
}
