//! Stationary law of the heavy-traffic limit.
//!
//! All closed forms are expressed through two positive coefficients,
//! `kappa1` (height of the density on `[0, ell_d)`) and `kappa2`, and the
//! moment helpers of [`crate::numerics`]. This keeps every quantity
//! continuous through `b1 = 0` and free of overflow for large `|b1| ell_u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Region;
use crate::numerics::{exp_expm1_integral, expm1_minus_x, exprel, ln_exprel, p_moment, q_moment};

/// Below this magnitude `b1` is treated as exactly zero.
pub const B1_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub b1: f64,
    pub b2: f64,
    pub ell_d_t: f64,
    pub ell_u_t: f64,
    pub rho12_t: f64,
}

impl DiffusionParams {
    pub fn new(b1: f64, b2: f64, ell_d_t: f64, ell_u_t: f64, rho12_t: f64) -> Result<Self> {
        let dp = Self {
            b1,
            b2,
            ell_d_t,
            ell_u_t,
            rho12_t,
        };
        dp.validate()?;
        Ok(dp)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.b1, self.b2, self.ell_d_t, self.ell_u_t, self.rho12_t]
            .iter()
            .all(|v| v.is_finite());
        let bad = |m: String| Err(Error::InvalidDiffusionParams(m));
        if !all_finite {
            return bad(format!("parameters must be finite: {self:?}"));
        }
        if !(self.b2 < 0.0) {
            return bad(format!("b2 must be negative, got {}", self.b2));
        }
        if !(0.0 < self.ell_d_t && self.ell_d_t < self.ell_u_t) {
            return bad(format!(
                "need 0 < ell_d < ell_u, got {} and {}",
                self.ell_d_t, self.ell_u_t
            ));
        }
        if !(self.rho12_t > 0.0) {
            return bad(format!("rho12 must be positive, got {}", self.rho12_t));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.ell_u_t - self.ell_d_t
    }

    fn b1_is_zero(&self) -> bool {
        self.b1.abs() < B1_ZERO_TOL
    }
}

/// The limit law with its constants precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub params: DiffusionParams,
    /// Normalisation constant; may underflow to 0 when `b1 ell_u` is huge.
    pub c0: f64,
    ln_c0: f64,
    ln_kappa1: f64,
    ln_kappa2: f64,
}

impl LimitLaw {
    pub fn new(dp: DiffusionParams) -> Result<Self> {
        dp.validate()?;
        let delta = dp.span();
        let (ln_c0, ln_kappa1, ln_kappa2) = if dp.b1_is_zero() {
            let ln_c0 = -(0.5 * (dp.ell_u_t + dp.ell_d_t) - dp.rho12_t / dp.b2).ln();
            (ln_c0, ln_c0, ln_c0 - delta.ln())
        } else {
            let b1 = dp.b1;
            // the bracket defining 1/c0, scaled by e^{-shift}
            let shift = if b1 > 0.0 { b1 * dp.ell_u_t } else { 0.0 };
            let lin = if b1 > 0.0 {
                -(-b1 * dp.ell_u_t).exp_m1()
            } else {
                (b1 * dp.ell_u_t).exp_m1()
            };
            let y = b1 * delta;
            let curv = if y.abs() < 0.5 {
                expm1_minus_x(y) * (-shift).exp()
            } else {
                (y - shift).exp() - (1.0 + y) * (-shift).exp()
            };
            let grow = (b1 * dp.ell_u_t - shift).exp();
            let inner = y * lin - curv - b1 * b1 / dp.b2 * delta * dp.rho12_t * grow;
            let ln_inner = inner.ln();
            let ln_b1sq = 2.0 * b1.abs().ln();
            (
                -shift - ln_inner,
                ln_b1sq + delta.ln() + ln_exprel(y) - shift - ln_inner,
                ln_b1sq + (b1 * dp.ell_u_t - shift) - ln_inner,
            )
        };
        Ok(Self {
            params: dp,
            c0: ln_c0.exp(),
            ln_c0,
            ln_kappa1,
            ln_kappa2,
        })
    }

    pub fn ln_c0(&self) -> f64 {
        self.ln_c0
    }

    /// Limit of `sqrt(n) pi(0,1)`, equal to the density on `[0, ell_d)` at 0.
    pub fn limit_sqrtn_pi0(&self) -> f64 {
        self.ln_kappa1.exp()
    }

    fn kappa2(&self) -> f64 {
        self.ln_kappa2.exp()
    }

    /// `(e^{b2 Delta} - 1) / b2`, the plateau factor of `f22`.
    fn plateau(&self) -> f64 {
        let p = &self.params;
        p.span() * exprel(p.b2 * p.span())
    }

    pub fn density(&self, region: Region, x: f64) -> f64 {
        let p = &self.params;
        let (ld, lu) = (p.ell_d_t, p.ell_u_t);
        match region {
            Region::S11 if (0.0..ld).contains(&x) => (self.ln_kappa1 + p.b1 * x).exp(),
            Region::S21 if (ld..=lu).contains(&x) => {
                let u = lu - x;
                if u == 0.0 {
                    0.0
                } else {
                    (self.ln_kappa2 + u.ln() + ln_exprel(-p.b1 * u)).exp()
                }
            }
            Region::S12 if (ld..=lu).contains(&x) => {
                let v = x - ld;
                self.kappa2() * p.rho12_t * v * exprel(p.b2 * v)
            }
            Region::S22 if x > lu => {
                self.kappa2() * p.rho12_t * self.plateau() * (p.b2 * (x - lu)).exp()
            }
            _ => 0.0,
        }
    }

    pub fn total_density(&self, x: f64) -> f64 {
        Region::ALL.iter().map(|r| self.density(*r, x)).sum()
    }

    pub fn region_mass(&self, region: Region) -> f64 {
        let p = &self.params;
        let delta = p.span();
        match region {
            Region::S11 => (self.ln_kappa1 + p.ell_d_t.ln() + ln_exprel(p.b1 * p.ell_d_t)).exp(),
            Region::S21 => (self.ln_kappa2 + 2.0 * delta.ln() + ln_q(1, -p.b1 * delta)).exp(),
            Region::S12 => self.kappa2() * p.rho12_t * delta * delta * q_moment(1, p.b2 * delta),
            Region::S22 => -self.kappa2() * p.rho12_t * self.plateau() / p.b2,
        }
    }

    /// `F(x) = int_0^x f`, evaluated piecewise in closed form.
    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.params;
        let (ld, lu) = (p.ell_d_t, p.ell_u_t);
        let k2 = self.kappa2();
        let f = if x <= 0.0 {
            0.0
        } else if x < ld {
            (self.ln_kappa1 + x.ln() + ln_exprel(p.b1 * x)).exp()
        } else {
            let upto = |x: f64| {
                let s = lu - x;
                let v = x - ld;
                self.region_mass(Region::S11)
                    + self.region_mass(Region::S21)
                    - (self.ln_kappa2 + 2.0 * s.ln() + ln_q(1, -p.b1 * s)).exp()
                    + k2 * p.rho12_t * v * v * q_moment(1, p.b2 * v)
            };
            if x <= lu {
                upto(x)
            } else {
                upto(lu) - self.region_mass(Region::S22) * (p.b2 * (x - lu)).exp_m1()
            }
        };
        f.clamp(0.0, 1.0)
    }

    /// `int_0^inf x f(x) dx`.
    pub fn mean(&self) -> f64 {
        let p = &self.params;
        let (ld, lu, delta) = (p.ell_d_t, p.ell_u_t, p.span());
        let k2 = self.kappa2();
        let m11 = (self.ln_kappa1 + 2.0 * ld.ln() + ln_p1(p.b1 * ld)).exp();
        let (y21, y12) = (-p.b1 * delta, p.b2 * delta);
        let d2 = delta * delta;
        // int_0^Delta (ell_u - u) u exprel(-b1 u) du; both terms positive and
        // the first dominates since ell_u > Delta
        let m21 = (self.ln_kappa2 + lu.ln() + d2.ln() + ln_q(1, y21)).exp()
            - (self.ln_kappa2 + 3.0 * delta.ln() + ln_q(2, y21)).exp();
        let m12 = k2 * p.rho12_t * (ld * d2 * q_moment(1, y12) + d2 * delta * q_moment(2, y12));
        let m22 = k2 * p.rho12_t * self.plateau() * (1.0 - p.b2 * lu) / (p.b2 * p.b2);
        m11 + m21 + m12 + m22
    }

    /// `phi_ij(theta) = int e^{theta x} f_ij(x) dx`; `+inf` for S22 when
    /// `theta >= -b2`.
    pub fn mgf_component(&self, region: Region, theta: f64) -> f64 {
        let p = &self.params;
        let (ld, lu, delta) = (p.ell_d_t, p.ell_u_t, p.span());
        match region {
            Region::S11 => {
                (self.ln_kappa1 + ld.ln() + ln_exprel((theta + p.b1) * ld)).exp()
            }
            Region::S21 => {
                self.kappa2() * (theta * lu).exp() * exp_expm1_integral(-theta, -p.b1, delta)
            }
            Region::S12 => {
                self.kappa2() * p.rho12_t * (theta * ld).exp() * exp_expm1_integral(theta, p.b2, delta)
            }
            Region::S22 => {
                if theta >= -p.b2 {
                    f64::INFINITY
                } else {
                    self.kappa2() * p.rho12_t * self.plateau() * (theta * lu).exp() / -(theta + p.b2)
                }
            }
        }
    }

    pub fn mgf(&self, theta: f64) -> f64 {
        Region::ALL.iter().map(|r| self.mgf_component(*r, theta)).sum()
    }

    /// Rows `(x, f11, f21, f12, f22, f, F)` over `grid`.
    pub fn density_rows(&self, grid: &[f64]) -> Vec<DensityRow> {
        grid.iter()
            .map(|&x| {
                let parts = Region::ALL.map(|r| self.density(r, x));
                DensityRow {
                    x,
                    f11: parts[0],
                    f21: parts[1],
                    f12: parts[2],
                    f22: parts[3],
                    f: parts.iter().sum(),
                    cdf: self.cdf(x),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityRow {
    pub x: f64,
    pub f11: f64,
    pub f21: f64,
    pub f12: f64,
    pub f22: f64,
    pub f: f64,
    #[serde(rename = "F")]
    pub cdf: f64,
}

/// `ln Q_k(y)` for `k` in {1, 2}, finite for large positive `y`.
fn ln_q(k: u32, y: f64) -> f64 {
    if y > 50.0 {
        // Q_k(y) = (P_{k-1}(y) - 1/k) / y
        let ln_p = if k == 1 { ln_exprel(y) } else { ln_p1(y) };
        ln_p + (-(-ln_p).exp() / k as f64).ln_1p() - y.ln()
    } else {
        q_moment(k, y).ln()
    }
}

/// `ln int_0^1 t e^{y t} dt`, finite for large positive `y`.
fn ln_p1(y: f64) -> f64 {
    if y > 50.0 {
        // e^y int_0^1 (1 - s) e^{-y s} ds
        y + (p_moment(0, -y) - p_moment(1, -y)).ln()
    } else {
        p_moment(1, y).ln()
    }
}

pub fn c0(dp: &DiffusionParams) -> Result<f64> {
    Ok(LimitLaw::new(*dp)?.c0)
}

pub fn density(dp: &DiffusionParams, region: Region, x: f64) -> Result<f64> {
    Ok(LimitLaw::new(*dp)?.density(region, x))
}

pub fn cdf(law: &LimitLaw, x: f64) -> f64 {
    law.cdf(x)
}

pub fn diffusion_mean(dp: &DiffusionParams) -> Result<f64> {
    Ok(LimitLaw::new(*dp)?.mean())
}

pub fn diffusion_mgf_component(dp: &DiffusionParams, region: Region, theta: f64) -> Result<f64> {
    Ok(LimitLaw::new(*dp)?.mgf_component(region, theta))
}

pub fn limit_sqrtn_pi0(dp: &DiffusionParams) -> Result<f64> {
    Ok(LimitLaw::new(*dp)?.limit_sqrtn_pi0())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn dp(b1: f64) -> DiffusionParams {
        DiffusionParams::new(b1, -1.0, 3.0, 10.0, 0.8).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Textbook transcription of the printed mean, valid away from b1 = 0.
    fn naive_mean(p: &DiffusionParams) -> f64 {
        let (b1, b2, ld, lu, r) = (p.b1, p.b2, p.ell_d_t, p.ell_u_t, p.rho12_t);
        let e = (b1 * lu).exp();
        let c = 1.0 / (1.0 - (b1 * (lu - ld)).exp() + b1 * (lu - ld) * e - b1 * b1 / b2 * (lu - ld) * r * e);
        c * (((b1 * (lu - ld)).exp() - 1.0) / b1
            + e * (b1 * (lu * lu - ld * ld) / 2.0 - lu + ld)
            + b1 * b1 * r * e / (b2 * b2) * (lu - ld - b2 * (lu * lu - ld * ld) / 2.0))
    }

    #[test]
    fn rejects_invalid() {
        assert!(DiffusionParams::new(0.0, 0.0, 3.0, 10.0, 0.8).is_err());
        assert!(DiffusionParams::new(0.0, -1.0, 0.0, 10.0, 0.8).is_err());
        assert!(DiffusionParams::new(0.0, -1.0, 3.0, 3.0, 0.8).is_err());
        assert!(DiffusionParams::new(0.0, -1.0, 3.0, 10.0, 0.0).is_err());
        assert!(DiffusionParams::new(f64::NAN, -1.0, 3.0, 10.0, 0.8).is_err());
    }

    #[test]
    fn constants() {
        assert!(rel(c0(&dp(0.0)).unwrap(), 1.0 / 7.3) < 1e-14);
        let bracket = 1.0 - 7f64.exp() + 7.0 * 10f64.exp() + 5.6 * 10f64.exp();
        assert!(rel(c0(&dp(1.0)).unwrap(), 1.0 / bracket) < 1e-13);
        assert!((c0(&dp(1.0)).unwrap() - 3.6175e-6).abs() < 1e-10);
        assert!(rel(limit_sqrtn_pi0(&dp(0.0)).unwrap(), 1.0 / 7.3) < 1e-14);
        assert!(rel(limit_sqrtn_pi0(&dp(1.0)).unwrap(), (7f64.exp() - 1.0) / bracket) < 1e-13);
        assert!((limit_sqrtn_pi0(&dp(1.0)).unwrap() - 3.9634e-3).abs() < 1e-7);
    }

    #[test]
    fn densities_at_reference_points() {
        let law = LimitLaw::new(dp(0.0)).unwrap();
        let c = 1.0 / 7.3;
        assert!(rel(law.density(Region::S11, 1.0), c) < 1e-14);
        assert!(rel(law.density(Region::S21, 5.0), c * 5.0 / 7.0) < 1e-14);
        let f12 = c * 0.8 / 7.0 * (1.0 - (-2f64).exp());
        assert!(rel(law.density(Region::S12, 5.0), f12) < 1e-14);
        let f22 = c * 0.8 / 7.0 * (1.0 - (-7f64).exp()) * (-2f64).exp();
        assert!(rel(law.density(Region::S22, 12.0), f22) < 1e-14);
        assert_eq!(law.density(Region::S11, 3.0), 0.0);
        assert_eq!(law.density(Region::S22, 10.0), 0.0);
        let law1 = LimitLaw::new(dp(1.0)).unwrap();
        assert_eq!(law1.density(Region::S21, 10.0), 0.0);
        // direct evaluation of the b1 != 0 forms
        let c1 = law1.c0;
        let x = 6.5;
        assert!(rel(law1.density(Region::S21, x), c1 * (10f64.exp() - x.exp())) < 1e-12);
        let f12 = c1 * 0.8 / -1.0 * 10f64.exp() * ((-(x - 3.0)).exp() - 1.0);
        assert!(rel(law1.density(Region::S12, x), f12) < 1e-12);
    }

    #[test]
    fn means() {
        assert!(rel(diffusion_mean(&dp(0.0)).unwrap(), (139.0 / 6.0 + 6.0) / 7.3) < 1e-14);
        assert!((diffusion_mean(&dp(1.0)).unwrap() - 6.41817).abs() < 5e-6);
        for b1 in [-3.0, -0.5, 0.7, 2.0] {
            let p = dp(b1);
            assert!(rel(diffusion_mean(&p).unwrap(), naive_mean(&p)) < 1e-11, "b1={b1}");
        }
    }

    #[test]
    fn normalisation_and_mean_by_quadrature() {
        for b1 in [-10.0, -1.0, -1e-7, 0.0, 1e-7, 1.0, 10.0] {
            let law = LimitLaw::new(dp(b1)).unwrap();
            let head = integrate(|x| law.total_density(x), 0.0, 3.0, 1e-13).unwrap()
                + integrate(|x| law.total_density(x), 3.0, 10.0, 1e-13).unwrap();
            let total = head + law.region_mass(Region::S22);
            assert!((total - 1.0).abs() < 1e-11, "b1={b1}: {total}");
            let masses: f64 = Region::ALL.iter().map(|r| law.region_mass(*r)).sum();
            assert!((masses - 1.0).abs() < 1e-13);
            let m = integrate(|x| x * law.total_density(x), 0.0, 3.0, 1e-13).unwrap()
                + integrate(|x| x * law.total_density(x), 3.0, 10.0, 1e-13).unwrap()
                + integrate(|x| x * law.total_density(x), 10.0, 80.0, 1e-13).unwrap();
            assert!(rel(law.mean(), m) < 1e-9, "b1={b1}");
        }
    }

    #[test]
    fn cdf_properties() {
        let law = LimitLaw::new(dp(0.0)).unwrap();
        assert_eq!(law.cdf(-1.0), 0.0);
        assert_eq!(law.cdf(0.0), 0.0);
        assert!(rel(law.cdf(3.0), 3.0 / 7.3) < 1e-14);
        assert!((law.cdf(1e4) - 1.0).abs() < 1e-15);
        for b1 in [-2.0, 0.0, 1.0] {
            let law = LimitLaw::new(dp(b1)).unwrap();
            assert!((law.cdf(10.0) + law.region_mass(Region::S22) - 1.0).abs() < 1e-13);
            let h = 1e-5;
            let mut prev = 0.0;
            for i in 1..400 {
                let x = i as f64 * 0.05;
                let v = law.cdf(x);
                assert!(v >= prev);
                prev = v;
                if (x - 3.0).abs() > 2.0 * h && (x - 10.0).abs() > 2.0 * h {
                    let d = (law.cdf(x + h) - law.cdf(x - h)) / (2.0 * h);
                    assert!((d - law.total_density(x)).abs() < 1e-6, "b1={b1} x={x}");
                }
            }
        }
    }

    #[test]
    fn mgf_duality() {
        for b1 in [-10.0, -1.0, 0.0, 1.0, 10.0] {
            let law = LimitLaw::new(dp(b1)).unwrap();
            for theta in [-1.0, -0.3, -1e-9, 0.0, 0.5, 0.9] {
                // scale by the region mass so tiny components are checked relatively
                for (r, lo, hi) in [
                    (Region::S11, 0.0, 3.0),
                    (Region::S21, 3.0, 10.0),
                    (Region::S12, 3.0, 10.0),
                ] {
                    let m = law.region_mass(r);
                    let q = integrate(|x| (theta * x).exp() * law.density(r, x) / m, lo, hi, 1e-14).unwrap();
                    let v = law.mgf_component(r, theta) / m;
                    assert!(rel(v, q) < 1e-8, "{r} b1={b1} theta={theta}: {v} vs {q}");
                }
                let m = law.region_mass(Region::S22);
                // the neglected tail beyond the cutoff is below e^{-40}
                let cutoff = 10.0 + 40.0 / -(theta + law.params.b2);
                let q = integrate(|x| (theta * x).exp() * law.density(Region::S22, x) / m, 10.0, cutoff, 1e-14)
                    .unwrap();
                let v = law.mgf_component(Region::S22, theta) / m;
                assert!(rel(v, q) < 1e-8, "S22 b1={b1} theta={theta}: {v} vs {q}");
            }
            assert!((law.mgf_component(Region::S11, 0.0) - law.region_mass(Region::S11)).abs() < 1e-15);
            assert_eq!(law.mgf_component(Region::S22, 1.0), f64::INFINITY);
        }
        let law = LimitLaw::new(dp(0.0)).unwrap();
        assert!(rel(law.mgf_component(Region::S11, 0.0), 3.0 / 7.3) < 1e-14);
    }

    #[test]
    fn phi21_two_term_form() {
        let law = LimitLaw::new(dp(1.0)).unwrap();
        let (b1, ld, lu, c) = (1.0f64, 3.0f64, 10.0f64, law.c0);
        for theta in [-0.7f64, 0.4] {
            let t = theta + b1;
            let expect = c * b1
                * (((t * ld).exp() - (t * lu).exp()) / t
                    - (b1 * lu).exp() * ((theta * ld).exp() - (theta * lu).exp()) / theta);
            assert!(rel(law.mgf_component(Region::S21, theta), expect) < 1e-12);
        }
        let law = LimitLaw::new(dp(0.0)).unwrap();
        let theta = 0.3f64;
        let expect = law.c0
            * (theta * (theta * ld).exp() * (ld - lu) + (theta * lu).exp() - (theta * ld).exp())
            / (theta * theta * (lu - ld));
        assert!(rel(law.mgf_component(Region::S21, theta), expect) < 1e-12);
    }

    #[test]
    fn continuity_at_b1_zero() {
        let zero = LimitLaw::new(dp(0.0)).unwrap();
        for b1 in [-1e-7, 1e-7] {
            let law = LimitLaw::new(dp(b1)).unwrap();
            assert!(rel(law.mean(), zero.mean()) < 1e-5);
            assert!(rel(law.limit_sqrtn_pi0(), zero.limit_sqrtn_pi0()) < 1e-5);
            for x in [0.5, 3.0, 6.0, 9.9, 12.0] {
                assert!(rel(law.total_density(x), zero.total_density(x)) < 1e-5);
                assert!(rel(law.cdf(x), zero.cdf(x)) < 1e-5);
            }
            for theta in [-0.5, 0.0, 0.5] {
                assert!(rel(law.mgf(theta), zero.mgf(theta)) < 1e-5);
            }
        }
    }

    #[test]
    fn extreme_drifts_stay_finite() {
        let p = DiffusionParams::new(40.0, -2.0, 20.0, 60.0, 1.0).unwrap();
        let law = LimitLaw::new(p).unwrap();
        let total: f64 = Region::ALL.iter().map(|r| law.region_mass(*r)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(law.mean().is_finite() && law.mean() > 0.0);
        let p = DiffusionParams::new(-40.0, -2.0, 20.0, 60.0, 1.0).unwrap();
        let law = LimitLaw::new(p).unwrap();
        assert!((law.region_mass(Region::S11) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_rows_columns() {
        let law = LimitLaw::new(dp(1.0)).unwrap();
        let rows = law.density_rows(&[0.0, 3.0, 10.0, 11.0]);
        assert_eq!(rows.len(), 4);
        for r in rows {
            assert_eq!(r.f, r.f11 + r.f21 + r.f12 + r.f22);
            assert!(r.f >= 0.0);
        }
    }
}
