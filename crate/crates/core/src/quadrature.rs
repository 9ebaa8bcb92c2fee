//! Adaptive Gauss-Kronrod (7/15) integration, used as an independent check
//! on closed-form integrals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;
const MAX_PIECES: usize = 200_000;

/// One 15-point rule on `[a, b]`, returning the estimate and its error bound.
fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[i] * pair;
        // Gauss nodes sit at the odd Kronrod indices
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// `int_a^b f` to absolute accuracy `tol`.
///
/// Intervals are bisected until each piece meets its share of `tol`.
/// Pieces reaching `MAX_DEPTH` bisections are accepted as they are; more
/// than `MAX_PIECES` evaluated pieces is an error.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "integration needs finite limits and a positive tolerance, got [{a}, {b}] tol {tol}"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut pieces = 0usize;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        pieces += 1;
        if pieces > MAX_PIECES {
            return Err(Error::InvalidArgument(format!(
                "integral on [{a}, {b}] did not reach tolerance {tol}"
            )));
        }
        let (v, err) = kronrod(&f, lo, hi);
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("integrand is not finite on [{lo}, {hi}]")));
        }
        // below the roundoff floor further bisection cannot help
        let floor = 50.0 * f64::EPSILON * v.abs();
        if err <= t.max(floor) || depth >= MAX_DEPTH || (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    Ok(total)
}

/// `int_a^inf f` via the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> Result<f64> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}
