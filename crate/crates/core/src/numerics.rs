//! Cancellation-free building blocks for geometric sums and exponential
//! moment integrals.
//!
//! Every closed form in this crate is rewritten in terms of these helpers so
//! that the removable singularities (`rho1 = 1`, `theta = 0`, `b1 = 0`, ...)
//! are evaluated without catastrophic cancellation.

/// `expm1(y) / y`, continuously extended by 1 at `y = 0`.
pub fn exprel(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.exp_m1() / y
    }
}

/// Natural log of [`exprel`], safe for large `|y|`.
pub fn ln_exprel(y: f64) -> f64 {
    if y > 50.0 {
        y - y.ln() + (-(-y).exp()).ln_1p()
    } else if y < -50.0 {
        (-(y.exp())).ln_1p() - (-y).ln()
    } else {
        exprel(y).ln()
    }
}

/// `e^y - 1 - y`.
pub fn expm1_minus_x(y: f64) -> f64 {
    if y.abs() < 0.5 {
        let mut term = y * y / 2.0;
        let mut sum = term;
        for j in 3..40 {
            term *= y / j as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        y.exp_m1() - y
    }
}

/// Partial geometric sum `sum_{j=0}^{m-1} e^{j y}`.
///
/// Written as `m * exprel(m y) / exprel(y)`, which is exact at `y = 0` and
/// loses no precision as `y -> 0`.
pub fn geom_sum(m: u64, y: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    mf * exprel(mf * y) / exprel(y)
}

/// Natural log of [`geom_sum`]; `-inf` for `m = 0`.
pub fn ln_geom_sum(m: u64, y: f64) -> f64 {
    if m == 0 {
        return f64::NEG_INFINITY;
    }
    let mf = m as f64;
    mf.ln() + ln_exprel(mf * y) - ln_exprel(y)
}

/// `P_k(y) = int_0^1 t^k e^{y t} dt`.
pub fn p_moment(k: u32, y: f64) -> f64 {
    let kf = k as f64;
    if y >= 0.0 {
        // sum_j y^j / (j! (j + k + 1)), all terms positive
        let mut fact_term = 1.0; // y^j / j!
        let mut sum = 0.0;
        let mut j = 0u32;
        loop {
            let term = fact_term / (j as f64 + kf + 1.0);
            sum += term;
            if (j as f64) > y && term <= 1e-18 * sum {
                break;
            }
            j += 1;
            fact_term *= y / j as f64;
            if !fact_term.is_finite() {
                return f64::INFINITY;
            }
        }
        sum
    } else {
        let a = -y;
        if a > 700.0 {
            // k! / a^{k+1}; the e^{-a} correction is below f64 resolution
            let mut v = 1.0 / a;
            for i in 1..=k {
                v *= i as f64 / a;
            }
            return v;
        }
        // e^{-a} sum_j a^j k! / (j + k + 1)!, all terms positive
        let mut term = 1.0 / (kf + 1.0);
        let mut sum = 0.0;
        let mut j = 0u32;
        loop {
            sum += term;
            if (j as f64) > a && term <= 1e-18 * sum {
                break;
            }
            term *= a / (j as f64 + kf + 2.0);
            j += 1;
        }
        (-a).exp() * sum
    }
}

/// `Q_k(y) = int_0^1 t^k exprel(y t) dt` for `k >= 1`.
pub fn q_moment(k: u32, y: f64) -> f64 {
    debug_assert!(k >= 1);
    let kf = k as f64;
    if y <= -1.0 {
        return (p_moment(k - 1, y) - 1.0 / kf) / y;
    }
    // sum_j y^j / ((j+1)! (j + k + 1))
    let mut fact_term = 1.0; // y^j / (j+1)!
    let mut sum = 0.0;
    let mut j = 0u32;
    loop {
        let term = fact_term / (j as f64 + kf + 1.0);
        sum += term;
        if (j as f64) > y && term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        j += 1;
        fact_term *= y / (j as f64 + 1.0);
        if !fact_term.is_finite() {
            return f64::INFINITY;
        }
    }
    sum
}

/// `int_0^width e^{theta v} (e^{c v} - 1) / c dv`, continuous in `c` at 0.
pub fn exp_expm1_integral(theta: f64, c: f64, width: f64) -> f64 {
    if (c * width).abs() >= 0.5 {
        width * (exprel((theta + c) * width) - exprel(theta * width)) / c
    } else {
        // (e^{cv}-1)/c = sum_{k>=1} c^{k-1} v^k / k!
        let y = theta * width;
        let mut coef = width * width; // c^{k-1} width^{k+1} / k!
        let mut sum = 0.0;
        for k in 1..60u32 {
            let term = coef * p_moment(k, y);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coef *= c * width / (k + 1) as f64;
        }
        sum
    }
}
