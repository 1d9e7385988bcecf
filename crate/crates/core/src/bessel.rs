//! Bessel functions of the first kind, integer order.
//!
//! Miller's downward recurrence `J_{k-1} = (2k/x) J_k - J_{k+1}` started far
//! above the requested order, normalized with `J_0 + 2 Σ_k J_{2k} = 1`.
//! Supported range: `|x| ≤ 30`, order `≤ 60`, absolute error around 1e-15.

use thiserror::Error;

pub const MAX_ARGUMENT: f64 = 30.0;
pub const MAX_ORDER: u32 = 60;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum BesselError {
    #[error("argument {0} outside the supported range |x| <= 30")]
    ArgumentOutOfRange(f64),
    #[error("order {0} exceeds the supported maximum 60")]
    OrderOutOfRange(u32),
}

/// `J_m(x)`.
pub fn bessel_j(m: u32, x: f64) -> Result<f64, BesselError> {
    Ok(bessel_j_table(m, x)?[m as usize])
}

/// `J_n(x)` for any integer order, using `J_{-n}(x) = (-1)^n J_n(x)`.
pub fn bessel_jn(n: i32, x: f64) -> Result<f64, BesselError> {
    let v = bessel_j(n.unsigned_abs(), x)?;
    Ok(if n < 0 && n % 2 != 0 { -v } else { v })
}

/// `[J_0(x), J_1(x), …, J_{max_order}(x)]`.
pub fn bessel_j_table(max_order: u32, x: f64) -> Result<Vec<f64>, BesselError> {
    if !x.is_finite() || x.abs() > MAX_ARGUMENT {
        return Err(BesselError::ArgumentOutOfRange(x));
    }
    if max_order > MAX_ORDER {
        return Err(BesselError::OrderOutOfRange(max_order));
    }
    let len = max_order as usize + 1;
    let mut out = vec![0.0; len];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let ax = x.abs();
    let top = (max_order as f64).max(ax);
    let mut start = (top + 30.0 + (60.0 * top).sqrt()).ceil() as usize;
    start += start % 2;

    // j_next = J_{k+1}, j = J_k (unnormalized)
    let mut j_next = 0.0_f64;
    let mut j = 1e-300_f64;
    let mut norm = 0.0_f64;
    for k in (1..=start).rev() {
        let j_prev = (2.0 * k as f64 / ax) * j - j_next;
        j_next = j;
        j = j_prev;
        let order = k - 1;
        if order < len {
            out[order] = j;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j;
    for (order, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if x < 0.0 && order % 2 == 1 {
            *v = -*v;
        }
    }
    Ok(out)
}
