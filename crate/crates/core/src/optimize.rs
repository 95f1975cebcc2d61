//! One-dimensional bounded minimisation: a coarse scan to locate the basin
//! followed by Brent's golden-section/parabolic search.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2

/// Brent's method on `[a, b]` (Forsythe, Malcolm & Moler `fmin`).
///
/// Terminates once the bracket around the best point is narrower than
/// `2 * (2 eps |x| + tol / 3)`, so the returned abscissa is within about
/// `tol` of a local minimiser.
pub fn brent_bounded<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("empty bracket [{a}, {b}]")));
    }
    let eps = 2.0 * f64::EPSILON;
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut golden = true;
        if e.abs() > tol1 {
            // parabola through (v, fv), (w, fw), (x, fx)
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;

        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        evaluations,
    })
}

/// Global-then-local minimisation on `[lo, hi]`: evaluate `f` on `points`
/// equally spaced abscissae, then refine with Brent inside the cells adjacent
/// to the best scan point.
///
/// Points where `f` fails are skipped; if every point fails the first error
/// is returned.
pub fn scan_then_refine<F>(mut f: F, lo: f64, hi: f64, points: usize, tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    assert!(points >= 3, "scan needs at least three points");
    let step = (hi - lo) / (points - 1) as f64;
    let at = |i: usize| if i + 1 == points { hi } else { lo + step * i as f64 };

    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    for i in 0..points {
        match f(at(i)) {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((i, scan_value)) = best else {
        return Err(
            first_err.unwrap_or_else(|| Error::InvalidArgument("objective is not finite anywhere on the scan".into()))
        );
    };

    let a = at(i.saturating_sub(1));
    let b = at((i + 1).min(points - 1));
    let local = brent_bounded(&mut f, a, b, tol, 500)?;
    let evaluations = points + local.evaluations;
    // Brent never evaluates the bracket end points, so keep the scan point if
    // it is still better (minimum on the boundary of the domain).
    if scan_value < local.value {
        Ok(Minimum {
            x: at(i),
            value: scan_value,
            evaluations,
        })
    } else {
        Ok(Minimum { evaluations, ..local })
    }
}

/// Refine a minimiser found from function values by locating the zero of
/// the five-point central-difference derivative with step `h` (Illinois
/// regula falsi).
///
/// Function-value comparisons cannot place a smooth minimum closer than about
/// `sqrt(eps)`; the derivative root is resolved to a few ulps. Returns `None`
/// when no sign change brackets `x0` within `[lo + 2h, hi - 2h]`.
pub fn polish_stationary<F>(mut f: F, x0: f64, lo: f64, hi: f64, h: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (lo, hi) = (lo + 2.0 * h, hi - 2.0 * h);
    if !(lo < x0 && x0 < hi) {
        return Ok(None);
    }
    let mut deriv = |x: f64| -> Result<f64> {
        Ok((f(x - 2.0 * h)? - 8.0 * f(x - h)? + 8.0 * f(x + h)? - f(x + 2.0 * h)?) / (12.0 * h))
    };

    let mut width = 1e-8f64.max(4.0 * f64::EPSILON * x0.abs());
    let (mut a, mut b, mut da, mut db);
    loop {
        a = (x0 - width).max(lo);
        b = (x0 + width).min(hi);
        da = deriv(a)?;
        db = deriv(b)?;
        if da <= 0.0 && db >= 0.0 {
            break;
        }
        if (a == lo && b == hi) || width > 1e-3 {
            return Ok(None);
        }
        width *= 10.0;
    }
    if da == 0.0 {
        return Ok(Some(a));
    }
    if db == 0.0 {
        return Ok(Some(b));
    }

    let mut side = 0i8;
    for _ in 0..200 {
        if b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
        let mut c = (a * db - b * da) / (db - da);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let dc = deriv(c)?;
        if dc == 0.0 {
            return Ok(Some(c));
        }
        if dc < 0.0 {
            a = c;
            da = dc;
            if side == -1 {
                db *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            db = dc;
            if side == 1 {
                da *= 0.5;
            }
            side = 1;
        }
    }
    Ok(Some(if -da < db { a } else { b }))
}
