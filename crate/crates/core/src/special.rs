//! Bessel functions of the first kind and a bracketing root finder.

/// `J_0(x) ..= J_max_order(x)` by Miller's backward recurrence, normalised with
/// `J_0 + 2 * sum J_2k = 1`. Accurate to ~1e-15 for moderate `x`.
pub fn bessel_j_sequence(x: f64, max_order: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // start well above both the requested order and the argument
    let mut start = max_order.max(ax.ceil() as usize) + 30 + (10.0 * ax.sqrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0;
    let mut current = 1e-300;
    let mut norm = 0.0;
    let mut scratch = vec![0.0; start + 1];
    scratch[start] = current;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * current - next;
        next = current;
        current = prev;
        scratch[k - 1] = current;
        if current.abs() > 1e250 {
            for v in scratch[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            current *= 1e-250;
        }
    }
    for (k, v) in scratch.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for (k, slot) in out.iter_mut().enumerate() {
        let mut v = scratch[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        *slot = v;
    }
    out
}

/// `J_n(x)` for any integer order, using `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    let n = order.unsigned_abs() as usize;
    let v = bessel_j_sequence(x, n)[n];
    if order < 0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Brent's method on a sign-changing bracket `[a, b]`. Returns `None` when the
/// endpoints do not bracket a root.
pub fn brent_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Some(b)
}
