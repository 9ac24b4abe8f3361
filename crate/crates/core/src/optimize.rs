//! One-dimensional search helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `rel_tol * max(1, |x|)` or after
/// `max_iter` iterations. The endpoints are compared against the interior
/// optimum so that boundary maxima are returned exactly.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64, max_iter: usize) -> Maximum
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo <= hi);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while iterations < max_iter {
        let mid = 0.5 * (a + b);
        if b - a <= rel_tol * mid.abs().max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    let mut best = if fc >= fd {
        Maximum { x: c, value: fc, iterations }
    } else {
        Maximum { x: d, value: fd, iterations }
    };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.value {
            best = Maximum { x, value: v, iterations };
        }
    }
    best
}
