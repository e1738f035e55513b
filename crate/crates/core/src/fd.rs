//! Central finite differences.

use nalgebra::{DMatrix, DVector};

const EPS: f64 = f64::EPSILON;

/// Per-coordinate step scales `max(|x_i|, floor)`.
pub fn magnitude_scales(x: &[f64], floor: f64) -> Vec<f64> {
    x.iter().map(|v| v.abs().max(floor)).collect()
}

fn step(x: f64, power: f64, scale: f64) -> f64 {
    let h = EPS.powf(power) * scale;
    // Make x + h exactly representable so the difference quotient uses the true step.
    let t = x + h;
    t - x
}

/// Central-difference gradient with steps `eps^(1/3) * scale_i`.
pub fn gradient<F>(f: F, x: &[f64], scale: &[f64]) -> DVector<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut work = x.to_vec();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = step(x[i], 1.0 / 3.0, scale[i]);
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        }),
    )
}

/// Central-difference Hessian with steps `eps^(1/4) * scale_i`, symmetric by construction.
pub fn hessian<F>(f: F, x: &[f64], scale: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().zip(scale).map(|(&xi, &s)| step(xi, 0.25, s)).collect();
    let f0 = f(x);
    let mut work = x.to_vec();
    let eval = |work: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            work[i] = x[i] + d;
        }
        let v = f(work);
        for &(i, _) in moves {
            work[i] = x[i];
        }
        v
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let up = eval(&mut work, &[(i, h[i])]);
        let down = eval(&mut work, &[(i, -h[i])]);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&mut work, &[(i, h[i]), (j, h[j])]);
            let pm = eval(&mut work, &[(i, h[i]), (j, -h[j])]);
            let mp = eval(&mut work, &[(i, -h[i]), (j, h[j])]);
            let mm = eval(&mut work, &[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> f64 {
        3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - 0.5 * x[1] * x[1] + x[0]
    }

    #[test]
    fn quadratic_derivatives() {
        let x = [0.7, -1.3];
        let s = magnitude_scales(&x, 1.0);
        let g = gradient(quad, &x, &s);
        assert!((g[0] - (6.0 * 0.7 + 2.0 * -1.3 + 1.0)).abs() < 1e-8);
        assert!((g[1] - (2.0 * 0.7 + 1.3)).abs() < 1e-8);
        let h = hessian(quad, &x, &s);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] + 1.0).abs() < 1e-5);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn small_scale_arguments() {
        let f = |x: &[f64]| (x[0] * 1e4).sin();
        let x = [3e-5];
        let g = gradient(f, &x, &magnitude_scales(&x, 1e-12));
        assert!((g[0] - 1e4 * (0.3f64).cos()).abs() / 1e4 < 1e-7);
    }
}
