//! Adaptive Gauss–Kronrod (7, 15) quadrature.

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

/// Kronrod estimate and `|Kronrod − Gauss|` on one interval.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Integrates `f` over `[a, b]` by bisecting the interval with the largest
/// error estimate until the total estimate is below `rel_tol·|value|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, max_intervals: usize) -> Quadrature {
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= rel_tol * value.abs() || parts.len() >= max_intervals {
            return Quadrature { value, error, intervals: parts.len() };
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `∫₀^∞ f(r) dr` through `r = t / (1 − t)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> Quadrature {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            f(t / s) / (s * s)
        },
        0.0,
        1.0,
        rel_tol,
        10_000,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x| x.powi(20) - 3.0 * x.powi(7) + 1.0, -1.0, 2.0, 1e-14, 1);
        let exact = (2f64.powi(21) + 1.0) / 21.0 - 3.0 * (2f64.powi(8) - 1.0) / 8.0 + 3.0;
        assert!((q.value - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn half_line_integrals() {
        let q = integrate_half_line(|r| 1.0 / (1.0 + r * r), 1e-13);
        assert!((q.value - PI / 2.0).abs() < 1e-12);
        let q = integrate_half_line(|r| (-r * r).exp(), 1e-13);
        assert!((q.value - PI.sqrt() / 2.0).abs() < 1e-12);
    }
}
