//! Independent oracles shared by integration tests. Nothing here calls into the crate's
//! numerical routines; only elementary quadrature and enumeration.
#![allow(dead_code)]

pub mod coulomb;

pub mod plaquette {
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    /// Composite Simpson rule with `n` (even) panels.
    pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    /// Simpson over consecutive breakpoints.
    fn piecewise(f: &impl Fn(f64) -> f64, breaks: &[f64], n: usize) -> f64 {
        breaks.windows(2).map(|w| simpson(f, w[0], w[1], n)).sum()
    }

    fn binom(n: i32, k: i32) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// Density of the sum of `r` independent uniforms on `[-pi, pi)`.
    pub fn sum_uniform_density(r: i32, s: f64) -> f64 {
        let y = s / TWO_PI + r as f64 / 2.0;
        if y <= 0.0 || y >= r as f64 {
            return 0.0;
        }
        let fact: f64 = (1..r).map(|i| i as f64).product();
        let v: f64 = (0..=r)
            .map(|k| {
                let t = y - k as f64;
                if t > 0.0 {
                    (-1f64).powi(k) * binom(r, k) * t.powi(r - 1)
                } else {
                    0.0
                }
            })
            .sum();
        v / fact / TWO_PI
    }

    fn wrap(x: f64) -> f64 {
        x - TWO_PI * ((x + PI) / TWO_PI).floor()
    }

    /// `sum_m h(s, m) exp(-beta/2 (s + 2 pi m)^2)`.
    fn villain_sum(beta: f64, s: f64, h: &impl Fn(f64, i64) -> f64) -> f64 {
        let centre = (-s / TWO_PI).round() as i64;
        (centre - 8..=centre + 8)
            .map(|m| {
                let x = s + TWO_PI * m as f64;
                h(s, m) * (-0.5 * beta * x * x).exp()
            })
            .sum()
    }

    /// Moments of the one-face coupling on a lattice with a single face and four edges.
    #[derive(Clone, Copy, Debug)]
    pub struct FaceMoments {
        /// E[phi], E[phi^2], E[phi^4] for phi = d theta wrapped to [-pi, pi).
        pub phi: [f64; 3],
        /// E[m], E[m^2].
        pub m: [f64; 2],
    }

    pub fn single_plaquette(beta: f64) -> FaceMoments {
        let breaks = [-4.0 * PI, -2.0 * PI, 0.0, 2.0 * PI, 4.0 * PI];
        let expect = |h: &dyn Fn(f64, i64) -> f64| {
            let num = piecewise(&|s| sum_uniform_density(4, s) * villain_sum(beta, s, &|s, m| h(s, m)), &breaks, 4000);
            let den = piecewise(&|s| sum_uniform_density(4, s) * villain_sum(beta, s, &|_, _| 1.0), &breaks, 4000);
            num / den
        };
        FaceMoments {
            phi: [expect(&|s, _| wrap(s)), expect(&|s, _| wrap(s).powi(2)), expect(&|s, _| wrap(s).powi(4))],
            m: [expect(&|_, m| m as f64), expect(&|_, m| (m * m) as f64)],
        }
    }

    /// Two faces sharing one edge, each with three private edges. The shared edge enters the
    /// two faces with opposite orientation signs.
    #[derive(Clone, Copy, Debug)]
    pub struct TwoFaceMoments {
        pub face: FaceMoments,
        /// E[phi_1 phi_2], E[phi_1^2 phi_2^2], E[m_1 m_2].
        pub cross: [f64; 3],
    }

    pub fn two_plaquette(beta: f64, sign_product: f64) -> TwoFaceMoments {
        let breaks = [-3.0 * PI, -PI, PI, 3.0 * PI];
        // C_h(t) = int rho_3(u) sum_m h(u + t, m) w(u + t + 2 pi m) du
        let conv = |h: &dyn Fn(f64, i64) -> f64, t: f64| {
            piecewise(&|u| sum_uniform_density(3, u) * villain_sum(beta, u + t, &|s, m| h(s, m)), &breaks, 600)
        };
        let one = |_: f64, _: i64| 1.0;
        let nt = 400;
        let tgrid: Vec<f64> = (0..=nt).map(|i| -PI + TWO_PI * i as f64 / nt as f64).collect();
        let c1: Vec<f64> = tgrid.iter().map(|&t| conv(&one, t)).collect();
        let cphi: Vec<f64> = tgrid.iter().map(|&t| conv(&|s, _| wrap(s), t)).collect();
        let cphi2: Vec<f64> = tgrid.iter().map(|&t| conv(&|s, _| wrap(s).powi(2), t)).collect();
        let cphi4: Vec<f64> = tgrid.iter().map(|&t| conv(&|s, _| wrap(s).powi(4), t)).collect();
        let cm: Vec<f64> = tgrid.iter().map(|&t| conv(&|_, m| m as f64, t)).collect();
        let cm2: Vec<f64> = tgrid.iter().map(|&t| conv(&|_, m| (m * m) as f64, t)).collect();
        // Simpson over the t grid; odd-in-t factors pick up the orientation sign of face 2
        let integ = |a: &[f64], b: &[f64], sign: f64| {
            let h = TWO_PI / nt as f64;
            let mut s = 0.0;
            for i in 0..=nt {
                let w = if i == 0 || i == nt { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                // face 2 sees the shared edge with the opposite sign: evaluate its factor at -t
                let j = if sign < 0.0 { nt - i } else { i };
                s += w * a[i] * b[j];
            }
            s * h / 3.0
        };
        let z = integ(&c1, &c1, sign_product);
        TwoFaceMoments {
            face: FaceMoments {
                phi: [integ(&cphi, &c1, sign_product) / z, integ(&cphi2, &c1, sign_product) / z, integ(&cphi4, &c1, sign_product) / z],
                m: [integ(&cm, &c1, sign_product) / z, integ(&cm2, &c1, sign_product) / z],
            },
            cross: [
                integ(&cphi, &cphi, sign_product) / z,
                integ(&cphi2, &cphi2, sign_product) / z,
                integ(&cm, &cm, sign_product) / z,
            ],
        }
    }

    #[cfg(test)]
    mod checks {
        #[allow(unused_imports)]
        use super::*;

        #[test]
        fn densities_normalized() {
            for r in 2..=4 {
                let b = r as f64 * PI;
                let v = simpson(|s| sum_uniform_density(r, s), -b, b, 20000);
                assert!((v - 1.0).abs() < 1e-8);
            }
        }
    }
}
