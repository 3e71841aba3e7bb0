//! Quadrature rules on the reference interval and reference triangle.

/// Gauss–Legendre points and weights on `[0, 1]`.
///
/// Supports 1 to 5 points; a rule with `n` points integrates polynomials of
/// degree `2n - 1` exactly.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let (xs, ws): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => {
            const A: f64 = 0.577_350_269_189_625_8;
            (&[-A, A], &[1.0, 1.0])
        }
        3 => {
            const A: f64 = 0.774_596_669_241_483_4;
            (&[-A, 0.0, A], &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683,
                0.0,
                0.538_469_310_105_683,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => panic!("gauss_legendre_unit supports 1..=5 points, got {n}"),
    };
    xs.iter()
        .zip(ws)
        .map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Barycentric points and weights (summing to 1) of the 3-point interior rule,
/// exact for quadratics.
pub const TRIANGLE_DEGREE2: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_monomials_exactly() {
        for n in 1..=5 {
            let rule = gauss_legendre_unit(n);
            for p in 0..(2 * n) {
                let q: f64 = rule.iter().map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_rule_is_degree_two() {
        // reference triangle (0,0),(1,0),(0,1): integral of x^a y^b = a! b! / (a+b+2)!
        let exact = |a: i32, b: i32| -> f64 {
            let f = |k: i32| (1..=k).map(|i| i as f64).product::<f64>();
            f(a) * f(b) / f(a + b + 2)
        };
        for (a, b) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let q: f64 = TRIANGLE_DEGREE2
                .iter()
                .map(|(l, w)| {
                    let (x, y) = (l[1], l[2]);
                    0.5 * w * x.powi(a) * y.powi(b)
                })
                .sum();
            assert!((q - exact(a, b)).abs() < 1e-15);
        }
    }
}
