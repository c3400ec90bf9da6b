use std::f64::consts::PI;

use novikov_core::grid::{fd_derivative, integrate, prefix_integral};
use novikov_core::metric::{tangent_norm, EtaSearch, NormOptions, TangentVector};
use novikov_core::nonlocal::{assemble_sources_with, kernel_accumulator};
use novikov_core::singular::{analyze_state, swapped_case, SingularOptions};
use novikov_core::*;
use proptest::prelude::*;

/// Smooth localized field built from two Gaussians.
#[derive(Debug, Clone, Copy)]
struct Bumps {
    a: [f64; 2],
    c: [f64; 2],
    w: [f64; 2],
}

impl Bumps {
    fn eval(&self, x: f64) -> f64 {
        (0..2).map(|i| self.a[i] * (-((x - self.c[i]) / self.w[i]).powi(2)).exp()).sum()
    }
}

fn bumps(amp: f64) -> impl Strategy<Value = Bumps> {
    (
        [-amp..amp, -amp..amp],
        [-3.0..3.0f64, -3.0..3.0f64],
        [0.6..2.0f64, 0.6..2.0f64],
    )
        .prop_map(|(a, c, w)| Bumps { a, c, w })
}

fn tangent_bumps() -> impl Strategy<Value = [Bumps; 5]> {
    [bumps(1.0), bumps(1.0), bumps(1.0), bumps(1.0), bumps(1.0)]
}

fn random_state(grid: Grid, f: [Bumps; 5]) -> TransformedState {
    let mut s = TransformedState::zero(grid);
    s.u = grid.sample(|x| f[0].eval(x));
    s.v = grid.sample(|x| f[1].eval(x));
    s.w = grid.sample(|x| 2.0 * f[2].eval(x).atan());
    s.z = grid.sample(|x| 2.0 * f[3].eval(x).atan());
    s.q = grid.sample(|x| 1.0 + 0.5 * f[4].eval(x).tanh());
    s
}

fn state_strategy(n: usize) -> impl Strategy<Value = TransformedState> {
    [bumps(1.5), bumps(1.5), bumps(3.0), bumps(3.0), bumps(1.0)]
        .prop_map(move |f| random_state(Grid::new(-12.0, 12.0, n).unwrap(), f))
}

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![
        (0.05..1.0f64, -2.0..2.0f64, 0.5..2.0f64)
            .prop_map(|(a, c, w)| Profile::GaussianBump { amplitude: a, center: c, width: w }),
        (0.05..1.0f64, -2.0..2.0f64, 0.5..2.0f64)
            .prop_map(|(a, c, w)| Profile::SechBump { amplitude: a, center: c, width: w }),
        (0.1..1.0f64, -1.0..1.0f64).prop_map(|(c, x0)| Profile::Peakon { c, x0 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prefix_end_equals_integral(v in prop::collection::vec(-1e3..1e3f64, 2..300)) {
        let g = Grid::new(-1.0, 2.0, v.len()).unwrap();
        prop_assert_eq!(*prefix_integral(&v, &g).unwrap().last().unwrap(), integrate(&v, &g).unwrap());
    }

    #[test]
    fn integrate_is_linear(
        f in prop::collection::vec(-10.0..10.0f64, 50),
        h in prop::collection::vec(-10.0..10.0f64, 50),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
    ) {
        let g = Grid::new(0.0, 1.0, 50).unwrap();
        let mix: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
        let lhs = integrate(&mix, &g).unwrap();
        let rhs = a * integrate(&f, &g).unwrap() + b * integrate(&h, &g).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
    }

    #[test]
    fn fd_exact_on_polynomials(c in prop::collection::vec(-2.0..2.0f64, 5), order in 1usize..=4) {
        let g = Grid::new(-1.0, 1.5, 41).unwrap();
        let p = |x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        let exact = |x: f64| {
            (order..5).map(|k| {
                let fall: f64 = (0..order).map(|j| (k - j) as f64).product();
                c[k] * fall * x.powi((k - order) as i32)
            }).sum::<f64>()
        };
        let d = fd_derivative(&g.sample(p), &g, order).unwrap();
        let tol = 1e-9 * g.dx().powi(-(order as i32));
        for k in 0..g.n() {
            prop_assert!((d[k] - exact(g.node(k))).abs() < tol, "order {} node {}", order, k);
        }
    }

    #[test]
    fn y0_increasing_and_symmetric_data_bitwise(p in profile(), q in profile()) {
        let g = Grid::new(-8.0, 8.0, 161).unwrap();
        let (_, y) = direct_transform(&EulerDatum::new(p.clone(), q).unwrap(), &g).unwrap();
        prop_assert!(y.windows(2).all(|w| w[1] > w[0]));
        let (s, _) = direct_transform(&EulerDatum::symmetric(p).unwrap(), &g).unwrap();
        prop_assert_eq!(&s.u, &s.v);
        prop_assert_eq!(&s.w, &s.z);
    }

    #[test]
    fn kernel_symmetric_and_normalized(s in state_strategy(64)) {
        let acc = kernel_accumulator(&s, Quadrature::Corrected).unwrap();
        for i in 0..s.n() {
            prop_assert_eq!(acc.kernel(i, i), 1.0);
            for j in 0..s.n() {
                let e = acc.kernel(i, j);
                prop_assert!(e > 0.0 && e <= 1.0);
                prop_assert_eq!(e, acc.kernel(j, i));
            }
        }
    }

    #[test]
    fn scan_matches_bruteforce(s in state_strategy(256), p in prop::collection::vec(-1.0..1.0f64, 256)) {
        let acc = kernel_accumulator(&s, Quadrature::Trapezoid).unwrap();
        let (e1, o1) = exp_convolve(&p, &acc, &s.grid).unwrap();
        let (e2, o2) = exp_convolve_bruteforce(&p, &acc, &s.grid).unwrap();
        for k in 0..s.n() {
            prop_assert!((e1[k] - e2[k]).abs() < 1e-12);
            prop_assert!((o1[k] - o2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_exchanges_sources(s in state_strategy(128)) {
        let a = assemble_sources_with(&s, Quadrature::Corrected).unwrap();
        let b = assemble_sources_with(&s.swapped(), Quadrature::Corrected).unwrap();
        prop_assert_eq!(&a.p1, &b.s1);
        prop_assert_eq!(&a.dx_p1, &b.dx_s1);
        prop_assert_eq!(&a.p2, &b.s2);
        prop_assert_eq!(&a.dx_p2, &b.dx_s2);
        prop_assert_eq!(&a.s1, &b.p1);
        prop_assert_eq!(&a.dx_s2, &b.dx_p2);
    }

    #[test]
    fn norm_axioms(s in state_strategy(96), r1 in tangent_bumps(), r2 in tangent_bumps(), lambda in -4.0..4.0f64) {
        let g = s.grid;
        let tv = |f: [Bumps; 5]| TangentVector {
            r: g.sample(|x| f[0].eval(x)),
            s: g.sample(|x| f[1].eval(x)),
            a: g.sample(|x| f[2].eval(x)),
            b: g.sample(|x| f[3].eval(x)),
            q: g.sample(|x| f[4].eval(x)),
        };
        let (t1, t2) = (tv(r1), tv(r2));
        let y = prefix_integral(&s.y_xi(), &g).unwrap();
        let o = NormOptions::default();
        let n1 = tangent_norm(&s, &y, &t1, &o).unwrap().value;
        let n2 = tangent_norm(&s, &y, &t2, &o).unwrap().value;
        let nl = tangent_norm(&s, &y, &t1.scale(lambda), &o).unwrap().value;
        let ns = tangent_norm(&s, &y, &t1.add(&t2), &o).unwrap().value;
        prop_assert!((nl - lambda.abs() * n1).abs() <= 1e-12 * (1.0 + nl));
        prop_assert!(ns <= (n1 + n2) * (1.0 + 1e-12));
        let d = tangent_norm(&s, &y, &t1, &NormOptions { search: EtaSearch::CoarseDescent, iterations: 40, ..o }).unwrap();
        prop_assert!(d.value <= d.eta_zero);
        prop_assert!(d.log.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn classification_exhaustive_and_swap_symmetric(
        w_slope in 0.2..2.0f64, z_slope in 0.2..2.0f64,
        w_curv in 0.5..2.0f64, z_curv in 0.5..2.0f64,
        mode in 0usize..8,
    ) {
        let g = Grid::new(-2.0, 2.0, 201).unwrap();
        let (wpi, wflat, zpi, zflat) = [
            (true, false, false, false), (false, false, true, false), (true, false, true, false),
            (true, true, false, false), (false, false, true, true), (true, true, true, false),
            (true, false, true, true), (true, true, true, true),
        ][mode];
        let field = |at_pi: bool, flat: bool, slope: f64, curv: f64| -> Vec<f64> {
            g.sample(|x| match (at_pi, flat) {
                (false, _) => 0.3 + 0.1 * x,
                (true, false) => PI + slope * x,
                (true, true) => PI - curv * x * x,
            })
        };
        let mut s = TransformedState::zero(g);
        s.w = field(wpi, wflat, w_slope, w_curv);
        s.z = field(zpi, zflat, z_slope, z_curv);
        let y = prefix_integral(&s.y_xi(), &g).unwrap();
        let o = SingularOptions::default();
        let pts = analyze_state(&s, &y, &o).unwrap();
        let at0: Vec<_> = pts.iter().filter(|p| p.xi_star.abs() < 1e-6).collect();
        prop_assert_eq!(at0.len(), 1);
        let label = at0[0].case_label.unwrap();
        prop_assert_eq!(label as usize, mode + 1);
        for p in &pts {
            prop_assert!(p.case_label.is_some() || p.degenerate);
        }
        let sw = analyze_state(&s.swapped(), &y, &o).unwrap();
        let sw0: Vec<_> = sw.iter().filter(|p| p.xi_star.abs() < 1e-6).collect();
        prop_assert_eq!(sw0[0].case_label, Some(swapped_case(label)));
    }

    #[test]
    fn graph_is_monotone(p in profile(), q in profile()) {
        let g = Grid::new(-8.0, 8.0, 161).unwrap();
        let (s, y) = direct_transform(&EulerDatum::new(p, q).unwrap(), &g).unwrap();
        let f = euler_fields(&s, &y).unwrap();
        prop_assert!(f.x.windows(2).all(|w| w[1] >= w[0]));
    }
}
