use fraclab_core::kernels::*;
use fraclab_core::lattice::*;
use proptest::prelude::*;

fn unit(dim: usize, m: u32) -> Grid {
    Grid::unit(dim, m).unwrap()
}

fn linear_1d(m: u32) -> ScalarField {
    sample_field(&FieldSpec::Linear { slope: vec![1.0], offset: 0.0 }, &unit(1, m)).unwrap()
}

fn form(f: &ScalarField, delta: f64, p: f64) -> f64 {
    gagliardo_form(&KernelJob::new(f, delta, p)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn constant_field_has_zero_form() {
    let f = ScalarField::constant(unit(2, 4), 3.0).unwrap();
    let g = vec![2.0; 256];
    for (delta, p) in [(0.3, 1.0), (0.5, 2.0), (0.9, 1.5)] {
        assert_eq!(form(&f, delta, p), 0.0);
        assert_eq!(gagliardo_form(&KernelJob::new(&f, delta, p).with_outer(&g)).unwrap(), 0.0);
    }
}

#[test]
fn linear_closed_form() {
    // 2 / ((1 - δ)(2 - δ)) at δ = 1/2
    let got = form(&linear_1d(12), 0.5, 1.0);
    assert!(rel(got, 8.0 / 3.0) < 0.02, "{got}");
}

#[test]
fn half_indicator_closed_form() {
    let f = sample_field(&FieldSpec::Ramp { axis: 0, cut: 0.5, width: 0.0 }, &unit(1, 12)).unwrap();
    let got = form(&f, 0.5, 1.0);
    assert!(rel(got, 8.0 * (2f64.sqrt() - 1.0)) < 0.05, "{got}");
}

#[test]
fn bbm_probe_values() {
    let f = linear_1d(12);
    let rows = bbm_probe(&f, None, &[0.5, 0.99], 1.0).unwrap();
    assert!(rel(rows[0].1, 4.0 / 3.0) < 0.02);
    assert!(rel(rows[1].1, 2.0 / 1.01) < 0.03);
    let c = ScalarField::constant(unit(1, 6), 1.0).unwrap();
    for (_, v) in bbm_probe(&c, None, &[0.2, 0.5, 0.9], 1.0).unwrap() {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn dilation_scales_by_t_to_the_n_minus_delta() {
    for (dim, m) in [(1usize, 8u32), (2, 4)] {
        for delta in [0.3, 0.5, 0.8] {
            let small = sample_field(&FieldSpec::Linear { slope: vec![1.0; dim], offset: 0.0 }, &unit(dim, m))
                .unwrap();
            let big_grid = Grid::new(Cube::new(&vec![0.0; dim], 2.0).unwrap(), m).unwrap();
            let big = sample_field(&FieldSpec::Linear { slope: vec![0.5; dim], offset: 0.0 }, &big_grid)
                .unwrap();
            let ratio = form(&big, delta, 1.0) / form(&small, delta, 1.0);
            assert!(rel(ratio, 2f64.powf(dim as f64 - delta)) < 1e-10, "{dim} {delta} {ratio}");
        }
    }
}

#[test]
fn form_grows_with_delta_for_contractions() {
    let f = linear_1d(9);
    let mut last = 0.0;
    for delta in [0.1, 0.3, 0.5, 0.7, 0.9, 0.95] {
        let v = form(&f, delta, 1.0);
        assert!(v >= last);
        last = v;
    }
}

/// `Σ_x avg_{y in shell(x)} |1_E(x) - 1_E(y)|` over all pairs, no stencils.
fn annulus_oracle(set: &CellSet, k: u32, s: f64) -> f64 {
    let g = *set.grid();
    let outer = (g.cells_per_axis() >> k) as i64;
    let inner = outer / 2;
    let mut total = 0.0;
    for x in 0..g.len() {
        let cx = g.coords(x);
        let (mut t, mut d) = (0u64, 0u64);
        for y in 0..g.len() {
            let cy = g.coords(y);
            let r2: i64 = (0..3).map(|a| (cx[a] as i64 - cy[a] as i64).pow(2)).sum();
            if r2 >= inner * inner && r2 < outer * outer {
                t += 1;
                if set.contains(x) != set.contains(y) {
                    d += 1;
                }
            }
        }
        if t > 0 {
            total += d as f64 / t as f64;
        }
    }
    2f64.powf(k as f64 + s) * total / g.len() as f64
}

#[test]
fn annulus_form_matches_direct_summation() {
    let half = CellSet::from_fn(unit(2, 6), |x| x[0] < 0.5);
    let got = annulus_form(&half, None, 1, 0.0).unwrap();
    assert!((got - annulus_oracle(&half, 1, 0.0)).abs() < 1e-12);

    let ball = CellSet::from_fn(unit(2, 5), |x| (x[0] - 0.4).hypot(x[1] - 0.6) < 0.3);
    for k in 1..=3 {
        let got = annulus_form(&ball, None, k, 0.5).unwrap();
        assert!((got - annulus_oracle(&ball, k, 0.5)).abs() < 1e-12);
    }

    for e in [CellSet::from_fn(unit(2, 5), |_| false), CellSet::from_fn(unit(2, 5), |_| true)] {
        assert_eq!(annulus_form(&e, None, 2, 0.0).unwrap(), 0.0);
    }
    let s0 = annulus_form(&half, None, 2, 0.0).unwrap();
    let s1 = annulus_form(&half, None, 2, 1.0).unwrap();
    assert!((s1 / s0 - 2.0).abs() < 1e-14);
}

#[test]
fn riesz_of_lebesgue_at_the_boundary() {
    let g = unit(1, 12);
    let mu = CellMeasure::lebesgue(g);
    let i = riesz_potential(&mu, 0.5).unwrap();
    assert!(rel(i.values()[0], 2.0) < 0.03, "{}", i.values()[0]);
    let zero = CellMeasure::new(g, vec![0.0; g.len()]).unwrap();
    assert!(riesz_potential(&zero, 0.5).unwrap().values().iter().all(|&v| v == 0.0));
}

fn masses(dim: usize, m: u32) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], 1usize << (m as usize * dim))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn form_symmetries(v in prop::collection::vec(-2.0f64..2.0, 64), shift in -5.0f64..5.0, delta in 0.1f64..0.9, p in 1.0f64..2.5) {
        let g = unit(2, 3);
        let f = ScalarField::new(g, v.clone()).unwrap();
        let neg = f.map(|x| -x).unwrap();
        let moved = f.map(|x| x + shift).unwrap();
        let a = form(&f, delta, p);
        prop_assert!(rel(form(&neg, delta, p), a) < 1e-12);
        prop_assert!(rel(form(&moved, delta, p), a) < 1e-9);
    }

    #[test]
    fn riesz_additive_and_monotone(a in masses(2, 3), b in masses(2, 3), alpha in 0.2f64..1.8) {
        let g = unit(2, 3);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ia = riesz_potential(&CellMeasure::new(g, a).unwrap(), alpha).unwrap();
        let ib = riesz_potential(&CellMeasure::new(g, b).unwrap(), alpha).unwrap();
        let is = riesz_potential(&CellMeasure::new(g, sum).unwrap(), alpha).unwrap();
        for i in 0..g.len() {
            let want = ia.values()[i] + ib.values()[i];
            prop_assert!((is.values()[i] - want).abs() <= 1e-12 * want.max(1e-300));
            prop_assert!(ia.values()[i] <= is.values()[i] * (1.0 + 1e-12));
        }
    }
}
