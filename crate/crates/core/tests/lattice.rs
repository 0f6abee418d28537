use fraclab_core::lattice::*;
use proptest::prelude::*;

fn unit(dim: usize, m: u32) -> Grid {
    Grid::unit(dim, m).unwrap()
}

fn field(g: Grid, values: Vec<f64>) -> ScalarField {
    ScalarField::new(g, values).unwrap()
}

#[test]
fn grid_centres() {
    let g = unit(1, 2);
    let c: Vec<f64> = (0..g.len()).map(|i| g.center(i)[0]).collect();
    assert_eq!(c, vec![0.125, 0.375, 0.625, 0.875]);

    let g = unit(2, 0);
    assert_eq!(g.len(), 1);
    assert_eq!(&g.center(0)[..2], &[0.5, 0.5]);

    let g = Grid::new(Cube::new(&[-1.0], 2.0).unwrap(), 1).unwrap();
    assert_eq!(g.width(), 1.0);
    assert_eq!([g.center(0)[0], g.center(1)[0]], [-0.5, 0.5]);
}

#[test]
fn sampled_fields() {
    let g = unit(1, 1);
    let f = sample_field(&FieldSpec::Linear { slope: vec![1.0], offset: 0.0 }, &g).unwrap();
    assert_eq!(f.values(), &[0.25, 0.75]);

    // a cell centre at distance e^{-3} from the log centre
    let g = Grid::new(Cube::new(&[-0.5], 1.0).unwrap(), 0).unwrap();
    let at = -(-3f64).exp();
    let f = sample_field(
        &FieldSpec::LogRadial { k: Some(2.0), center: Some(vec![at]) },
        &g,
    )
    .unwrap();
    assert_eq!(f.values(), &[2.0]);

    let f = sample_field(&FieldSpec::Constant { value: 5.0 }, &unit(2, 3)).unwrap();
    assert!(f.values().iter().all(|&v| v == 5.0));
}

#[test]
fn sampled_measures() {
    for m in [0, 3, 7] {
        let mu = sample_measure(&MeasureSpec::Lebesgue, &unit(2, m)).unwrap();
        let hv = unit(2, m).cell_volume();
        assert!(mu.masses().iter().all(|&v| v == hv));
        assert!((mu.total() - 1.0).abs() < 1e-12);
    }

    // ball of radius 1/2 centred in [0,1]: direct count of centres strictly inside
    let g = unit(1, 8);
    let mu = sample_measure(
        &MeasureSpec::NormalizedBall { radius: 0.5, center: Some(vec![0.5]) },
        &g,
    )
    .unwrap();
    let h = g.width();
    for i in 0..g.len() {
        let inside = (g.center(i)[0] - 0.5).abs() < 0.5;
        let want = if inside { h / 1.0 } else { 0.0 };
        assert!((mu.masses()[i] - want).abs() < 1e-15);
    }
    assert!((mu.total() - 1.0).abs() < 1e-12);

    let mu = sample_measure(&MeasureSpec::SingleCell { index: 5, mass: 1.0 }, &unit(2, 3)).unwrap();
    assert_eq!(mu.total(), 1.0);
    assert_eq!(mu.masses()[5], 1.0);
}

#[test]
fn integrals_and_averages() {
    let g = unit(1, 10);
    let c = ScalarField::constant(g, 3.0).unwrap();
    assert!((integrate(&c, Against::Lebesgue, Region::Whole).unwrap() - 3.0).abs() < 1e-14);

    let x = sample_field(&FieldSpec::Linear { slope: vec![1.0], offset: 0.0 }, &g).unwrap();
    assert!((integrate(&x, Against::Lebesgue, Region::Whole).unwrap() - 0.5).abs() < 1e-15);
    assert!((average(&x, Region::Whole).unwrap() - 0.5).abs() < 1e-15);

    let zero = CellMeasure::new(g, vec![0.0; g.len()]).unwrap();
    assert_eq!(integrate(&x, Against::Measure(&zero), Region::Whole).unwrap(), 0.0);

    for m in 1..8 {
        let g = unit(1, m);
        let ind = sample_field(&FieldSpec::Ramp { axis: 0, cut: 0.5, width: 0.0 }, &g).unwrap();
        let left = ind.map(|v| 1.0 - v).unwrap();
        assert_eq!(average(&left, Region::Whole).unwrap(), 0.5);
    }
}

#[test]
fn gradients() {
    let g = unit(2, 5);
    let f = sample_field(&FieldSpec::Linear { slope: vec![3.0, 4.0], offset: 1.0 }, &g).unwrap();
    let d = gradient_magnitude(&f).unwrap();
    for i in 0..g.len() {
        assert!((d.values()[i] - 5.0).abs() < 1e-12);
    }
    let z = gradient_magnitude(&ScalarField::constant(g, 2.0).unwrap()).unwrap();
    assert!(z.values().iter().all(|&v| v == 0.0));

    // x^2 with a cell centred at 0.5; the central difference of a quadratic is exact
    let g = Grid::new(Cube::new(&[0.125], 1.0).unwrap(), 2).unwrap();
    assert_eq!(g.center(1)[0], 0.5);
    let f = ScalarField::from_fn(g, |x| x[0] * x[0]).unwrap();
    let d = gradient_magnitude(&f).unwrap();
    assert!((d.values()[1] - 1.0).abs() < 1e-15);
}

#[test]
fn level_sets() {
    let g = unit(1, 2);
    let one = ScalarField::constant(g, 1.0).unwrap();
    assert_eq!(level_set(&one, 1.0, Direction::Above).count(), 0);

    let x = sample_field(&FieldSpec::Linear { slope: vec![1.0], offset: 0.0 }, &g).unwrap();
    let e = level_set(&x, 0.5, Direction::Above);
    assert_eq!(e.members(), &[false, false, true, true]);
    assert_eq!(level_set(&x, -1e300, Direction::Above).count(), 4);
}

#[test]
fn medians() {
    let g = unit(1, 6);
    assert_eq!(maximal_median(&ScalarField::constant(g, 2.5).unwrap(), Region::Whole).unwrap(), 2.5);

    let two = sample_field(&FieldSpec::Ramp { axis: 0, cut: 0.5, width: 0.0 }, &g).unwrap();
    assert_eq!(maximal_median(&two, Region::Whole).unwrap(), 1.0);

    let g = unit(1, 12);
    let x = sample_field(&FieldSpec::Linear { slope: vec![1.0], offset: 0.0 }, &g).unwrap();
    assert!((maximal_median(&x, Region::Whole).unwrap() - 0.5).abs() <= g.width());
}

#[test]
fn norms_of_half_indicator() {
    let g = unit(1, 6);
    let f = sample_field(&FieldSpec::Ramp { axis: 0, cut: 0.5, width: 0.0 }, &g).unwrap();
    let weak = norm(&f, NormKind::WeakLq { q: 2.0, against: Against::Lebesgue }, 0.0, Region::Whole)
        .unwrap();
    assert!((weak - 0.5f64.sqrt()).abs() < 1e-12);
    let lor = norm(&f, NormKind::LorentzQ1 { q: 2.0, against: Against::Lebesgue }, 0.0, Region::Whole)
        .unwrap();
    assert!((lor - 2f64.sqrt()).abs() < 1e-12);

    let c = ScalarField::constant(g, 0.7).unwrap();
    for kind in [
        NormKind::Lp { p: 2.0, against: Against::Lebesgue, normalized: true },
        NormKind::WeakLq { q: 2.0, against: Against::Lebesgue },
        NormKind::LorentzQ1 { q: 2.0, against: Against::Lebesgue },
    ] {
        assert_eq!(norm(&c, kind, 0.7, Region::Whole).unwrap(), 0.0);
    }
}

fn values_1d(m: u32) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1usize << m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn midpoint_is_exact_for_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, off in -2.0f64..2.0, m in 0u32..6) {
        let g = unit(2, m);
        let f = sample_field(&FieldSpec::Linear { slope: vec![a, b], offset: off }, &g).unwrap();
        let got = integrate(&f, Against::Lebesgue, Region::Whole).unwrap();
        prop_assert!((got - (off + 0.5 * (a + b))).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_monotone_in_p(v in values_1d(5), p1 in 1.0f64..4.0, dp in 0.0f64..3.0) {
        let f = field(unit(1, 5), v);
        let k = |p| NormKind::Lp { p, against: Against::Lebesgue, normalized: true };
        let a = norm(&f, k(p1), 0.3, Region::Whole).unwrap();
        let b = norm(&f, k(p1 + dp), 0.3, Region::Whole).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn weak_below_strong(v in values_1d(5), q in 1.0f64..4.0, c in -3.0f64..3.0) {
        let f = field(unit(1, 5), v);
        let weak = norm(&f, NormKind::WeakLq { q, against: Against::Lebesgue }, c, Region::Whole).unwrap();
        let strong = norm(&f, NormKind::Lp { p: q, against: Against::Lebesgue, normalized: true }, c, Region::Whole).unwrap();
        prop_assert!(weak <= strong * (1.0 + 1e-12));
    }

    #[test]
    fn maximal_median_definition(v in prop::collection::vec(0u8..6, 64)) {
        let g = unit(2, 3);
        let f = field(g, v.iter().map(|&x| x as f64).collect());
        let med = maximal_median(&f, Region::Whole).unwrap();
        let above = f.values().iter().filter(|&&x| x > med).count();
        prop_assert!(2 * above < g.len());
        let mut sorted = f.values().to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let gap = if gap.is_finite() { gap } else { 1.0 };
        let below = f.values().iter().filter(|&&x| x > med - g.width() * gap).count();
        prop_assert!(2 * below >= g.len());
    }

    #[test]
    fn level_sets_partition(v in values_1d(6), lambda in -5.0f64..5.0) {
        let g = unit(1, 6);
        let f = field(g, v);
        let up = level_set(&f, lambda, Direction::Above);
        let down = level_set(&f, lambda, Direction::Below);
        for i in 0..g.len() {
            let eq = f.values()[i] == lambda;
            let hits = up.contains(i) as u8 + down.contains(i) as u8 + eq as u8;
            prop_assert_eq!(hits, 1);
        }
    }
}
