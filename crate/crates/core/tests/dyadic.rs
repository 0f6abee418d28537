use fraclab_core::dyadic::*;
use fraclab_core::lattice::*;
use proptest::prelude::*;

fn unit(dim: usize, m: u32) -> Grid {
    Grid::unit(dim, m).unwrap()
}

fn interval_set(m: u32, upto: f64) -> CellSet {
    CellSet::from_fn(unit(1, m), |x| x[0] < upto)
}

fn cell_mass(g: Grid, idx: usize) -> CellMeasure {
    let mut mass = vec![0.0; g.len()];
    mass[idx] = 1.0;
    CellMeasure::new(g, mass).unwrap()
}

#[test]
fn dyadic_enumeration() {
    let sq = Cube::unit(2).unwrap();
    let four = enumerate_dyadic(&sq, 1);
    assert_eq!(four.len(), 4);
    assert!(four.iter().all(|q| q.side() == 0.5));
    assert_eq!(enumerate_dyadic(&sq, 0).len(), 1);
    let line = enumerate_dyadic(&Cube::unit(1).unwrap(), 2);
    let corners: Vec<f64> = line.iter().map(|q| q.corner()[0]).collect();
    assert_eq!(corners, vec![0.0, 0.25, 0.5, 0.75]);
}

#[test]
fn cz_examples() {
    let empty = CellSet::from_fn(unit(2, 4), |_| false);
    assert!(cz_decompose(&empty, 0.5).unwrap().is_empty());

    let fam = cz_decompose(&interval_set(6, 0.25), 0.5).unwrap();
    assert_eq!(fam.members, vec![CellBox::new([0, 0, 0], 32)]);

    let fam = cz_decompose(&interval_set(6, 0.125), 0.5).unwrap();
    assert_eq!(fam.members, vec![CellBox::new([0, 0, 0], 16)]);

    assert!(cz_decompose(&interval_set(6, 0.75), 0.5).is_err());
}

#[test]
fn dyadic_maximal_examples() {
    let g = unit(2, 4);
    let leb = CellMeasure::lebesgue(g);
    let m0 = dyadic_fractional_maximal(&leb, 0.0).unwrap();
    assert!(m0.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));

    let big = Grid::new(Cube::new(&[0.0, 0.0], 2.0).unwrap(), 4).unwrap();
    let leb = CellMeasure::lebesgue(big);
    let m = dyadic_fractional_maximal(&leb, 0.7).unwrap();
    assert!(m.values().iter().all(|&v| (v - 2f64.powf(0.7)).abs() < 1e-12));

    let m = dyadic_fractional_maximal(&cell_mass(unit(1, 2), 1), 0.0).unwrap();
    assert_eq!(m.values(), &[2.0, 4.0, 1.0, 1.0]);
}

#[test]
fn brute_maximal_examples() {
    for mode in [MaximalMode::Brute, MaximalMode::Shifted] {
        let leb = CellMeasure::lebesgue(unit(2, 3));
        let m = global_fractional_maximal(&leb, 0.0, mode).unwrap();
        assert!(m.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
    let g = unit(1, 5);
    let m = global_fractional_maximal(&cell_mass(g, 0), 0.0, MaximalMode::Brute).unwrap();
    for j in 0..g.len() {
        let want = 1.0 / ((j + 1) as f64 * g.width());
        assert!((m.values()[j] - want).abs() < 1e-12 * want);
    }
}

#[test]
fn brute_refused_above_limit() {
    let leb = CellMeasure::lebesgue(unit(2, 9));
    assert!(global_fractional_maximal(&leb, 0.0, MaximalMode::Brute).is_err());
}

fn random_set(dim: usize, m: u32) -> impl Strategy<Value = (CellSet, f64)> {
    let cells = 1usize << (m as usize * dim);
    (prop::collection::vec(prop::bool::weighted(0.15), cells), 0.05f64..0.95).prop_map(
        move |(bits, lambda)| (CellSet::new(unit(dim, m), bits).unwrap(), lambda),
    )
}

fn check_cz(set: &CellSet, lambda: f64) -> Result<(), TestCaseError> {
    let grid = *set.grid();
    let dim = grid.dim();
    let fam = match cz_decompose(set, lambda) {
        Ok(f) => f,
        Err(_) => {
            prop_assert!(set.count() as f64 > lambda * grid.len() as f64);
            return Ok(());
        }
    };
    prop_assert!(fam.pairwise_disjoint(dim));
    let two_n = (1usize << dim) as f64;
    for q in &fam.members {
        let inside = set.count_in(q) as f64;
        let cells = q.cell_count(dim) as f64;
        prop_assert!(inside > lambda / two_n * cells);
        prop_assert!(inside <= lambda * cells);
        if q.size < grid.cells_per_axis() {
            let s = 2 * q.size;
            let mut lo = q.lo;
            for l in lo.iter_mut().take(dim) {
                *l -= *l % s;
            }
            let parent = CellBox::new(lo, s);
            prop_assert!(set.count_in(&parent) as f64 <= lambda / two_n * (s.pow(dim as u32)) as f64);
        }
    }
    for i in 0..grid.len() {
        if set.contains(i) {
            let c = grid.coords(i);
            prop_assert!(fam.members.iter().any(|q| q.contains(c, dim)));
        }
    }
    Ok(())
}

fn random_measure(dim: usize, m: u32) -> impl Strategy<Value = CellMeasure> {
    let cells = 1usize << (m as usize * dim);
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..3.0], cells)
        .prop_map(move |mass| CellMeasure::new(unit(dim, m), mass).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cz_properties_1d((set, lambda) in random_set(1, 6)) { check_cz(&set, lambda)?; }

    #[test]
    fn cz_properties_2d((set, lambda) in random_set(2, 4)) { check_cz(&set, lambda)?; }

    #[test]
    fn cz_properties_3d((set, lambda) in random_set(3, 3)) { check_cz(&set, lambda)?; }

    #[test]
    fn dyadic_maximal_monotone_and_homogeneous(
        mu in random_measure(2, 3),
        extra in random_measure(2, 3),
        alpha in 0.0f64..2.0,
        t in 0.1f64..10.0,
    ) {
        let g = *mu.grid();
        let sum: Vec<f64> = mu.masses().iter().zip(extra.masses()).map(|(a, b)| a + b).collect();
        let big = CellMeasure::new(g, sum).unwrap();
        let a = dyadic_fractional_maximal(&mu, alpha).unwrap();
        let b = dyadic_fractional_maximal(&big, alpha).unwrap();
        let s = dyadic_fractional_maximal(&mu.scaled(t).unwrap(), alpha).unwrap();
        for i in 0..g.len() {
            prop_assert!(a.values()[i] <= b.values()[i] * (1.0 + 1e-12));
            prop_assert!((s.values()[i] - t * a.values()[i]).abs() <= 1e-12 * t * a.values()[i].max(1e-300));
        }
    }

    #[test]
    fn order_shift_bound(mu in random_measure(2, 3), alpha in 0.0f64..2.0, frac in 0.0f64..1.0, side in 0.25f64..4.0) {
        let g = Grid::new(Cube::new(&[0.0, 0.0], side).unwrap(), 3).unwrap();
        let mu = CellMeasure::new(g, mu.masses().to_vec()).unwrap();
        let eps = frac * alpha;
        let hi = dyadic_fractional_maximal(&mu, alpha).unwrap();
        let lo = dyadic_fractional_maximal(&mu, alpha - eps).unwrap();
        for i in 0..g.len() {
            prop_assert!(hi.values()[i] <= side.powf(eps) * lo.values()[i] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn brute_dominates_and_one_third_constant(mu in random_measure(2, 3), alpha in 0.0f64..2.0) {
        let g = *mu.grid();
        let brute = global_fractional_maximal(&mu, alpha, MaximalMode::Brute).unwrap();
        let shifted = global_fractional_maximal(&mu, alpha, MaximalMode::Shifted).unwrap();
        let dyadic = dyadic_fractional_maximal(&mu, alpha).unwrap();
        let c = 6f64.powf(2.0 - alpha);
        for i in 0..g.len() {
            let b = brute.values()[i] * (1.0 + 1e-12);
            prop_assert!(dyadic.values()[i] <= b);
            prop_assert!(shifted.values()[i] <= b);
            prop_assert!(brute.values()[i] <= c * shifted.values()[i] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn brute_matches_exhaustive_1d(mass in prop::collection::vec(0.0f64..2.0, 16), alpha in 0.0f64..1.0) {
        let g = unit(1, 4);
        let mu = CellMeasure::new(g, mass.clone()).unwrap();
        let got = global_fractional_maximal(&mu, alpha, MaximalMode::Brute).unwrap();
        let h = g.width();
        for x in 0..16 {
            let mut best: f64 = 0.0;
            for a in 0..=x {
                for b in (x + 1)..=16 {
                    let s: f64 = mass[a..b].iter().sum();
                    best = best.max(((b - a) as f64 * h).powf(alpha - 1.0) * s);
                }
            }
            prop_assert!((got.values()[x] - best).abs() <= 1e-12 * best.max(1e-300));
        }
    }
}
