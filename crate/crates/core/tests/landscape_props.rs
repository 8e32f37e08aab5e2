mod common;

use common::torus;
use metastable_mdp::landscape::{communication_height, stability_level, SearchBounds};
use metastable_mdp::lattice::{Site, SiteConfig};
use proptest::prelude::*;

fn small_shape() -> impl Strategy<Value = SiteConfig> {
    proptest::collection::btree_set((0i32..3, 0i32..3), 1..5)
        .prop_map(|s| SiteConfig::from_sites(torus(6), &s.into_iter().map(|(x, y)| Site::new(x, y)).collect::<Vec<_>>()).unwrap())
}

// Same absolute energy cap in both directions.
fn phi(a: &SiteConfig, b: &SiteConfig) -> f64 {
    let cap = a.energy().max(b.energy()) + 4.0;
    let bounds = SearchBounds::new(8, cap - a.energy(), 2_000_000).unwrap();
    communication_height(a, b, &bounds).unwrap().barrier().map(|x| x.height).unwrap_or(f64::INFINITY)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn communication_height_is_symmetric_and_bounded_below(a in small_shape(), b in small_shape()) {
        let (ab, ba) = (phi(&a, &b), phi(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= a.energy().max(b.energy()));
    }

    #[test]
    fn communication_height_obeys_ultrametric_triangle(a in small_shape(), b in small_shape(), c in small_shape()) {
        let top = [&a, &b, &c].iter().map(|x| x.energy()).fold(0.0, f64::max) + 4.0;
        let phi3 = |x: &SiteConfig, y: &SiteConfig| {
            let bounds = SearchBounds::new(8, top - x.energy(), 2_000_000).unwrap();
            communication_height(x, y, &bounds).unwrap().barrier().map(|r| r.height).unwrap_or(f64::INFINITY)
        };
        prop_assert!(phi3(&a, &c) <= phi3(&a, &b).max(phi3(&b, &c)));
    }
}

#[test]
fn large_squares_exceed_two_u() {
    let p = torus(8);
    for (w, h) in [(3, 3), (3, 4)] {
        let s: Vec<Site> = (0..w).flat_map(|x| (0..h).map(move |y| Site::new(x, y))).collect();
        let c = SiteConfig::from_sites(p, &s).unwrap();
        let v = stability_level(&c, &SearchBounds::default()).unwrap();
        assert!(v.barrier().map_or(true, |b| b.excess_value() > 2.0), "{w}x{h}");
    }
}
