mod common;

use common::{open_box, torus};
use metastable_mdp::lattice::{BondClass, ModelParams, Site, SiteConfig};
use proptest::prelude::*;

fn config(p: ModelParams) -> impl Strategy<Value = SiteConfig> {
    let n = p.side() * p.side();
    proptest::collection::vec(proptest::bool::weighted(0.4), n).prop_map(move |occ| SiteConfig::from_occupancy(p, occ).unwrap())
}

fn any_config() -> impl Strategy<Value = SiteConfig> {
    prop_oneof![config(torus(6)), config(open_box(4))]
}

/// Single full rectangle with both sides ≥ 2 that does not wrap.
fn plain_rectangle(c: &SiteConfig) -> bool {
    let s = c.occupied_sites();
    if s.is_empty() {
        return false;
    }
    let (x0, x1) = (s.iter().map(|q| q.x).min().unwrap(), s.iter().map(|q| q.x).max().unwrap());
    let (y0, y1) = (s.iter().map(|q| q.y).min().unwrap(), s.iter().map(|q| q.y).max().unwrap());
    let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    w >= 2 && h >= 2 && w * h == s.len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_energy_matches_full_recompute(c in any_config(), k in 0usize..10_000) {
        let mut moves = c.bonds();
        moves.extend(c.reservoir_bonds());
        let moves: Vec<_> = moves.into_iter().filter(|b| c.is_applicable(b)).collect();
        let b = moves[k % moves.len()];
        let next = c.apply_bond(&b).unwrap();
        prop_assert_eq!(c.energy_delta(&b).unwrap(), next.hamiltonian() - c.hamiltonian());
    }

    #[test]
    fn swaps_are_involutions_and_conserve_particles(c in any_config(), k in 0usize..10_000) {
        let internal: Vec<_> = c.bonds().into_iter().filter(|b| b.class == BondClass::Internal).collect();
        let b = internal[k % internal.len()];
        let next = c.apply_bond(&b).unwrap();
        prop_assert_eq!(next.particle_count(), c.particle_count());
        prop_assert_eq!(next.apply_bond(&b).unwrap(), c);
    }

    #[test]
    fn reservoir_moves_change_count_by_one(c in any_config(), k in 0usize..10_000) {
        let mut moves: Vec<_> = c.bonds().into_iter().filter(|b| b.class != BondClass::Internal).collect();
        moves.extend(c.reservoir_bonds());
        let moves: Vec<_> = moves.into_iter().filter(|b| c.fires(b).unwrap_or(false)).collect();
        prop_assume!(!moves.is_empty());
        let b = moves[k % moves.len()];
        let d = c.apply_bond(&b).unwrap().particle_count() as i64 - c.particle_count() as i64;
        prop_assert_eq!(d.abs(), 1);
    }

    #[test]
    fn grid_and_json_round_trip(c in any_config()) {
        let p = *c.params();
        prop_assert_eq!(&SiteConfig::from_grid(&c.to_grid(), &p).unwrap(), &c);
        prop_assert_eq!(&SiteConfig::from_json(&c.to_json(), &p).unwrap(), &c);
        prop_assert_eq!(&SiteConfig::parse(&c.to_json(), &p).unwrap(), &c);
    }

    #[test]
    fn clusters_partition_occupied_sites(c in any_config()) {
        let mut all: Vec<usize> = c.cluster_indices().concat();
        all.sort_unstable();
        prop_assert_eq!(all, c.occupied_indices());
        for comp in c.cluster_indices() {
            for &i in &comp {
                for nb in c.neighbours(i).into_iter().flatten() {
                    if c.occupied_at(nb) {
                        prop_assert!(comp.contains(&nb));
                    }
                }
            }
        }
    }

    #[test]
    fn classification_matches_bounding_box(x0 in 0i32..4, y0 in 0i32..4, w in 1i32..5, h in 1i32..5, hole in proptest::option::of((0i32..5, 0i32..5))) {
        let p = torus(10);
        let mut s = Vec::new();
        for x in 0..w {
            for y in 0..h {
                if hole != Some((x, y)) {
                    s.push(Site::new(x0 + x, y0 + y));
                }
            }
        }
        prop_assume!(!s.is_empty());
        let c = SiteConfig::from_sites(p, &s).unwrap();
        let single = c.cluster_indices().len() == 1;
        prop_assert_eq!(c.classify_robust().is_ok(), single && plain_rectangle(&c));
    }

    #[test]
    fn susceptible_bonds_fire_without_raising_energy(c in any_config()) {
        for b in c.susceptible_bonds() {
            prop_assert!(c.fires(&b).unwrap());
            let e = c.energy_delta(&b).unwrap();
            prop_assert!(e.value(c.params()) <= 0.0);
        }
    }
}
