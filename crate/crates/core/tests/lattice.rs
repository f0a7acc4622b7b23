use proptest::prelude::*;
use spincluster_core::lattice::{
    generate_sites, localize, project_rperp, site_predictions, LatticeSite, Localizer, SpinObservation,
    LATTICE_CONSTANT,
};
use spincluster_core::physics::{dipolar_coupling, DipoleGeometry};

fn obs(delta: f64, sd: f64, omega: Option<(f64, f64)>) -> SpinObservation {
    SpinObservation {
        label: "S".into(),
        delta,
        sigma_delta: sd,
        omega: omega.map(|o| o.0),
        sigma_omega: omega.map(|o| o.1),
    }
}

#[test]
fn nearest_neighbours() {
    let bond = LATTICE_CONSTANT * 3f64.sqrt() / 4.0;
    assert!((bond - 0.154e-9).abs() < 0.001e-9);
    let sites = generate_sites(bond * 1.01).unwrap();
    // Four bonded carbons around the vacancy, one of which is the NV nitrogen.
    assert_eq!(sites.len(), 3);
    for s in &sites {
        assert!((s.r - bond).abs() < 1e-15);
    }
    assert!(generate_sites(0.1e-9).unwrap().is_empty());
}

#[test]
fn site_count_grows_with_volume() {
    let a = generate_sites(1e-9).unwrap().len() as f64;
    let b = generate_sites(2e-9).unwrap().len() as f64;
    assert!((b / a - 8.0).abs() < 0.8, "ratio {}", b / a);
    // Eight atoms per cubic cell.
    let density = 8.0 / LATTICE_CONSTANT.powi(3);
    let expect = density * 4.0 / 3.0 * std::f64::consts::PI * 8e-27;
    assert!((b / expect - 1.0).abs() < 0.05);
}

#[test]
fn predictions_delegate_to_geometry() {
    for s in generate_sites(1.2e-9).unwrap() {
        let p = site_predictions(&s);
        let q = dipolar_coupling(&DipoleGeometry::from_vector(s.position).unwrap());
        assert_eq!(p, q);
    }
}

#[test]
fn on_axis_and_generic_circles() {
    let sites = generate_sites(2e-9).unwrap();
    let axis: Vec<&LatticeSite> = sites.iter().filter(|s| s.r_perp() < 1e-15).collect();
    assert!(!axis.is_empty());
    for s in &axis {
        assert_eq!(s.circle_key().0, 0);
        assert_eq!(s.multiplicity, 1);
    }
    let map = localize(&obs(0.0, f64::INFINITY, None), &sites).unwrap();
    let circles = project_rperp(&map);
    assert!(circles.iter().any(|c| c.r_perp == 0.0));
    // Off the mirror planes a circle holds six sites; on them, three.
    assert!(circles.iter().any(|c| c.multiplicity == 6));
    assert!(circles.iter().filter(|c| c.r_perp > 0.0).all(|c| c.multiplicity % 3 == 0));
}

#[test]
fn flat_likelihood_is_uniform() {
    let sites = generate_sites(1.5e-9).unwrap();
    let map = localize(&obs(1e6, f64::INFINITY, Some((1e5, f64::INFINITY))), &sites).unwrap();
    let u = 1.0 / sites.len() as f64;
    assert!(map.prob.iter().all(|p| (p - u).abs() < 1e-15));
    assert!(map.warnings.iter().any(|w| w.contains("uniform")));
    let frac = map.set68.len() as f64 / sites.len() as f64;
    // Sets are grown in whole symmetry classes, so they overshoot by at most one class.
    assert!((0.68..0.68 + 12.0 / sites.len() as f64 + 1e-12).contains(&frac), "{frac}");
}

#[test]
fn exact_couplings_single_out_their_class() {
    let sites = generate_sites(2e-9).unwrap();
    let loc = Localizer::new(&sites).unwrap();
    for s in sites.iter().step_by(17) {
        let c = site_predictions(s);
        let o = obs(c.delta, 1e-4 * c.delta.abs(), Some((c.omega, 1e-4 * c.omega.abs().max(1.0))));
        let map = loc.localize(&o).unwrap();
        let mass: f64 = sites
            .iter()
            .zip(&map.prob)
            .filter(|(t, _)| t.class_key() == s.class_key())
            .map(|(_, p)| p)
            .sum();
        assert!(mass > 0.99, "{:?}: {mass}", s.index);
        assert!(loc.covers(&o, s, 0.68).unwrap());
    }
}

#[test]
fn projection_preserves_probability() {
    let sites = generate_sites(2.5e-9).unwrap();
    let map = localize(&obs(-1.64e6, 0.09e6, Some((1.2e4, 2e3))), &sites).unwrap();
    let total: f64 = project_rperp(&map).iter().map(|c| c.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let mult: usize = project_rperp(&map).iter().map(|c| c.multiplicity).sum();
    assert_eq!(mult, sites.len());
}

#[test]
fn incompatible_couplings_are_reported() {
    let sites = generate_sites(1e-9).unwrap();
    let err = localize(&obs(1e12, 1.0, None), &sites).unwrap_err().to_string();
    assert!(err.contains("z-score"), "{err}");
    assert!(localize(&obs(1e6, 0.0, None), &sites).is_err());
}

/// Cyclic permutation of cubic indices is a threefold rotation about the NV axis.
fn rotate(idx: [i32; 3]) -> [i32; 3] {
    [idx[2], idx[0], idx[1]]
}

#[test]
fn rotation_about_axis_leaves_projection_unchanged() {
    let sites = generate_sites(1.8e-9).unwrap();
    let loc = Localizer::new(&sites).unwrap();
    for s in sites.iter().step_by(11) {
        let t = LatticeSite::new(rotate(s.index)).unwrap();
        assert!((t.r_perp() - s.r_perp()).abs() < 1e-20 && (t.position[2] - s.position[2]).abs() < 1e-20);
        let (a, b) = (site_predictions(s), site_predictions(&t));
        let oa = obs(a.delta, 5e4, Some((a.omega.abs(), 5e3)));
        let ob = obs(b.delta, 5e4, Some((b.omega.abs(), 5e3)));
        let (pa, pb) = (project_rperp(&loc.localize(&oa).unwrap()), project_rperp(&loc.localize(&ob).unwrap()));
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!((x.r_perp, x.z, x.set), (y.r_perp, y.z, y.set));
            assert!((x.prob - y.prob).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_is_normalized_and_sets_nest(
        delta in -3e7f64..3e7,
        sd in 1e3f64..1e7,
        omega in 0.0f64..5e7,
        so in 1e3f64..1e7,
        with_omega in any::<bool>(),
    ) {
        let sites = generate_sites(1.6e-9).unwrap();
        let o = obs(delta, sd, with_omega.then_some((omega, so)));
        let Ok(map) = localize(&o, &sites) else { return Ok(()) };
        let total: f64 = map.prob.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(map.prob.iter().all(|p| *p >= 0.0));
        prop_assert!(map.set68.iter().all(|i| map.set95.contains(i)));
        let m68: f64 = map.set68.iter().map(|&i| map.prob[i]).sum();
        let m95: f64 = map.set95.iter().map(|&i| map.prob[i]).sum();
        prop_assert!(m68 >= 0.68 - 1e-9 && m95 >= 0.95 - 1e-9);
    }
}
