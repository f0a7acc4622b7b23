use proptest::prelude::*;
use spincluster_core::physics::{
    coupling_to_field, dipolar_coupling, n_transitions, nv_es_transitions, resonance_field, DipoleGeometry,
    NSpinParams, NvParams, SpinState,
};

const MU_B: f64 = 9.2740100783e-24;
const H: f64 = 6.62607015e-34;

/// K = (μ₀/4π) μ_B² / h in Hz·m³, from the constants written out here.
fn k_oracle() -> f64 {
    1e-7 * MU_B * MU_B / H
}

fn magic() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

#[test]
fn on_axis_ising_from_independent_constants() {
    let c = dipolar_coupling(&DipoleGeometry::new(1e-9, 0.0).unwrap());
    let expect = -2.0 * k_oracle() / 1e-27;
    assert!(c.omega.abs() < 1e-6);
    assert!((c.delta - expect).abs() < 1e-6 * expect.abs(), "{} vs {expect}", c.delta);
    assert!((c.delta + 2.60e7).abs() < 0.01e7);
}

#[test]
fn equatorial_values() {
    let r = 1.7e-9;
    let c = dipolar_coupling(&DipoleGeometry::new(r, std::f64::consts::FRAC_PI_2).unwrap());
    let k = k_oracle() / r.powi(3);
    assert!((c.omega - 3.0 * k).abs() < 1e-6 * k);
    assert!((c.delta - k).abs() < 1e-6 * k);
}

#[test]
fn field_of_measured_coupling() {
    let b = coupling_to_field(-1.64e6, SpinState::Down);
    assert!((b - H * 1.64e6 / MU_B).abs() < 1e-12);
    assert!((b - 1.17e-4).abs() < 0.01e-4);
    assert_eq!(coupling_to_field(0.0, SpinState::Down), 0.0);
    assert!((coupling_to_field(1e6, SpinState::Up) - H * 1e6 / MU_B).abs() < 1e-15);
}

#[test]
fn resonance_field_values() {
    let nv = NvParams::default();
    let b = resonance_field(&nv);
    assert!((b - 1.42e9 / (4.0 * MU_B / H)).abs() < 1e-12);
    assert!((b - 25.4e-3).abs() < 0.05e-3);
    assert_eq!(resonance_field(&NvParams { d_es: 0.0, ..nv.clone() }), 0.0);
    for d_es in [1.34e9, 1.38e9, 1.42e9] {
        let b = resonance_field(&NvParams { d_es, ..nv.clone() });
        assert!((24e-3 - b).abs() < 0.1 * b, "24 mT vs {b}");
    }
}

#[test]
fn transition_lines_at_operating_point() {
    let nv = NvParams::default();
    let es = nv_es_transitions(0.024, &nv);
    let mut f: Vec<f64> = es.iter().map(|l| l.freq).collect();
    f.sort_by(f64::total_cmp);
    let center = 1.42e9 - 2.0 * MU_B / H * 0.024;
    for (got, want) in f.iter().zip([center - 4e7, center, center + 4e7]) {
        assert!((got - want).abs() < 1.0);
    }
    assert!((center - 748e6).abs() < 1e6);
    let zero = nv_es_transitions(0.0, &NvParams { a_hf_es: 0.0, ..nv });
    assert!(zero.iter().all(|l| l.freq == 1.42e9));

    let n = n_transitions(0.024, &NSpinParams::default());
    let central = n.iter().find(|l| l.m_i == 0).unwrap().freq;
    assert!((central - 672e6).abs() < 1e6);
    let plus = n.iter().find(|l| l.m_i == 1).unwrap().freq;
    let minus = n.iter().find(|l| l.m_i == -1).unwrap().freq;
    assert!(((plus - central) + (minus - central)).abs() < 1e-3);
    assert_eq!(n_transitions(0.0, &NSpinParams::default()).iter().find(|l| l.m_i == 0).unwrap().freq, 0.0);
}

#[test]
fn resonance_is_the_unique_crossing() {
    let nv = NvParams::default();
    let n = NSpinParams::default();
    let gap = |b: f64| {
        let es = nv_es_transitions(b, &nv).iter().find(|l| l.m_i == 0).unwrap().freq;
        let c = n_transitions(b, &n).iter().find(|l| l.m_i == 0).unwrap().freq;
        es - c
    };
    let (mut lo, mut hi) = (0.0, 0.1);
    assert!(gap(lo) > 0.0 && gap(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = resonance_field(&nv);
    assert!((lo - b).abs() < 1e-9 * b);
    // Strictly decreasing gap, so a single sign change.
    let samples: Vec<f64> = (0..=400).map(|k| gap(k as f64 * 2.5e-4)).collect();
    assert!(samples.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn es_lines_decrease_with_field() {
    let nv = NvParams::default();
    for k in 0..100 {
        let (a, b) = (nv_es_transitions(k as f64 * 1e-3, &nv), nv_es_transitions((k + 1) as f64 * 1e-3, &nv));
        for (x, y) in a.iter().zip(&b) {
            assert!(y.freq < x.freq);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn magic_angle_has_no_ising_term(r in 1e-10f64..1e-8) {
        let c = dipolar_coupling(&DipoleGeometry::new(r, magic()).unwrap());
        prop_assert!(c.delta.abs() < 1e-12 * k_oracle() / r.powi(3));
    }

    #[test]
    fn couplings_scale_as_inverse_cube(r in 1e-10f64..5e-9, theta in 0.0f64..std::f64::consts::PI) {
        let a = dipolar_coupling(&DipoleGeometry::new(r, theta).unwrap());
        let b = dipolar_coupling(&DipoleGeometry::new(2.0 * r, theta).unwrap());
        prop_assert!((b.delta - a.delta / 8.0).abs() <= 1e-15 * a.delta.abs());
        prop_assert!((b.omega - a.omega / 8.0).abs() <= 1e-15 * a.omega.abs());
    }

    #[test]
    fn field_is_odd_in_spin_state(delta in -1e8f64..1e8) {
        prop_assert_eq!(coupling_to_field(delta, SpinState::Up), -coupling_to_field(delta, SpinState::Down));
    }
}

#[test]
fn magic_angle_over_many_radii() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let theta = magic();
    for _ in 0..1_000_000 {
        let r: f64 = rng.random_range(1e-10..1e-8);
        let c = dipolar_coupling(&DipoleGeometry::new(r, theta).unwrap());
        assert!(c.delta.abs() < 1e-12 * k_oracle() / r.powi(3));
    }
}
