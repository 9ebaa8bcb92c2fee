use hdq_core::diffusion::{DiffusionParams, LimitLaw};
use hdq_core::model::{Model, ModelParams, Ratios, Region, State};
use hdq_core::stationary::StationaryDistribution;
use proptest::prelude::*;

fn stable_model() -> impl Strategy<Value = Model> {
    (0.3f64..2.0, 0.1f64..0.95, 0.2f64..2.0, 1u64..30, 1u64..30).prop_map(|(r1, r2, r12, d, gap)| {
        Model::from_ratios(Ratios::new(r1, r2, r12).unwrap(), d, d + gap).unwrap()
    })
}

fn limit_params() -> impl Strategy<Value = DiffusionParams> {
    (-5.0f64..5.0, -4.0f64..-0.1, 0.1f64..5.0, 0.1f64..8.0, 0.1f64..3.0)
        .prop_map(|(b1, b2, ld, gap, r)| DiffusionParams::new(b1, b2, ld, ld + gap, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(m in stable_model()) {
        let text = serde_json::to_string(m.params()).unwrap();
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, m.params());
        let parsed = Model::from_json_str(&text).unwrap();
        prop_assert_eq!(parsed.params(), m.params());
    }

    #[test]
    fn every_state_has_one_region(m in stable_model()) {
        for s in m.states_up_to(m.ell_u() + 3) {
            let r = m.region_of(s).unwrap();
            let expected = match (s.k, s.ell < m.ell_d(), s.ell > m.ell_u()) {
                (1, true, _) => Region::S11,
                (1, false, _) => Region::S21,
                (_, _, false) => Region::S12,
                _ => Region::S22,
            };
            prop_assert_eq!(r, expected);
        }
        prop_assert!(!m.contains(State::new(m.ell_u() + 1, 1)));
        prop_assert!(!m.contains(State::new(m.ell_d() - 1, 2)));
    }

    #[test]
    fn region_masses_sum_to_one(m in stable_model()) {
        let d = StationaryDistribution::new(&m).unwrap();
        let total: f64 = Region::ALL.iter().map(|r| d.region_mass(*r)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "total {}", total);
        prop_assert!(Region::ALL.iter().all(|r| d.region_mass(*r) > 0.0));
        prop_assert!((d.mgf_component(Region::S11, 0.0) - d.region_mass(Region::S11)).abs() < 1e-14);
    }

    #[test]
    fn flow_across_each_cut_balances(m in stable_model()) {
        // rate up from level ell equals rate down from level ell + 1
        let d = StationaryDistribution::new(&m).unwrap();
        for ell in 0..m.ell_u() + 5 {
            let (mut up, mut down) = (0.0, 0.0);
            for s in m.states_up_to(ell + 1) {
                let p = d.pi(s).unwrap();
                let t = m.outgoing(s);
                if s.ell == ell {
                    up += p * t.up.1;
                }
                if s.ell == ell + 1 {
                    down += p * t.down.map_or(0.0, |x| x.1);
                }
            }
            prop_assert!((up - down).abs() <= 1e-12 * up.max(1e-300), "cut {}: {} vs {}", ell, up, down);
        }
    }

    #[test]
    fn length_cdf_is_monotone(m in stable_model()) {
        let cdf = StationaryDistribution::new(&m).unwrap().length_cdf();
        let mut prev = 0.0;
        for ell in 0..m.ell_u() + 50 {
            let v = cdf.at(ell);
            prop_assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn diffusion_cdf_is_a_distribution(dp in limit_params()) {
        let law = LimitLaw::new(dp).unwrap();
        prop_assert_eq!(law.cdf(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=200 {
            let x = (dp.ell_u_t + 20.0 / -dp.b2) * i as f64 / 200.0;
            let v = law.cdf(x);
            prop_assert!(v >= prev - 1e-15 && v <= 1.0 + 1e-15, "x {}: {} after {}", x, v, prev);
            prev = v;
        }
        prop_assert!((prev - 1.0).abs() < 1e-8);
        let total: f64 = Region::ALL.iter().map(|r| law.region_mass(*r)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
