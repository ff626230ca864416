use medoe::medoe::{compute_boosts, BoostConfig};
use proptest::prelude::*;

#[test]
fn table_values_at_the_extremes() {
    let cfg = BoostConfig::chainball();
    let zero = compute_boosts(0.0, &cfg).unwrap();
    // 2.5e-4 * 400, 1.6e-6 * 40, 1 * 3
    assert_eq!(zero.clip, 0.1);
    assert_eq!(zero.entropy, 6.4e-5);
    assert_eq!(zero.temperature, 3.0);
    assert_eq!(zero.kl, 1.3e-4);
    let one = compute_boosts(1.0, &cfg).unwrap();
    // 1.3e-4 * 40
    assert_eq!(one.kl, 5.2e-3);
    assert_eq!(one.clip, 2.5e-4);
    assert_eq!(one.entropy, 1.6e-6);
    assert_eq!(one.temperature, 1.0);
}

#[test]
fn out_of_range_doe_is_rejected() {
    let cfg = BoostConfig::chainball();
    for d in [-0.1, 1.1, f64::NAN, f64::INFINITY] {
        assert!(compute_boosts(d, &cfg).is_err(), "{d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coefficients_are_monotone_in_doe(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for cfg in [BoostConfig::chainball(), BoostConfig::overcooked()] {
            let x = compute_boosts(lo, &cfg).unwrap();
            let y = compute_boosts(hi, &cfg).unwrap();
            prop_assert!(y.temperature <= x.temperature);
            prop_assert!(y.entropy <= x.entropy);
            prop_assert!(y.clip <= x.clip);
            prop_assert!(y.kl >= x.kl);
            prop_assert!(x.temperature > 0.0 && x.entropy > 0.0 && x.clip > 0.0 && x.kl > 0.0);
        }
    }

    #[test]
    fn boosts_interpolate_geometrically(d in 0.0f64..=1.0) {
        let cfg = BoostConfig::chainball();
        let c = compute_boosts(d, &cfg).unwrap();
        let lo = compute_boosts(0.0, &cfg).unwrap();
        let hi = compute_boosts(1.0, &cfg).unwrap();
        let expect = lo.clip.powf(1.0 - d) * hi.clip.powf(d);
        prop_assert!((c.clip - expect).abs() <= 1e-12 * expect);
    }
}
