use beamsparse::channel::transform_norm_error;
use beamsparse::{synth_channel, ChannelParams, ChannelSet, SystemConfig};
use proptest::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn half_the_beams_carry_most_of_the_energy() {
    for seed in 0..20 {
        let cfg = SystemConfig::uniform(32, 4, 2, 2, 16).with_seed(seed);
        let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
        let frac = ch.top_beam_energy_fraction(16);
        assert!(frac >= 0.85, "seed {seed}: {frac}");
    }
}

#[test]
fn quarter_of_64_beams_concentrate_energy() {
    let fracs: Vec<f64> = (0..20)
        .map(|seed| {
            let cfg = SystemConfig::uniform(64, 4, 2, 2, 16).with_seed(seed);
            synth_channel(&cfg, &ChannelParams::default()).unwrap().top_beam_energy_fraction(16)
        })
        .collect();
    let med = median(fracs);
    assert!(med > 0.9, "median {med}");
}

#[test]
fn same_seed_same_channel() {
    let cfg = SystemConfig::uniform(16, 3, 2, 2, 8).with_seed(42);
    let a = synth_channel(&cfg, &ChannelParams::default()).unwrap();
    let b = synth_channel(&cfg, &ChannelParams::default()).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = synth_channel(&cfg.clone().with_seed(43), &ChannelParams::default()).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_keeps_norm(seed in 0u64..1000, m in 2usize..40, users in 1usize..4, n in 1usize..3) {
        let cfg = SystemConfig::uniform(m, users, n, 1, m.min(users).max(1)).with_seed(seed);
        let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
        prop_assert!(transform_norm_error(&ch) < 1e-12);
    }

    #[test]
    fn text_round_trip_is_exact(seed in 0u64..1000, m in 2usize..20, users in 1usize..4) {
        let cfg = SystemConfig::uniform(m, users, 2, 1, m.min(users)).with_seed(seed);
        let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
        let back = ChannelSet::from_text(&ch.to_text()).unwrap();
        prop_assert_eq!(back.h_ant, ch.h_ant);
        prop_assert_eq!(back.h, ch.h);
    }
}
