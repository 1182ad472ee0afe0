use std::sync::Arc;

use proptest::prelude::*;

use evcharge::batch::{BatchEnv, BatchError};
use evcharge::env::{ActionVector, ChargingEnv, EnvConfig};
use evcharge::exogenous::{generate_synthetic_defaults, SyntheticProfile, Traffic};
use evcharge::topology::{preset_station, Layout, PresetParams};
use evcharge::vehicle::BatterySpec;

fn env(cfg: EnvConfig) -> ChargingEnv {
    let params = PresetParams { battery: Some(BatterySpec::default()), ..PresetParams::default() };
    let station = preset_station(Layout::NestedSplitters, 4, 4, &params).unwrap();
    let profile = SyntheticProfile { traffic: Traffic::High, ..SyntheticProfile::default() };
    let data = generate_synthetic_defaults(&profile, 11, cfg.dt_min, cfg.episode_steps);
    ChargingEnv::new(cfg, Arc::new(station), Arc::new(data)).unwrap()
}

fn small() -> ChargingEnv {
    env(EnvConfig { episode_steps: 48, battery_enabled: true, allow_discharge: true, ..EnvConfig::default() })
}

#[test]
fn reset_days_cover_the_year_evenly() {
    let e = small();
    let days = e.data().num_days();
    assert_eq!(days, 365);
    let n = 100_000;
    let mut counts = vec![0usize; days];
    for seed in 0..n as u64 {
        counts[e.reset(seed).0.day_index] += 1;
    }
    let p = 1.0 / days as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let z: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64 - p) / sigma).collect();
    // With 365 days about one lands outside 3 sigma by chance; allow up to the
    // 99.9% quantile of Bin(365, 0.0027), and nothing past the family-wise bound.
    let outside = z.iter().filter(|z| z.abs() > 3.0).count();
    assert!(outside <= 5, "{outside} days outside 3 sigma");
    let worst = z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    assert!(worst <= 4.7, "worst day at {worst} sigma");
    let chi2: f64 = z.iter().map(|z| z * z * (1.0 - p)).sum();
    // 99.9% quantile of chi-square with 364 degrees of freedom is about 453
    assert!(chi2 < 453.0, "chi2 {chi2}");
}

#[test]
fn environments_do_not_interfere() {
    let e = small();
    let (b, a) = (4, e.action_len());
    let mut first = BatchEnv::new(e.clone(), b, 9).unwrap();
    let mut second = BatchEnv::new(e.clone(), b, 9).unwrap();
    first.reset();
    second.reset();
    let obs_len = e.obs_len();
    for t in 0..100u32 {
        let base: Vec<u32> = (0..(b * a) as u32).map(|i| (i * 5 + t) % 21).collect();
        let mut other = base.clone();
        for x in &mut other[..a] {
            *x = 20 - *x;
        }
        let x = first.step(&base).unwrap();
        let y = second.step(&other).unwrap();
        assert_eq!(x.obs[obs_len..], y.obs[obs_len..]);
        assert_eq!(x.rewards[1..], y.rewards[1..]);
        assert_eq!(format!("{:?}", &x.infos[1..]), format!("{:?}", &y.infos[1..]));
    }
}

#[test]
fn rejected_step_leaves_state_untouched() {
    let e = small();
    let mut batch = BatchEnv::new(e.clone(), 3, 1).unwrap();
    batch.reset();
    let a = e.action_len();
    batch.step(&vec![15; 3 * a]).unwrap();
    let before = batch.states().to_vec();
    let mut bad = vec![10; 3 * a];
    bad[2 * a + 1] = 21;
    assert!(matches!(batch.step(&bad), Err(BatchError::Env { index: 2, .. })));
    assert!(matches!(batch.step(&bad[1..]), Err(BatchError::ShapeMismatch { .. })));
    assert_eq!(batch.states(), &before[..]);
}

#[test]
fn finished_episode_requires_reset_without_auto_reset() {
    let e = env(EnvConfig { episode_steps: 3, ..EnvConfig::default() });
    let mut batch = BatchEnv::new(e.clone(), 2, 0).unwrap();
    batch.set_auto_reset(false);
    batch.reset();
    let hold = vec![10; 2 * e.action_len()];
    for t in 0..3 {
        let out = batch.step(&hold).unwrap();
        assert_eq!(out.dones, vec![t == 2; 2]);
    }
    assert!(batch.step(&hold).is_err());
    batch.reset();
    assert!(batch.step(&hold).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observations_stay_in_bounds(seed in any::<u64>(), actions in prop::collection::vec(0u32..=20, 9 * 60)) {
        let e = small();
        let (lo, hi) = e.observation_bounds();
        let (mut s, obs) = e.reset(seed);
        prop_assert!(obs.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| l <= x && x <= h));
        for row in actions.chunks(e.action_len()) {
            let (obs, r, done, _) = e.step(&mut s, &ActionVector(row.to_vec())).unwrap();
            prop_assert!(r.is_finite());
            for (i, (x, (l, h))) in obs.iter().zip(lo.iter().zip(&hi)).enumerate() {
                prop_assert!(l <= x && x <= h, "entry {} = {} outside [{}, {}]", i, x, l, h);
            }
            if done {
                break;
            }
        }
    }

    #[test]
    fn cars_keep_valid_charge(seed in any::<u64>(), actions in prop::collection::vec(0u32..=20, 9 * 48)) {
        let e = small();
        let (mut s, _) = e.reset(seed);
        for row in actions.chunks(e.action_len()) {
            e.step_state(&mut s, &ActionVector(row.to_vec())).unwrap();
            for car in s.ports.iter().filter_map(|p| p.car.as_ref()) {
                prop_assert!((0.0..=1.0).contains(&car.soc));
                prop_assert!(car.de_remain_kwh >= 0.0);
            }
            let b = s.battery.unwrap();
            prop_assert!((0.0..=1.0).contains(&b.soc));
        }
    }
}
