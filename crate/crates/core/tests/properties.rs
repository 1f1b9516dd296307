use std::f64::consts::PI;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use rbsim_core::analysis::{
    self, bootstrap_uncertainty, decay_model, fit_decay, split_fit_by_target, FidelityRecord,
};
use rbsim_core::campaign::{run_campaign, CampaignConfig};
use rbsim_core::detector::{sample_counts, threshold_from_references, CountHistogram, PhotonModel};
use rbsim_core::gateset::{
    ideal_sequence_unitary, read_sequences, sample_sequence, write_sequences, Pole, PAPER_LENGTHS,
};
use rbsim_core::noise::{program_unitary, DriftModel, NoiseConfig, SequenceNoise};
use rbsim_core::qsim::{apply, max_abs_diff, pulse_propagator, Outcome, PulseParams, QubitState};
use rbsim_core::rng::rng_for;
use rbsim_core::scheduler::{compile, EventKind, TimingConfig};

fn pulse_params() -> impl Strategy<Value = PulseParams> {
    (0.0..4.0f64, 0.0..2.0 * PI, -1e4..1e4f64, 0.0..100e-6f64).prop_map(
        |(r, phase, detuning, duration)| PulseParams {
            rabi_rate: r * PI / (2.0 * 21e-6),
            phase,
            detuning,
            duration,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn propagators_are_unitary(p in pulse_params()) {
        prop_assert!(pulse_propagator(&p).unitarity_defect() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn propagators_compose(p in pulse_params(), split in 0.0..1.0f64) {
        let t1 = PulseParams { duration: p.duration * split, ..p };
        let t2 = PulseParams { duration: p.duration * (1.0 - split), ..p };
        let composed = pulse_propagator(&t2) * pulse_propagator(&t1);
        prop_assert!(max_abs_diff(&composed, &pulse_propagator(&p)) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn predicted_outcome_matches_ideal_unitary(length in 1usize..200, seed in any::<u64>()) {
        let seq = sample_sequence(length, seed).unwrap();
        let p_down = apply(&ideal_sequence_unitary(&seq), QubitState::down()).prob_down();
        let want = if seq.predicted_outcome == Pole::Down { 1.0 } else { 0.0 };
        prop_assert!((p_down - want).abs() < 1e-9);
    }

    #[test]
    fn sequences_round_trip(length in 1usize..100, seed in any::<u64>()) {
        let seq = sample_sequence(length, seed).unwrap();
        let mut buf = Vec::new();
        write_sequences(&mut buf, std::slice::from_ref(&seq)).unwrap();
        let back = read_sequences(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![seq]);
    }

    #[test]
    fn compiled_programs_are_well_formed(length in 1usize..60, seed in any::<u64>()) {
        let timing = TimingConfig::default();
        let p = compile(&sample_sequence(length, seed).unwrap(), &timing);
        let mut t = 0;
        for e in &p.events {
            prop_assert_eq!(e.start_ps, t);
            prop_assert!(e.duration_ps > 0);
            prop_assert!((0.0..2.0 * PI).contains(&e.phase));
            if e.kind == EventKind::Drive {
                prop_assert_eq!(e.start_ps % 16_000, 0);
                prop_assert_eq!(e.duration_ps % 5, 0);
            }
            t = e.end_ps();
        }
        prop_assert_eq!(t, p.total_duration_ps);
        prop_assert!(p.gate_spans_ps().iter().all(|&s| s == 65_160_000));
    }

    #[test]
    fn noisy_programs_stay_unitary(length in 1usize..100, seed in any::<u64>(), det in -200.0..200.0f64, dt in -200.0..200.0f64) {
        let timing = TimingConfig::default();
        let p = compile(&sample_sequence(length, seed).unwrap(), &timing);
        let noise = NoiseConfig { static_detuning_hz: det, pi2_time_error_ns: dt, ..Default::default() };
        let sn = SequenceNoise::draw(&noise, &Default::default(), seed);
        prop_assert!(program_unitary(&p, &noise, &sn, &timing).unitarity_defect() < 1e-10);
    }

    #[test]
    fn raising_bright_counts_never_lowers_threshold(
        bright in prop::collection::vec(0u32..30, 1..60),
        dark in prop::collection::vec(0u32..5, 1..60),
        bump in prop::collection::vec(0u32..5, 60),
    ) {
        let b: CountHistogram = bright.iter().copied().collect();
        let raised: CountHistogram = bright.iter().zip(&bump).map(|(c, d)| c + d).collect();
        let d: CountHistogram = dark.iter().copied().collect();
        prop_assert!(threshold_from_references(&raised, &d).unwrap() >= threshold_from_references(&b, &d).unwrap());
    }
}

fn poisson_cdf(mean: f64, k: u32) -> f64 {
    let mut p = (-mean).exp();
    let mut sum = p;
    for i in 0..k {
        p *= mean / (i + 1) as f64;
        sum += p;
    }
    sum
}

#[test]
fn misclassification_matches_cdf_for_random_models() {
    let mut rng = rng_for(&[1, 2, 3]);
    for _ in 0..10 {
        let m = PhotonModel {
            mean_bright: rng.random_range(4.0..20.0),
            mean_dark: rng.random_range(0.05..1.0),
            ..Default::default()
        };
        let thr = rng.random_range(1..4u32);
        let n = 200_000u64;
        let dark = (0..n)
            .filter(|_| sample_counts(Outcome::Up, &m, &mut rng) > thr)
            .count() as f64
            / n as f64;
        let bright = (0..n)
            .filter(|_| sample_counts(Outcome::Down, &m, &mut rng) <= thr)
            .count() as f64
            / n as f64;
        for (got, want) in [
            (dark, 1.0 - poisson_cdf(m.mean_dark, thr)),
            (bright, poisson_cdf(m.mean_bright, thr)),
        ] {
            let sigma = (want * (1.0 - want) / n as f64).sqrt().max(1.0 / n as f64);
            assert!(
                (got - want).abs() <= 4.0 * sigma,
                "{m:?} thr {thr}: {got} vs {want}"
            );
        }
    }
}

/// Records drawn binomially from the decay model itself.
fn synthetic_records(
    epg: f64,
    dif: f64,
    sequences: usize,
    reps: u32,
    seed: u64,
) -> Vec<FidelityRecord> {
    let mut rng = rng_for(&[seed]);
    let mut out = Vec::new();
    for &l in &PAPER_LENGTHS {
        let f = decay_model(dif, epg, l as f64);
        for i in 0..sequences {
            let successes = Binomial::new(reps as u64, f).unwrap().sample(&mut rng) as u32;
            let expected = if i % 2 == 0 { Pole::Down } else { Pole::Up };
            out.push(FidelityRecord {
                length: l,
                sequence_index: i,
                successes,
                reps,
                expected,
            });
        }
    }
    out
}

#[test]
fn fit_is_unbiased() {
    for (k, &epg) in [1e-5, 1e-4, 1e-3].iter().enumerate() {
        let fits: Vec<f64> = (0..50)
            .map(|s| {
                fit_decay(&synthetic_records(
                    epg,
                    0.027,
                    100,
                    100,
                    1000 * k as u64 + s,
                ))
                .unwrap()
                .epg
            })
            .collect();
        let mean = fits.iter().sum::<f64>() / 50.0;
        let sd = (fits.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
        let se = sd / 50f64.sqrt();
        assert!(
            (mean - epg).abs() <= 2.0 * se,
            "E_g {epg}: mean {mean} se {se}"
        );
    }
}

#[test]
fn bootstrap_se_scales_with_sequence_count() {
    let small =
        bootstrap_uncertainty(&synthetic_records(1e-4, 0.027, 25, 100, 77), 400, 1).unwrap();
    let large =
        bootstrap_uncertainty(&synthetic_records(1e-4, 0.027, 100, 100, 78), 400, 1).unwrap();
    let ratio = small.standard_error / large.standard_error;
    assert!((1.4..2.8).contains(&ratio), "ratio {ratio}");
    assert_eq!(small.skipped, 0);
}

fn small_campaign(noise: NoiseConfig, photon: PhotonModel, seed: u64) -> CampaignConfig {
    CampaignConfig {
        sequences_per_length: 40,
        reps_per_sequence: 100,
        master_seed: seed,
        noise,
        photon,
        ..Default::default()
    }
}

#[test]
fn depolarizing_raises_fitted_epg() {
    let epgs: Vec<f64> = [1e-4, 4e-4, 1.6e-3]
        .iter()
        .map(|&e| {
            let c = small_campaign(
                NoiseConfig {
                    depolarizing_epg: e,
                    ..Default::default()
                },
                PhotonModel::default(),
                5,
            );
            run_campaign(&c).unwrap().fit().unwrap().epg
        })
        .collect();
    assert!(epgs.windows(2).all(|w| w[0] < w[1]), "{epgs:?}");
}

#[test]
fn dif_responds_additively() {
    let dif = |photon: PhotonModel| {
        let c = CampaignConfig {
            sequences_per_length: 100,
            ..small_campaign(NoiseConfig::default(), photon, 9)
        };
        run_campaign(&c).unwrap().fit().unwrap().dif
    };
    let base = PhotonModel::default();
    let d0 = dif(base);
    let prep = dif(PhotonModel {
        prep_error_down: 0.02,
        prep_error_up: 0.02,
        ..base
    });
    let overlap = dif(PhotonModel {
        mean_bright: 5.0,
        ..base
    });
    let both = dif(PhotonModel {
        prep_error_down: 0.02,
        prep_error_up: 0.02,
        mean_bright: 5.0,
        ..base
    });
    let sum = (prep - d0) + (overlap - d0);
    assert!(
        ((both - d0) / sum - 1.0).abs() < 0.2,
        "d0 {d0} prep {prep} overlap {overlap} both {both}"
    );
}

#[test]
fn leak_free_split_fits_agree() {
    let c = CampaignConfig {
        sequences_per_length: 100,
        ..small_campaign(
            NoiseConfig {
                depolarizing_epg: 1e-4,
                ..Default::default()
            },
            PhotonModel::default(),
            21,
        )
    };
    let r = run_campaign(&c).unwrap();
    let (b, d) = split_fit_by_target(&r.records).unwrap();
    let se = (b.epg_standard_error().powi(2) + d.epg_standard_error().powi(2)).sqrt();
    assert!(
        (b.epg - d.epg).abs() <= 2.0 * se,
        "{} vs {} (se {se})",
        b.epg,
        d.epg
    );
}

#[test]
fn recalibration_epochs_follow_the_clock() {
    let noise = NoiseConfig {
        drift: DriftModel::RandomWalk {
            rate_hz_per_sqrt_s: 1.0,
            residual_rms_hz: 2.0,
        },
        pi2_time_residual_rms_ns: 10.0,
        ..Default::default()
    };
    let c = CampaignConfig {
        sequences_per_length: 20,
        reps_per_sequence: 100,
        noise,
        ..Default::default()
    };
    let r = run_campaign(&c).unwrap();
    let log = &r.recalibration_log;
    assert!(log.windows(2).all(|w| w[0].time_s < w[1].time_s));
    let longest_sequence = 100.0 * (0.0644 + 3.0 * (400e-6 + 5e-3));
    let freq: Vec<f64> = log
        .iter()
        .filter(|e| e.frequency)
        .map(|e| e.time_s)
        .collect();
    for w in freq.windows(2) {
        let gap = w[1] - w[0];
        assert!(gap >= 60.0 && gap <= 60.0 + longest_sequence, "gap {gap}");
    }
    let expected = r.simulated_duration_s / 60.0;
    assert!(
        (freq.len() as f64 - expected).abs() <= 2.0,
        "{} entries over {} s",
        freq.len(),
        r.simulated_duration_s
    );
    // Paper scale is 1000 sequences; this run is a fifth of it and already
    // spans several minutes of simulated time.
    assert!(r.simulated_duration_s > 300.0);
}

#[test]
fn zero_noise_campaign_fits_zero() {
    let c = small_campaign(NoiseConfig::default(), PhotonModel::perfect(), 4);
    let r = run_campaign(&c).unwrap();
    assert!(r.records.iter().all(|rec| rec.successes == rec.reps));
    let fit = analysis::fit_with_bootstrap(&r.records, 100, 4).unwrap();
    assert_eq!((fit.epg, fit.dif), (0.0, 0.0));
    assert_eq!(fit.bootstrap_se_epg, Some(0.0));
}
