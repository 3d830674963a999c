use qofc::dynamics::Dynamics;
use qofc::montecarlo::{
    bound_violations, format_float, monotone_law_violations, read_csv, run_experiment, stimulation_violations,
    write_csv, Experiment, Panel, SampleParams, SweepConfig,
};

fn small(experiment: Experiment, samples: usize) -> SweepConfig {
    let mut c = SweepConfig::for_experiment(experiment);
    c.samples = samples;
    c.seed = 42;
    c
}

fn csv_bytes(config: &SweepConfig, threads: usize) -> Vec<u8> {
    let records = run_experiment(config, Some(threads)).unwrap();
    let mut out = Vec::new();
    write_csv(&records, &mut out).unwrap();
    out
}

#[test]
fn output_does_not_depend_on_thread_count() {
    for config in [
        small(Experiment::Fig1, 3000),
        small(Experiment::Fig5, 500),
        small(Experiment::Fig6, 40),
    ] {
        let one = csv_bytes(&config, 1);
        assert_eq!(one, csv_bytes(&config, 8), "{}", config.experiment);
        assert_eq!(one, csv_bytes(&config, 3), "{}", config.experiment);
    }
}

#[test]
fn different_seeds_give_different_draws() {
    let a = csv_bytes(&small(Experiment::Fig1, 50), 2);
    let mut other = small(Experiment::Fig1, 50);
    other.seed = 43;
    assert_ne!(a, csv_bytes(&other, 2));
}

#[test]
fn every_csv_row_recomputes_from_its_parameters() {
    let dynamics = Dynamics::default();
    for exp in Experiment::ALL {
        let mut config = small(exp, 12);
        if matches!(exp, Experiment::Fig3 | Experiment::Fig4) {
            config.n_pairs = 40;
        }
        let records = run_experiment(&config, Some(4)).unwrap();
        assert_eq!(records.len(), config.record_count(), "{exp}");
        let mut bytes = Vec::new();
        write_csv(&records, &mut bytes).unwrap();
        let rows = read_csv(&bytes[..]).unwrap();
        assert_eq!(rows.len(), records.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.experiment, exp);
            assert_eq!(row.sample_index, i);
            let ev = row.params.evaluate(&dynamics).unwrap();
            assert_eq!(format_float(ev.e1), row.e1, "{exp} row {i}");
            assert_eq!(format_float(ev.e2), row.e2, "{exp} row {i}");
            assert_eq!(format_float(ev.depth.tau), row.tau, "{exp} row {i}");
            assert_eq!(ev.depth.method.as_str(), row.tau_method);
        }
    }
}

#[test]
fn csv_header_and_float_format() {
    let records = run_experiment(&small(Experiment::Fig2, 3), None).unwrap();
    let mut bytes = Vec::new();
    write_csv(&records, &mut bytes).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,sample_index,param_json,e1,e2,tau,tau_method")
    );
    let first = lines.next().unwrap();
    assert!(first.starts_with("fig2,0,\"{"), "{first}");
    assert_eq!(format_float(-3.0), "-3.0000000000000000e0");
    assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn mixed_twin_beams_obey_the_monotone_law() {
    let records = run_experiment(&small(Experiment::Fig1, 100_000), None).unwrap();
    assert_eq!(monotone_law_violations(&records), (0, 0));
    assert!(records.iter().any(|r| r.tau > 0.0));
    assert!(records.iter().any(|r| r.tau == 0.0));
}

#[test]
fn noisy_overlap_pairs_respect_the_depth_bound() {
    let mut config = small(Experiment::Fig5, 10_000);
    config.panels = vec![Panel::Noisy];
    let records = run_experiment(&config, None).unwrap();
    assert_eq!(bound_violations(&records, 0.5 / config.n_modes as f64), 0);
    assert!(records
        .iter()
        .all(|r| matches!(&r.params, SampleParams::Overlap { noise, .. } if noise.len() == 2)));
}

#[test]
fn fig5_panels_are_ordered() {
    let records = run_experiment(&small(Experiment::Fig5, 20), None).unwrap();
    assert_eq!(records.len(), 40);
    for r in &records {
        let SampleParams::Overlap { noise, .. } = &r.params else {
            panic!("wrong kind")
        };
        assert_eq!(noise.is_empty(), r.sample_index < 20);
    }
}

#[test]
fn single_mode_arms_share_e2_across_depth_routes() {
    // Same B_p grid and state, so e2 is identical. The quartic depth is a
    // sufficient-only lower estimate; the gap to the eigenvalue depth is
    // reported, not bounded.
    let eig = run_experiment(
        &{
            let mut c = small(Experiment::Fig6, 20);
            c.xi_list = vec![0.0];
            c
        },
        None,
    )
    .unwrap();
    let quartic = run_experiment(
        &{
            let mut c = small(Experiment::Fig7, 20);
            c.arm_sizes = vec![1];
            c
        },
        None,
    )
    .unwrap();
    assert_eq!(eig.len(), quartic.len());
    let key = |r: &qofc::montecarlo::SampleRecord| match r.params {
        SampleParams::Overlap { b_p, .. } => b_p,
        _ => unreachable!(),
    };
    let mut worst = 0.0f64;
    for a in &eig {
        let b = quartic.iter().find(|b| key(b) == key(a)).unwrap();
        assert_eq!(a.e2, b.e2);
        assert!(b.tau <= a.tau + 1e-12, "{} vs {}", a.tau, b.tau);
        assert_eq!(a.tau > 0.0, b.tau > 0.0);
        worst = worst.max((a.tau - b.tau) / a.tau.max(f64::MIN_POSITIVE));
    }
    eprintln!("largest relative eigenvalue/quartic depth gap on overlap pairs: {worst:.3}");
}

#[test]
fn stronger_seeds_deepen_the_identifier() {
    for exp in [Experiment::Fig2, Experiment::Fig4, Experiment::Fig6, Experiment::Fig8] {
        let mut config = SweepConfig::for_experiment(exp);
        if exp == Experiment::Fig4 {
            config.samples = 50;
        }
        let records = run_experiment(&config, None).unwrap();
        let v = stimulation_violations(&records, 20);
        assert!(v.is_empty(), "{exp}: {v:?}");
    }
}

#[test]
fn curves_are_sorted_within_each_series() {
    let records = run_experiment(&small(Experiment::Fig8, 30), None).unwrap();
    for series in records.chunks(30) {
        assert!(series.windows(2).all(|w| w[0].tau <= w[1].tau));
        assert!(series.iter().all(|r| r.params.xi() == series[0].params.xi()));
    }
}

#[test]
fn flat_spectrum_limit() {
    let records = run_experiment(&small(Experiment::Fig3, 11), None).unwrap();
    let zero = records
        .iter()
        .find(|r| matches!(r.params, SampleParams::GaussianSpectrum { sigma, .. } if sigma == 0.0))
        .unwrap();
    assert_eq!((zero.e2, zero.tau), (0.0, 0.0));
    assert!(records.iter().filter(|r| r.tau > 0.0).all(|r| r.e2 < 0.0));
}
