use std::collections::HashMap;

use proptest::prelude::*;
use reclaim_core::trace::{
    error_cdf, generate_synthetic, read_capacities, read_traces, write_capacities, write_traces, HostSpec, MetricKind,
    SyntheticConfig,
};

fn noise_free() -> SyntheticConfig {
    SyntheticConfig {
        seed: 17,
        num_hosts: 4,
        num_days: 10,
        noise_sigma: 0.0,
        ..SyntheticConfig::default()
    }
}

fn errors(config: &SyntheticConfig, metric: MetricKind) -> Vec<f64> {
    let dc = generate_synthetic(config).unwrap();
    dc.hosts
        .iter()
        .flat_map(|h| {
            h.series(metric)
                .iter()
                .map(|s| s.usage - s.prediction)
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn csv_round_trip_is_exact() {
    let dc = generate_synthetic(&SyntheticConfig {
        num_days: 2,
        spike_prob_per_step: 0.01,
        spike_magnitude: 0.3,
        ..noise_free()
    })
    .unwrap();
    let mut traces = Vec::new();
    write_traces(&dc, &mut traces).unwrap();
    let mut caps = Vec::new();
    write_capacities(&dc.host_specs(), &mut caps).unwrap();
    let capacities = read_capacities(caps.as_slice()).unwrap();
    let back = read_traces(traces.as_slice(), dc.name.clone(), &capacities, dc.step_minutes).unwrap();
    assert_eq!(back, dc);
}

#[test]
fn rows_may_arrive_in_any_order() {
    let caps: HashMap<String, HostSpec> = [("h".to_string(), HostSpec::new("h", 8, 32.0).unwrap())].into();
    let text = "host_id,metric,step,usage,prediction\n\
                h,ram,1,0.5,0.4\nh,cpu,1,0.2,0.1\nh,ram,0,0.3,0.3\nh,cpu,0,0.1,0.1\n";
    let dc = read_traces(text.as_bytes(), "x", &caps, 720).unwrap();
    assert_eq!(dc.num_steps(), 2);
    assert_eq!(dc.hosts[0].series(MetricKind::Ram)[1].usage, 0.5);
}

#[test]
fn malformed_traces_are_rejected() {
    let caps: HashMap<String, HostSpec> = [("h".to_string(), HostSpec::new("h", 8, 32.0).unwrap())].into();
    let cases = [
        "host,metric,step,usage,prediction\nh,cpu,0,0.1,0.1\nh,ram,0,0.1,0.1\n",
        "host_id,metric,step,usage,prediction\nh,cpu,0,0.1,0.1\nh,cpu,0,0.1,0.1\nh,ram,0,0.1,0.1\n",
        "host_id,metric,step,usage,prediction\nh,cpu,0,1.5,0.1\nh,ram,0,0.1,0.1\n",
        "host_id,metric,step,usage,prediction\nh,cpu,1,0.1,0.1\nh,ram,1,0.1,0.1\n",
        "host_id,metric,step,usage,prediction\nh,gpu,0,0.1,0.1\nh,ram,0,0.1,0.1\n",
        "host_id,metric,step,usage,prediction\nq,cpu,0,0.1,0.1\nq,ram,0,0.1,0.1\n",
    ];
    for text in cases {
        assert!(read_traces(text.as_bytes(), "x", &caps, 720).is_err(), "{text}");
    }
}

#[test]
fn error_spread_matches_prediction_noise() {
    for metric in MetricKind::ALL {
        let e = errors(&noise_free(), metric);
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let std = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.05).abs() / 0.05 < 0.15, "{metric:?} std {std}");
    }
}

#[test]
fn underestimation_cdf_at_five_percent() {
    let dc = generate_synthetic(&noise_free()).unwrap();
    for metric in MetricKind::ALL {
        for host in error_cdf(&dc, metric).unwrap() {
            let at = host
                .points
                .iter()
                .take_while(|(e, _)| *e <= 0.05)
                .last()
                .map_or(0.0, |(_, p)| *p);
            assert!((at - 0.69).abs() <= 0.05, "{} {metric:?}: {at}", host.host_id);
        }
    }
}

#[test]
fn noiseless_prediction_tracks_usage_closely() {
    let config = SyntheticConfig {
        prediction_noise_sigma: 0.0,
        ..noise_free()
    };
    let dc = generate_synthetic(&config).unwrap();
    // A trailing mean of a sinusoid lags by at most window * max slope.
    let spd = dc.steps_per_day() as f64;
    let bound = config.daily_amplitude * 2.0 * std::f64::consts::PI / spd * config.prediction_window as f64;
    for e in errors(&config, MetricKind::Cpu) {
        assert!(e.abs() <= bound, "{e} > {bound}");
    }
    assert_eq!(
        dc.hosts[0].series(MetricKind::Cpu)[0].usage,
        dc.hosts[0].series(MetricKind::Cpu)[0].prediction
    );
}

#[test]
fn generator_is_deterministic_per_seed() {
    let a = generate_synthetic(&noise_free()).unwrap();
    let b = generate_synthetic(&noise_free()).unwrap();
    let c = generate_synthetic(&SyntheticConfig {
        seed: 18,
        ..noise_free()
    })
    .unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_values_stay_in_unit_range(
        seed in any::<u64>(),
        bias in -0.3f64..0.3,
        spike in 0.0f64..1.0,
        amplitude in 0.0f64..0.6,
    ) {
        let dc = generate_synthetic(&SyntheticConfig {
            seed,
            num_hosts: 2,
            num_days: 1,
            daily_amplitude: amplitude,
            prediction_bias: bias,
            spike_prob_per_step: 0.05,
            spike_magnitude: spike,
            ..SyntheticConfig::default()
        }).unwrap();
        for h in &dc.hosts {
            for m in MetricKind::ALL {
                for s in h.series(m) {
                    prop_assert!((0.0..=1.0).contains(&s.usage));
                    prop_assert!((0.0..=1.0).contains(&s.prediction));
                }
            }
        }
    }
}
