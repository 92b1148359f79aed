use proptest::prelude::*;
use token_guard::config::{
    preset, preset_names, propagate_thresholds, GuardConfig, PropagationParams, THRESHOLD_ROWS,
};
use token_guard::error::Error;

#[test]
fn paper_default_constants() {
    let c = preset("paper-default").unwrap();
    assert_eq!(c.lambda, 0.6);
    assert_eq!(c.tau_token, 0.4);
    let w = c.segment_weights;
    assert_eq!((w.alpha, w.beta, w.gamma), (0.5, 0.3, 0.2));
    let t = c.segment_thresholds;
    assert_eq!((t.tau_low, t.tau_high, t.n_max), (0.55, 0.75, 3));
    assert_eq!(c.global.tau_global, 0.7);
    assert_eq!(c.global.delta_tau, 0.1);
    assert_eq!(c.global.m_max, 2);
    assert_eq!(c.global.cannot_answer_floor, 0.5);
    assert_eq!((c.softmax_temperature, c.sampling_temperature), (0.3, 0.4));
    assert!(c.errors().is_empty());
}

#[test]
fn threshold_rows_match_the_reference_table() {
    let table = [
        (0.30, 0.52, 0.70, 0.68),
        (0.30, 0.54, 0.72, 0.70),
        (0.30, 0.55, 0.74, 0.71),
        (0.40, 0.55, 0.75, 0.70),
        (0.40, 0.57, 0.77, 0.72),
        (0.40, 0.58, 0.79, 0.73),
        (0.50, 0.60, 0.80, 0.74),
        (0.50, 0.62, 0.82, 0.75),
        (0.50, 0.63, 0.84, 0.76),
    ];
    assert_eq!(THRESHOLD_ROWS, table);
    let row4 = preset("thresholds-row4").unwrap();
    assert_eq!(row4.tau_token, 0.40);
    assert_eq!(row4.segment_thresholds.tau_low, 0.55);
    assert_eq!(row4.segment_thresholds.tau_high, 0.75);
    assert_eq!(row4.global.tau_global, 0.70);
}

#[test]
fn grid_row_eight_is_the_default() {
    assert_eq!(preset("grid-8").unwrap(), GuardConfig::default());
    let g1 = preset("grid-1").unwrap();
    assert_eq!((g1.lambda, g1.global.delta_tau, g1.global.m_max), (0.4, 0.05, 2));
}

#[test]
fn unknown_preset_lists_valid_names() {
    match preset("nope") {
        Err(Error::UnknownPreset { valid, .. }) => {
            assert_eq!(valid, preset_names());
            assert_eq!(valid.len(), 25);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn validation_reports_field_paths() {
    let mut c = GuardConfig::default();
    c.segment_weights.alpha = 0.7;
    let errs = c.errors();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].contains("segment_weights"), "{errs:?}");

    let mut c = GuardConfig::default();
    c.segment_thresholds.tau_low = 0.8;
    let errs = c.errors();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].contains("segment_thresholds"), "{errs:?}");
    assert!(matches!(c.validate(), Err(Error::Validation(_))));
}

#[test]
fn overrides_and_unknown_fields() {
    let c = GuardConfig::default()
        .with_overrides(&["lambda=0.7", "global.m_max=3", "segment_thresholds.n_max=1"])
        .unwrap();
    assert_eq!((c.lambda, c.global.m_max, c.segment_thresholds.n_max), (0.7, 3, 1));
    assert!(GuardConfig::default().with_overrides(&["lambda=2.0"]).is_err());
    assert!(GuardConfig::from_json(r#"{"lamda": 0.5}"#).is_err());
    assert_eq!(GuardConfig::from_json("{}").unwrap(), GuardConfig::default());
}

const G2: PropagationParams = PropagationParams {
    c_seg: 0.7,
    k1: 0.15,
    k2: 0.15,
    delta1: 0.05,
    f_fact_expected: 0.7,
};

#[test]
fn propagation_examples() {
    let t = propagate_thresholds(0.40, &G2).unwrap();
    assert!((t.tau_low - 0.355).abs() < 1e-12);
    assert!((t.tau_high - 0.43).abs() < 1e-12);
    assert!((t.tau_global - 0.70).abs() < 1e-12);
    let half = propagate_thresholds(0.4, &PropagationParams { c_seg: 0.5, ..G2 }).unwrap();
    assert_eq!(half.tau_high, 0.4);
    let full = propagate_thresholds(0.4, &PropagationParams { c_seg: 1.0, ..G2 }).unwrap();
    assert_eq!(full.tau_low, 0.4);
    assert!(matches!(
        propagate_thresholds(0.0, &PropagationParams { c_seg: 0.2, ..G2 }),
        Err(Error::InconsistentOutput { .. })
    ));
}

#[test]
fn formula_and_table_disagree_but_coexist() {
    // no margin in the documented range lifts 0.40 to the table's 0.75
    for k in [0.1, 0.15, 0.2] {
        let t = propagate_thresholds(0.40, &PropagationParams { k1: k, k2: k, ..G2 }).unwrap();
        assert!(t.tau_high < 0.75 - 0.25);
    }
    let needed_k1 = (0.75 - 0.40) / (0.7 - 0.5);
    assert!((needed_k1 - 1.75f64).abs() < 1e-12);
    assert_eq!(preset("thresholds-row4").unwrap().segment_thresholds.tau_high, 0.75);
}

fn config_strategy() -> impl Strategy<Value = GuardConfig> {
    (0.0f64..=1.0, 0.0f64..1.0, 0.05f64..2.0, 0.05f64..2.0, 1usize..64, 1usize..16, 0.0f64..1.0, 1usize..6, any::<u64>())
        .prop_map(|(lambda, tau, st, sa, l_max, top_m, a, m_max, seed)| {
            let mut c = GuardConfig {
                lambda,
                tau_token: tau,
                softmax_temperature: st,
                sampling_temperature: sa,
                l_max,
                top_m,
                seed,
                ..GuardConfig::default()
            };
            c.segment_weights.alpha = a;
            c.segment_weights.beta = (1.0 - a) / 2.0;
            c.segment_weights.gamma = 1.0 - a - c.segment_weights.beta;
            c.global.m_max = m_max;
            c
        })
}

proptest! {
    #[test]
    fn json_round_trip_is_lossless(c in config_strategy()) {
        let back = GuardConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn propagation_follows_the_formulas(
        tau in 0.0f64..=1.0,
        c_seg in 0.5f64..=1.0,
        k1 in 0.1f64..=0.2,
        k2 in 0.1f64..=0.2,
        delta1 in 0.05f64..=0.1,
        f_exp in 0.0f64..=1.0,
    ) {
        let p = PropagationParams { c_seg, k1, k2, delta1, f_fact_expected: f_exp };
        let high = (tau + k1 * (c_seg - 0.5)).clamp(0.0, 1.0);
        let low = (tau - k2 * (1.0 - c_seg)).clamp(0.0, 1.0);
        match propagate_thresholds(tau, &p) {
            Ok(t) => {
                prop_assert_eq!(t.tau_high, high);
                prop_assert_eq!(t.tau_low, low);
                prop_assert_eq!(t.tau_global, (high - delta1).max(f_exp).clamp(0.0, 1.0));
                prop_assert!(t.tau_low < t.tau_high);
                prop_assert!(t.tau_low <= tau && tau <= t.tau_high);
                prop_assert!(t.tau_global >= f_exp);
            }
            Err(Error::InconsistentOutput { .. }) => prop_assert!(low >= high),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
