//! Engine configuration, named presets and threshold propagation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::GlobalConfig;
use crate::segment::{SegmentThresholds, SegmentWeights};

/// Every tunable of the three stages.
///
/// Serialises to JSON with these field names; missing fields take the
/// `paper-default` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardConfig {
    pub lambda: f64,
    pub tau_token: f64,
    pub softmax_temperature: f64,
    pub sampling_temperature: f64,
    pub segment_weights: SegmentWeights,
    pub segment_thresholds: SegmentThresholds,
    /// Segment buffer capacity.
    pub l_max: usize,
    pub top_m: usize,
    pub global: GlobalConfig,
    pub gamma_penalty: f64,
    pub seed: u64,
    /// Generation budget per answer, in tokens.
    pub max_new_tokens: usize,
    /// Candidate windows requested per refinement round.
    pub refine_candidates: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            tau_token: 0.4,
            softmax_temperature: 0.3,
            sampling_temperature: 0.4,
            segment_weights: SegmentWeights {
                alpha: 0.5,
                beta: 0.3,
                gamma: 0.2,
            },
            segment_thresholds: SegmentThresholds {
                tau_low: 0.55,
                tau_high: 0.75,
                n_max: 3,
            },
            l_max: 16,
            top_m: 8,
            global: GlobalConfig::default(),
            gamma_penalty: 1.0,
            seed: 0,
            max_new_tokens: 32,
            refine_candidates: 3,
        }
    }
}

/// `(τ_token, τ_low, τ_high, τ_global)` rows of the reference threshold table.
pub const THRESHOLD_ROWS: [(f64, f64, f64, f64); 9] = [
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

/// `(λ, Δτ, (α, β, γ), N_max, M_max)` rows of the reference grid search.
pub const GRID_ROWS: [(f64, f64, (f64, f64, f64), usize, usize); 15] = [
    (0.4, 0.05, (0.3, 0.3, 0.4), 2, 2),
    (0.4, 0.10, (0.4, 0.3, 0.3), 2, 3),
    (0.4, 0.15, (0.5, 0.25, 0.25), 2, 4),
    (0.5, 0.05, (0.3, 0.3, 0.4), 3, 2),
    (0.5, 0.10, (0.4, 0.3, 0.3), 3, 3),
    (0.5, 0.15, (0.5, 0.25, 0.25), 3, 4),
    (0.6, 0.05, (0.3, 0.3, 0.4), 3, 2),
    (0.6, 0.10, (0.5, 0.3, 0.2), 3, 2),
    (0.6, 0.15, (0.5, 0.25, 0.25), 2, 4),
    (0.7, 0.05, (0.3, 0.3, 0.4), 3, 2),
    (0.7, 0.10, (0.4, 0.3, 0.3), 3, 3),
    (0.7, 0.15, (0.5, 0.25, 0.25), 3, 4),
    (0.8, 0.05, (0.3, 0.3, 0.4), 2, 2),
    (0.8, 0.10, (0.4, 0.3, 0.3), 2, 3),
    (0.8, 0.15, (0.5, 0.25, 0.25), 3, 4),
];

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["paper-default".to_string()];
    names.extend((1..=THRESHOLD_ROWS.len()).map(|i| format!("thresholds-row{i}")));
    names.extend((1..=GRID_ROWS.len()).map(|i| format!("grid-{i}")));
    names
}

/// A named configuration.
///
/// `thresholds-rowN` and `grid-N` start from `paper-default` and replace
/// only the values their table row lists.
///
/// ```
/// let c = token_guard::config::preset("thresholds-row4").unwrap();
/// assert_eq!(c.tau_token, 0.40);
/// assert_eq!(c.segment_thresholds.tau_high, 0.75);
/// assert!(token_guard::config::preset("nope").is_err());
/// ```
pub fn preset(name: &str) -> Result<GuardConfig> {
    let mut c = GuardConfig::default();
    let row = |prefix: &str, len: usize| {
        name.strip_prefix(prefix)
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=len).contains(n))
    };
    if name == "paper-default" {
        return Ok(c);
    }
    if let Some(i) = row("thresholds-row", THRESHOLD_ROWS.len()) {
        let (tok, low, high, glob) = THRESHOLD_ROWS[i - 1];
        c.tau_token = tok;
        c.segment_thresholds.tau_low = low;
        c.segment_thresholds.tau_high = high;
        c.global.tau_global = glob;
        return Ok(c);
    }
    if let Some(i) = row("grid-", GRID_ROWS.len()) {
        let (lambda, delta, (alpha, beta, gamma), n_max, m_max) = GRID_ROWS[i - 1];
        c.lambda = lambda;
        c.global.delta_tau = delta;
        c.segment_weights = SegmentWeights { alpha, beta, gamma };
        c.segment_thresholds.n_max = n_max;
        c.global.m_max = m_max;
        return Ok(c);
    }
    Err(Error::UnknownPreset {
        name: name.to_string(),
        valid: preset_names(),
    })
}

impl GuardConfig {
    /// Every violated invariant, each prefixed by its field path.
    pub fn errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut unit = |path: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{path}: {v} outside [0, 1]"));
            }
        };
        unit("lambda", self.lambda);
        unit("tau_token", self.tau_token);
        unit("segment_thresholds.tau_low", self.segment_thresholds.tau_low);
        unit("segment_thresholds.tau_high", self.segment_thresholds.tau_high);
        unit("global.tau_global", self.global.tau_global);
        unit("global.cannot_answer_floor", self.global.cannot_answer_floor);
        unit("global.low_high_split", self.global.low_high_split);
        for (path, t) in [
            ("softmax_temperature", self.softmax_temperature),
            ("sampling_temperature", self.sampling_temperature),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                errs.push(format!("{path}: temperature must be > 0, got {t}"));
            }
        }
        let w = self.segment_weights;
        let sum = w.alpha + w.beta + w.gamma;
        if (sum - 1.0).abs() > 1e-9 {
            errs.push(format!("segment_weights: alpha+beta+gamma = {sum}, expected 1"));
        }
        for (path, v) in [("alpha", w.alpha), ("beta", w.beta), ("gamma", w.gamma)] {
            if v < 0.0 {
                errs.push(format!("segment_weights.{path}: {v} is negative"));
            }
        }
        let t = self.segment_thresholds;
        if t.tau_low >= t.tau_high {
            errs.push(format!(
                "segment_thresholds: tau_low {} must be below tau_high {}",
                t.tau_low, t.tau_high
            ));
        }
        let g = self.global;
        if !(g.tau_global > 0.0 && g.tau_global < 1.0) {
            errs.push(format!("global.tau_global: {} outside (0, 1)", g.tau_global));
        }
        if !(g.delta_tau > 0.0) {
            errs.push(format!("global.delta_tau: must be > 0, got {}", g.delta_tau));
        }
        if !(g.consensus.alpha > 0.0 && g.consensus.alpha < 1.0) {
            errs.push(format!("global.consensus.alpha: {} outside (0, 1)", g.consensus.alpha));
        }
        if self.gamma_penalty < 0.0 {
            errs.push(format!("gamma_penalty: {} is negative", self.gamma_penalty));
        }
        for (path, v) in [
            ("segment_thresholds.n_max", t.n_max),
            ("l_max", self.l_max),
            ("top_m", self.top_m),
            ("global.m_max", g.m_max),
            ("max_new_tokens", self.max_new_tokens),
            ("refine_candidates", self.refine_candidates),
        ] {
            if v == 0 {
                errs.push(format!("{path}: must be >= 1"));
            }
        }
        if g.n_clusters == Some(0) {
            errs.push("global.n_clusters: must be >= 1".to_string());
        }
        errs
    }

    pub fn validate(self) -> Result<Self> {
        let errs = self.errors();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<Self>(text)
            .map_err(|e| Error::Validation(vec![e.to_string()]))?
            .validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `dotted.path=value` overrides. Values are read as JSON,
    /// falling back to a plain string.
    ///
    /// ```
    /// use token_guard::config::GuardConfig;
    /// let c = GuardConfig::default()
    ///     .with_overrides(&["global.m_max=3", "lambda=0.5"])
    ///     .unwrap();
    /// assert_eq!((c.global.m_max, c.lambda), (3, 0.5));
    /// ```
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self).expect("config serialises");
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override `{o}` is not path=value")))?;
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut slot = &mut root;
            for key in path.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(key))
                    .ok_or_else(|| Error::Validation(vec![format!("{path}: unknown field")]))?;
            }
            *slot = value;
        }
        serde_json::from_value::<Self>(root)
            .map_err(|e| Error::Validation(vec![e.to_string()]))?
            .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    /// Expected segment coherence in `[0, 1]`.
    pub c_seg: f64,
    pub k1: f64,
    pub k2: f64,
    pub delta1: f64,
    pub f_fact_expected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatedThresholds {
    pub tau_low: f64,
    pub tau_high: f64,
    pub tau_global: f64,
}

/// Derives segment and global thresholds from the token threshold.
///
/// `τ_high = τ + k1(C − 0.5)`, `τ_low = τ − k2(1 − C)`,
/// `τ_global = max(τ_high − Δ1, F_expected)`, all clamped to `[0, 1]`.
/// These formulas do not reproduce the reference threshold table; use the
/// `thresholds-rowN` presets for those values.
///
/// ```
/// use token_guard::config::{propagate_thresholds, PropagationParams};
/// let p = PropagationParams { c_seg: 0.7, k1: 0.15, k2: 0.15, delta1: 0.05, f_fact_expected: 0.7 };
/// let t = propagate_thresholds(0.40, &p).unwrap();
/// assert!((t.tau_low - 0.355).abs() < 1e-12);
/// assert!((t.tau_high - 0.43).abs() < 1e-12);
/// assert!((t.tau_global - 0.70).abs() < 1e-12);
/// ```
pub fn propagate_thresholds(tau_token: f64, p: &PropagationParams) -> Result<PropagatedThresholds> {
    if !(0.0..=1.0).contains(&p.c_seg) {
        return Err(Error::InvalidArgument(format!("c_seg {} outside [0, 1]", p.c_seg)));
    }
    if !(p.k1 > 0.0 && p.k2 > 0.0) {
        return Err(Error::InvalidArgument("k1 and k2 must be > 0".into()));
    }
    if !(p.delta1 > 0.0 && p.delta1 < 1.0) {
        return Err(Error::InvalidArgument(format!("delta1 {} outside (0, 1)", p.delta1)));
    }
    let f_bar = tau_token;
    let tau_high = (f_bar + p.k1 * (p.c_seg - 0.5)).clamp(0.0, 1.0);
    let tau_low = (f_bar - p.k2 * (1.0 - p.c_seg)).clamp(0.0, 1.0);
    let tau_global = (tau_high - p.delta1).max(p.f_fact_expected).clamp(0.0, 1.0);
    if tau_low >= tau_high {
        return Err(Error::InconsistentOutput {
            low: tau_low,
            high: tau_high,
        });
    }
    Ok(PropagatedThresholds {
        tau_low,
        tau_high,
        tau_global,
    })
}
