use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use token_guard::backend::{Backend, SyntheticBackend, SyntheticBackendSpec, TokenCandidate};
use token_guard::error::Result;
use token_guard::global::{global_score, kmeans, ChainScorer, ChainScores, ReasoningChain};
use token_guard::guard::{token_score, ScoredToken, TokenScore};
use token_guard::segment::{
    refine_segment, RefineContext, RefineParams, Segment, SegmentStatus, SegmentThresholds,
    SegmentWeights,
};
use token_guard::vector::RunningMean;

use super::compact;

pub const WEIGHTS: SegmentWeights = SegmentWeights {
    alpha: 0.5,
    beta: 0.3,
    gamma: 0.2,
};

pub fn token(rng: &mut ChaCha8Rng, d: usize) -> ScoredToken {
    ScoredToken {
        candidate: TokenCandidate {
            token_id: rng.random_range(0..100),
            text: "t".into(),
            logprob: -rng.random::<f64>(),
            hidden: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        },
        score: TokenScore {
            value: rng.random_range(-0.5..1.0),
            cosine_part: 0.0,
            prob_part: 0.0,
            degenerate: false,
        },
    }
}

/// Straight-line recomputation of weights, representation and score.
pub fn brute(tokens: &[ScoredToken], anchor: &[f64], w: &SegmentWeights) -> (Vec<f64>, Vec<f64>, f64) {
    let n = tokens.len();
    let d = anchor.len();
    let exps: Vec<f64> = tokens.iter().map(|t| t.score.value.exp()).collect();
    let z: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut rep = vec![0.0; d];
    for (t, wi) in tokens.iter().zip(&weights) {
        for j in 0..d {
            rep[j] += wi * t.candidate.hidden[j];
        }
    }
    let tc: f64 = (0..n).map(|i| weights[i] * tokens[i].score.value).sum();
    let unit = |v: &[f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let cons = if n == 1 {
        1.0
    } else {
        let mut dist = 0.0;
        for i in 0..n - 1 {
            let (a, b) = (unit(&tokens[i].candidate.hidden), unit(&tokens[i + 1].candidate.hidden));
            dist += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / 2.0;
        }
        1.0 - dist / (n - 1) as f64
    };
    let (ur, ua) = (unit(&rep), unit(anchor));
    let align: f64 = ur.iter().zip(&ua).map(|(x, y)| x * y).sum();
    (weights, rep, w.alpha * tc + w.beta * cons + w.gamma * align)
}

pub struct Fixture {
    pub backend: SyntheticBackend,
    pub prefix: Vec<u32>,
    pub segment: Segment,
    pub mean_before: RunningMean,
    pub anchor: Vec<f64>,
    pub thresholds: SegmentThresholds,
    pub params: RefineParams,
}

pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = SyntheticBackendSpec::demo(seed);
    spec.d = rng.random_range(4..=32);
    spec.coherence = [rng.random_range(-0.5..0.5), rng.random_range(0.6..1.0)];
    spec.refine_cosine = rng.random_range(-0.5..1.0);
    spec.refine_probability = rng.random_range(0.05..0.95);
    spec.refine_includes_original = rng.random();
    let backend = SyntheticBackend::new(spec).unwrap();
    let prefix = backend.tokenize("did the drug lower the risk ? Answer:").unwrap();
    let anchor = token_guard::vector::mean(&backend.context_hiddens(&prefix).unwrap()).unwrap();
    let mean_before = RunningMean::new(anchor.len());
    let n = rng.random_range(1..=8);
    let mut ctx = prefix.clone();
    let mut mean = mean_before.clone();
    let mut tokens = Vec::new();
    for _ in 0..n {
        let cands = backend.candidates(&ctx, 4, 0.4).unwrap();
        let c = cands[rng.random_range(0..cands.len())].clone();
        let running = if mean.is_empty() { anchor.clone() } else { mean.mean().to_vec() };
        let score = token_score(&c.hidden, &running, c.logprob.exp(), 0.6);
        mean.push(&c.hidden).unwrap();
        ctx.push(c.token_id);
        tokens.push(ScoredToken { candidate: c, score });
    }
    let segment = Segment::score(tokens, &anchor, &WEIGHTS, 0).unwrap();
    let tau_low = rng.random_range(0.2..0.6);
    let thresholds = SegmentThresholds {
        tau_low,
        tau_high: rng.random_range(tau_low + 0.05..0.95),
        n_max: rng.random_range(1..=4),
    };
    let params = RefineParams {
        lambda: 0.6,
        softmax_temperature: 0.3,
        sampling_temperature: 0.4,
        weights: WEIGHTS,
        top_m: 8,
        n_candidates: rng.random_range(1..=4),
        max_len: rng.random_range(n..=n + 3),
    };
    Fixture {
        backend,
        prefix,
        segment,
        mean_before,
        anchor,
        thresholds,
        params,
    }
}

/// Runs refinement on one fixture and checks the contract. Returns whether
/// the segment was accepted after at least one round.
pub fn check_refinement(fx: &Fixture) -> Result<bool, String> {
    let before = fx.segment.clone();
    let out = refine_segment(
        before.clone(),
        RefineContext {
            prefix_ids: &fx.prefix,
            mean_before: &fx.mean_before,
            anchor: &fx.anchor,
        },
        &fx.backend,
        &fx.thresholds,
        &fx.params,
    );
    let after = &out.segment;
    let fail = |msg: String| Err(msg);
    if out.rounds.len() > fx.thresholds.n_max {
        return fail(format!("{} rounds over n_max {}", out.rounds.len(), fx.thresholds.n_max));
    }
    if out.peak_len > fx.params.max_len.max(before.len()) {
        return fail(format!("peak length {}", out.peak_len));
    }
    match after.status {
        SegmentStatus::Accepted if after.seg_score < fx.thresholds.tau_high => {
            return fail(format!("accepted at {} under {}", after.seg_score, fx.thresholds.tau_high))
        }
        SegmentStatus::Accepted => {}
        SegmentStatus::Discarded if after.tokens != before.tokens => {
            return fail("discarded segment kept a splice".into())
        }
        SegmentStatus::Discarded => {}
        other => return fail(format!("ended in {other:?}")),
    }

    // splice conservation: length bookkeeping and untouched head and tail
    let mut len = before.len();
    let (mut head, mut tail) = (len, len);
    for r in &out.rounds {
        if r.seg_score_after < r.seg_score_before || (!r.spliced && r.seg_score_after != r.seg_score_before) {
            return fail(format!("round {} moved the score without a splice", r.round));
        }
        if r.spliced {
            head = head.min(r.window_start);
            tail = tail.min(len - r.window_start - r.window_len);
            len = len - r.window_len + r.replacement_len;
        }
    }
    if after.status == SegmentStatus::Accepted {
        if after.len() != len
            || after.tokens[..head] != before.tokens[..head]
            || after.tokens[after.len() - tail..] != before.tokens[before.len() - tail..]
        {
            return fail("splice changed tokens outside its window".into());
        }
        let rescored = Segment::score(after.tokens.clone(), &fx.anchor, &WEIGHTS, 0).map_err(|e| e.to_string())?;
        if (rescored.seg_score - after.seg_score).abs() > 1e-12 {
            return fail("reported score does not match the tokens".into());
        }
    }
    Ok(after.status == SegmentStatus::Accepted && !out.rounds.is_empty())
}

/// Largest deviation of the engine's weights, representation and score
/// from [`brute`] on a random segment.
pub fn segment_oracle_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=8);
    let d = rng.random_range(1..=16);
    let tokens: Vec<ScoredToken> = (0..n).map(|_| token(&mut rng, d)).collect();
    let anchor: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = rng.random::<f64>();
    let b = rng.random::<f64>() * (1.0 - a);
    let w = SegmentWeights {
        alpha: a,
        beta: b,
        gamma: 1.0 - a - b,
    };
    let seg = Segment::score(tokens.clone(), &anchor, &w, 0).unwrap();
    let (weights, rep, score) = brute(&tokens, &anchor, &w);
    let diffs = seg
        .weights
        .iter()
        .zip(&weights)
        .chain(seg.representation.iter().zip(&rep))
        .map(|(x, y)| (x - y).abs());
    diffs.fold((seg.seg_score - score).abs(), f64::max)
}

/// SSE of a k-means fit and the exhaustive optimum on a random instance
/// of at most eight points.
pub fn kmeans_instance(seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let k = rng.random_range(1..=n.min(4));
    let d = rng.random_range(1..=3);
    let points: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let fit = kmeans(&points, k, seed).unwrap();
    (sse(&points, &fit.assignments, k), fit.inertia, exhaustive_optimum(&points, k))
}

pub fn sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> =
                points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                return 0.0;
            }
            let centre: Vec<f64> = (0..d)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            members
                .iter()
                .map(|p| p.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum()
        })
        .sum()
}

/// Minimum SSE over every assignment of points to `k` non-empty clusters.
pub fn exhaustive_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    fn go(i: usize, used: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], k: usize, best: &mut f64) {
        if i == points.len() {
            if used == k {
                *best = best.min(sse(points, labels, k));
            }
            return;
        }
        // restricted growth strings enumerate each partition once
        for c in 0..(used + 1).min(k) {
            labels[i] = c;
            go(i + 1, used.max(c + 1), labels, points, k, best);
        }
    }
    let mut best = f64::INFINITY;
    go(0, 0, &mut vec![0; points.len()], points, k, &mut best);
    best
}

/// Returns fixed scores keyed by cluster id.
pub struct Fixed(pub Vec<(f64, f64)>);

impl ChainScorer for Fixed {
    fn score(&self, chain: &ReasoningChain) -> Result<ChainScores> {
        let (f, l) = self.0[chain.cluster_id];
        Ok(ChainScores {
            f_fact: f,
            f_logic: l,
            f_global: global_score(f, l),
            fact_degenerate: false,
        })
    }
}

pub fn chains(n: usize) -> Vec<ReasoningChain> {
    (0..n)
        .map(|i| ReasoningChain::new(vec![compact(i, &[i as u32 + 1], "w", vec![1.0, i as f64], 0.8)], i))
        .collect()
}
