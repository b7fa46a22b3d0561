//! Three-stage per-block classifier: Gaussian likelihood, cosine-distance
//! illumination check, temporal-correlation check. The first stage to call a
//! block background ends the cascade; a block is foreground only when all
//! three decline.

use crate::descriptor::Descriptor;
use crate::model::{BlockModel, PrevLabel};

/// Norms below this are treated as zero vectors by the cosine distance.
const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelValue {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecidedBy {
    Stage1,
    Stage2,
    Stage3,
    /// All stages declined: the block is foreground.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLabel {
    pub value: LabelValue,
    pub decided_by: DecidedBy,
}

impl BlockLabel {
    pub fn is_foreground(&self) -> bool {
        self.value == LabelValue::Foreground
    }
}

/// Per-run instrumentation: how often each stage ran and how often the model
/// adapted. `stage1_evals` counts every classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CascadeStats {
    pub stage1_evals: u64,
    pub stage2_evals: u64,
    pub stage3_evals: u64,
    pub background_stage1: u64,
    pub background_stage2: u64,
    pub background_stage3: u64,
    pub foreground: u64,
    pub adapt_calls: u64,
}

impl CascadeStats {
    pub fn background_total(&self) -> u64 {
        self.background_stage1 + self.background_stage2 + self.background_stage3
    }

    pub fn merge(&mut self, other: &CascadeStats) {
        self.stage1_evals += other.stage1_evals;
        self.stage2_evals += other.stage2_evals;
        self.stage3_evals += other.stage3_evals;
        self.background_stage1 += other.background_stage1;
        self.background_stage2 += other.background_stage2;
        self.background_stage3 += other.background_stage3;
        self.foreground += other.foreground;
        self.adapt_calls += other.adapt_calls;
    }
}

/// Cosine distance `1 - cos(angle)` in `[0, 2]`. Invariant under positive
/// scaling of either argument, which is what makes it an illumination cue.
/// Zero-norm inputs report maximal dissimilarity so all-black blocks never
/// pass the angular checks.
pub fn cosdist(a: &Descriptor, b: &Descriptor) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    let na = na.sqrt();
    let nb = nb.sqrt();
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Runs the cascade for one block and applies the side effects: background
/// labels adapt the model, and the descriptor/label pair is stored for the
/// temporal check in the next frame.
pub fn classify_block(
    model: &mut BlockModel,
    d: &Descriptor,
    c1: f64,
    c2: f64,
    rho: f64,
    variance_floor: f64,
    stats: &mut CascadeStats,
) -> BlockLabel {
    stats.stage1_evals += 1;
    let label = if model.stage1_is_background(d) {
        stats.background_stage1 += 1;
        BlockLabel {
            value: LabelValue::Background,
            decided_by: DecidedBy::Stage1,
        }
    } else {
        stats.stage2_evals += 1;
        if cosdist(d, &model.mu) <= c1 {
            stats.background_stage2 += 1;
            BlockLabel {
                value: LabelValue::Background,
                decided_by: DecidedBy::Stage2,
            }
        } else {
            stats.stage3_evals += 1;
            if model.prev_label == PrevLabel::Background && cosdist(&model.prev_descriptor, d) <= c2
            {
                stats.background_stage3 += 1;
                BlockLabel {
                    value: LabelValue::Background,
                    decided_by: DecidedBy::Stage3,
                }
            } else {
                stats.foreground += 1;
                BlockLabel {
                    value: LabelValue::Foreground,
                    decided_by: DecidedBy::Exhausted,
                }
            }
        }
    };

    if label.value == LabelValue::Background {
        model.adapt(d, rho, variance_floor);
        stats.adapt_calls += 1;
        model.prev_label = PrevLabel::Background;
    } else {
        model.prev_label = PrevLabel::Foreground;
    }
    model.prev_descriptor = *d;
    label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::DESCRIPTOR_DIM;
    use crate::model::BlockModel;
    use rand::{Rng, SeedableRng};

    const C1: f64 = 0.001;
    const C2: f64 = 0.0005;
    const RHO: f64 = 0.01;
    const FLOOR: f64 = 1e-4;

    fn desc(v: f64) -> Descriptor {
        [v; DESCRIPTOR_DIM]
    }

    fn classify(model: &mut BlockModel, d: &Descriptor, stats: &mut CascadeStats) -> BlockLabel {
        classify_block(model, d, C1, C2, RHO, FLOOR, stats)
    }

    #[test]
    fn cosdist_basics() {
        let v: Descriptor = core::array::from_fn(|k| (k + 1) as f64);
        assert!(cosdist(&v, &v).abs() < 1e-12);
        let scaled: Descriptor = core::array::from_fn(|k| 3.5 * (k + 1) as f64);
        assert!(cosdist(&v, &scaled).abs() < 1e-12, "scale invariance");
        let mut e1 = [0.0; DESCRIPTOR_DIM];
        e1[0] = 1.0;
        let mut e2 = [0.0; DESCRIPTOR_DIM];
        e2[1] = 1.0;
        assert!((cosdist(&e1, &e2) - 1.0).abs() < 1e-12);
        let zero = [0.0; DESCRIPTOR_DIM];
        assert_eq!(cosdist(&zero, &v), 1.0, "zero-norm guard");
    }

    #[test]
    fn mean_descriptor_decides_at_stage1_without_consulting_later_stages() {
        let mut model = BlockModel::new(desc(10.0), desc(1.0));
        let mut stats = CascadeStats::default();
        let label = classify(&mut model, &desc(10.0), &mut stats);
        assert_eq!(label.value, LabelValue::Background);
        assert_eq!(label.decided_by, DecidedBy::Stage1);
        assert_eq!(stats.stage2_evals, 0);
        assert_eq!(stats.stage3_evals, 0);
        assert_eq!(stats.adapt_calls, 1);
    }

    #[test]
    fn pure_scaling_is_absorbed_by_stage2() {
        // Mean far from the origin with tight variance: tripling the
        // descriptor fails stage 1 but has zero angular distance.
        let mu: Descriptor = core::array::from_fn(|k| 100.0 + k as f64);
        let mut model = BlockModel::new(mu, desc(0.01));
        let d: Descriptor = core::array::from_fn(|k| 3.0 * mu[k]);
        let mut stats = CascadeStats::default();
        let label = classify(&mut model, &d, &mut stats);
        assert_eq!(label.value, LabelValue::Background);
        assert_eq!(label.decided_by, DecidedBy::Stage2);
        assert_eq!(stats.stage2_evals, 1);
        assert_eq!(stats.stage3_evals, 0);
    }

    /// Rotates `v` by `angle` radians inside the plane spanned by axes 0, 1.
    fn rotate(v: &Descriptor, angle: f64) -> Descriptor {
        let mut out = *v;
        let (s, c) = angle.sin_cos();
        out[0] = c * v[0] - s * v[1];
        out[1] = s * v[0] + c * v[1];
        out
    }

    #[test]
    fn temporal_correlation_rescues_slowly_rotating_descriptor() {
        // Frame t labels p background (stage 2); frame t+1 presents d,
        // rotated slightly beyond C1 from the mean but within C2 of p.
        let mu: Descriptor = core::array::from_fn(|k| if k < 2 { 50.0 } else { 5.0 });
        let p = rotate(&mu, 0.055);
        let d = rotate(&mu, 0.085);

        // Distances verified against the definition before asserting labels:
        // cos distance of a rotation by theta is 1 - cos(theta) ~ theta^2/2.
        let dist_p_mu = cosdist(&p, &mu);
        let dist_d_mu = cosdist(&d, &mu);
        let dist_p_d = cosdist(&p, &d);
        assert!(dist_p_mu > C1, "p vs mu = {dist_p_mu}");
        assert!(dist_d_mu > C1, "d vs mu = {dist_d_mu}");
        assert!(dist_p_d <= C2, "p vs d = {dist_p_d}");

        let mut model = BlockModel::new(mu, desc(1e-6));
        model.prev_label = crate::model::PrevLabel::Background;
        model.prev_descriptor = p;
        let mut stats = CascadeStats::default();
        let label = classify(&mut model, &d, &mut stats);
        assert_eq!(label.decided_by, DecidedBy::Stage3);
        assert_eq!(label.value, LabelValue::Background);
    }

    #[test]
    fn stage3_requires_background_previous_label() {
        let mu: Descriptor = core::array::from_fn(|k| if k < 2 { 50.0 } else { 5.0 });
        let p = rotate(&mu, 0.055);
        let d = rotate(&mu, 0.085);
        let mut model = BlockModel::new(mu, desc(1e-6));
        model.prev_label = crate::model::PrevLabel::Foreground;
        model.prev_descriptor = p;
        let mut stats = CascadeStats::default();
        let label = classify(&mut model, &d, &mut stats);
        assert_eq!(label.value, LabelValue::Foreground);
        assert_eq!(label.decided_by, DecidedBy::Exhausted);
        assert_eq!(stats.adapt_calls, 0, "foreground never adapts");
    }

    #[test]
    fn unset_previous_label_disables_stage3() {
        let mu: Descriptor = core::array::from_fn(|k| if k < 2 { 50.0 } else { 5.0 });
        let d = rotate(&mu, 0.085);
        let mut model = BlockModel::new(mu, desc(1e-6));
        // prev_descriptor identical to d, yet unset still blocks stage 3.
        model.prev_descriptor = d;
        let mut stats = CascadeStats::default();
        let label = classify(&mut model, &d, &mut stats);
        assert_eq!(label.value, LabelValue::Foreground);
    }

    #[test]
    fn prev_state_updates_every_classification() {
        let mut model = BlockModel::new(desc(10.0), desc(1.0));
        let mut stats = CascadeStats::default();
        let d1 = desc(10.0);
        classify(&mut model, &d1, &mut stats);
        assert_eq!(model.prev_descriptor, d1);
        assert_eq!(model.prev_label, crate::model::PrevLabel::Background);

        // Not collinear with mu, so stage 2 cannot absorb it.
        let mut d2 = desc(0.0);
        d2[0] = 500.0;
        let label = classify(&mut model, &d2, &mut stats);
        assert!(label.is_foreground());
        assert_eq!(model.prev_descriptor, d2, "raw incoming descriptor stored");
        assert_eq!(model.prev_label, crate::model::PrevLabel::Foreground);
    }

    #[test]
    fn adapt_called_iff_background() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut model = BlockModel::new(desc(20.0), desc(1.0));
        let mut stats = CascadeStats::default();
        for _ in 0..200 {
            let d: Descriptor = core::array::from_fn(|_| rng.gen_range(-40.0..80.0));
            classify(&mut model, &d, &mut stats);
        }
        assert_eq!(stats.adapt_calls, stats.background_total());
        assert_eq!(stats.stage1_evals, 200);
        assert_eq!(
            stats.stage2_evals,
            stats.stage1_evals - stats.background_stage1
        );
        assert_eq!(
            stats.stage3_evals,
            stats.stage2_evals - stats.background_stage2
        );
        assert_eq!(
            stats.foreground,
            stats.stage3_evals - stats.background_stage3
        );
    }

    #[test]
    fn determinism_same_state_same_label() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let mu: Descriptor = core::array::from_fn(|_| rng.gen_range(-30.0..30.0));
            let var: Descriptor = core::array::from_fn(|_| rng.gen_range(0.01..4.0));
            let d: Descriptor = core::array::from_fn(|_| rng.gen_range(-30.0..30.0));
            let mut a = BlockModel::new(mu, var);
            let mut b = a.clone();
            let mut sa = CascadeStats::default();
            let mut sb = CascadeStats::default();
            let la = classify(&mut a, &d, &mut sa);
            let lb = classify(&mut b, &d, &mut sb);
            assert_eq!(la, lb);
            assert_eq!(a.mu, b.mu);
        }
    }

    #[test]
    fn enlarging_c1_never_flips_background_to_foreground() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let mu: Descriptor = core::array::from_fn(|_| rng.gen_range(1.0..60.0));
            let var: Descriptor = core::array::from_fn(|_| rng.gen_range(0.01..2.0));
            let d: Descriptor = core::array::from_fn(|_| rng.gen_range(1.0..60.0));
            let prev: Descriptor = core::array::from_fn(|_| rng.gen_range(1.0..60.0));
            let c1_small = rng.gen_range(0.0..0.3);
            let c1_large = c1_small + rng.gen_range(0.0..0.5);

            let run = |c1: f64| {
                let mut model = BlockModel::new(mu, var);
                model.prev_label = crate::model::PrevLabel::Background;
                model.prev_descriptor = prev;
                let mut stats = CascadeStats::default();
                classify_block(&mut model, &d, c1, 0.5 * c1, RHO, FLOOR, &mut stats).value
            };
            if run(c1_small) == LabelValue::Background {
                assert_eq!(run(c1_large), LabelValue::Background);
            }
        }
    }
}
