//! Pseudo-label exchange between the experts and the four-stage training
//! procedure.
//!
//! S1 trains the extrinsic classifier on ground truth. In S2 the extrinsic
//! expert labels sampled candidates for the intrinsic expert; S3 reverses
//! the roles. S4 trains the gate and both experts on the blended output,
//! with pseudo-labels drawn from both experts.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::moe::{Catalog, MoseModel, Pair};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::param::ParamId;
use crate::rng::{self, Rng};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    S1,
    S2,
    S3,
    S4,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::S1 => "S1",
            Stage::S2 => "S2",
            Stage::S3 => "S3",
            Stage::S4 => "S4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expert {
    Extrinsic,
    Intrinsic,
}

impl Expert {
    pub fn name(self) -> &'static str {
        match self {
            Expert::Extrinsic => "extrinsic",
            Expert::Intrinsic => "intrinsic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynergyConfig {
    /// Candidate sampling rate when the extrinsic expert labels (S2).
    pub alpha_a: f64,
    /// Pseudo-positive rate when the extrinsic expert labels.
    pub beta_a: f64,
    /// True-positive weight in the S2 loss.
    pub gamma_a: u32,
    pub alpha_b: f64,
    pub beta_b: f64,
    pub gamma_b: u32,
    pub beta_g: f64,
    pub gamma_g: u32,
    pub epochs: [usize; 4],
    pub lr: [f64; 4],
    /// Learning rate of the gate in S4.
    pub gate_lr: f64,
    pub optimizer: OptimizerKind,
    /// Exchange pseudo-labels; `false` trains every stage on ground truth
    /// only with unit weights.
    pub pseudo_labels: bool,
    pub seed: u64,
}

impl Default for SynergyConfig {
    fn default() -> Self {
        Self {
            alpha_a: 0.05,
            beta_a: 0.05,
            gamma_a: 4,
            alpha_b: 0.05,
            beta_b: 0.05,
            gamma_b: 4,
            beta_g: 0.05,
            gamma_g: 4,
            epochs: [200, 100, 100, 100],
            lr: [0.003, 0.003, 0.003, 0.0005],
            gate_lr: 0.0003,
            optimizer: OptimizerKind::Adam,
            pseudo_labels: true,
            seed: 0,
        }
    }
}

impl SynergyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_a", self.alpha_a), ("alpha_b", self.alpha_b)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1]")));
            }
        }
        for (name, b) in [("beta_a", self.beta_a), ("beta_b", self.beta_b), ("beta_g", self.beta_g)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1)")));
            }
        }
        for (name, g) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b), ("gamma_g", self.gamma_g)] {
            if g < 1 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.lr.iter().chain([&self.gate_lr]).any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::config("learning rates must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Uniform sample without replacement of `floor(alpha * drugs * targets)`
/// pairs from the eligible, non-excluded part of the cartesian product,
/// returned in ascending pair order.
pub fn sample_candidates(
    drugs: usize,
    targets: usize,
    alpha: f64,
    exclude: &BTreeSet<Pair>,
    eligible: impl Fn(Pair) -> bool,
    rng: &mut Rng,
) -> Result<Vec<Pair>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config("candidate rate must lie in (0, 1]"));
    }
    let want = libm::floor(alpha * (drugs * targets) as f64) as usize;
    let pool: Vec<Pair> = (0..drugs)
        .flat_map(|d| (0..targets).map(move |t| Pair::new(d, t)))
        .filter(|p| !exclude.contains(p) && eligible(*p))
        .collect();
    if want == 0 || pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let take = want.min(pool.len());
    if take < want {
        log::warn!("candidate pool holds {} pairs, fewer than the requested {want}", pool.len());
    }
    let mut idx = sample(rng, pool.len(), take).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i]).collect())
}

/// Negatives needed to balance a stage: `gamma * |X^p| + |X^p_pseudo| - |X^n|`,
/// floored at zero. The flag reports whether the floor applied.
pub fn needed_negatives(gamma: u32, positives: usize, pseudo_positives: usize, negatives: usize) -> (usize, bool) {
    let want = gamma as i64 * positives as i64 + pseudo_positives as i64 - negatives as i64;
    (want.max(0) as usize, want < 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointNegatives {
    /// Pseudo-negatives drawn for each expert.
    pub per_expert: usize,
    pub odd: bool,
    pub clamped: bool,
}

/// Per-expert pseudo-negative count of the joint stage:
/// `floor((gamma_g |X^p| + |X_A| + |X_B| - |X^n|) / 2)`, floored at zero.
pub fn joint_negatives(gamma_g: u32, positives: usize, pos_a: usize, pos_b: usize, negatives: usize) -> JointNegatives {
    let num = gamma_g as i64 * positives as i64 + pos_a as i64 + pos_b as i64 - negatives as i64;
    JointNegatives {
        per_expert: (num.max(0) / 2) as usize,
        odd: num > 0 && num % 2 != 0,
        clamped: num < 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    pub generator: Expert,
    pub candidates: Vec<Pair>,
    pub scores: Vec<f64>,
    pub positives: Vec<Pair>,
    pub negatives: Vec<Pair>,
}

/// Candidate positions ranked by descending score, ties by ascending
/// position.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Top `floor(beta * n)` candidates become pseudo-positives and the last
/// `needed_negatives` of the same ranking pseudo-negatives.
pub fn select_pseudo_labels(
    generator: Expert,
    candidates: &[Pair],
    scores: &[f64],
    beta: f64,
    needed_negatives: usize,
) -> Result<PseudoLabelBatch> {
    if candidates.len() != scores.len() {
        return Err(Error::contract("candidate and score counts differ"));
    }
    let k = libm::floor(beta * candidates.len() as f64) as usize;
    select_counts(generator, candidates, scores, k, needed_negatives)
}

fn select_counts(
    generator: Expert,
    candidates: &[Pair],
    scores: &[f64],
    k: usize,
    m: usize,
) -> Result<PseudoLabelBatch> {
    let n = candidates.len();
    if k + m > n {
        return Err(Error::SelectionOverlap {
            positives: k,
            negatives: m,
            candidates: n,
        });
    }
    let order = rank_order(scores);
    Ok(PseudoLabelBatch {
        generator,
        candidates: candidates.to_vec(),
        scores: scores.to_vec(),
        positives: order[..k].iter().map(|&i| candidates[i]).collect(),
        negatives: order[n - m..].iter().map(|&i| candidates[i]).collect(),
    })
}

/// Training pairs with binary targets and per-pair loss weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedExamples {
    pub pairs: Vec<Pair>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedExamples {
    /// True positives weigh `gamma`; every other pair weighs one.
    pub fn new(positives: &[Pair], negatives: &[Pair], pseudo_pos: &[Pair], pseudo_neg: &[Pair], gamma: u32) -> Self {
        let mut ex = WeightedExamples::default();
        let mut push = |pairs: &[Pair], y: f64, w: f64| {
            for &p in pairs {
                ex.pairs.push(p);
                ex.targets.push(y);
                ex.weights.push(w);
            }
        };
        push(positives, 1.0, gamma as f64);
        push(pseudo_pos, 1.0, 1.0);
        push(negatives, 0.0, 1.0);
        push(pseudo_neg, 0.0, 1.0);
        ex
    }

    pub fn positive_weight(&self) -> f64 {
        self.targets.iter().zip(&self.weights).filter(|(y, _)| **y == 1.0).map(|(_, w)| w).sum()
    }

    pub fn negative_weight(&self) -> f64 {
        self.targets.iter().zip(&self.weights).filter(|(y, _)| **y == 0.0).map(|(_, w)| w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Weighted binary cross-entropy of expert logits, summed over pairs.
pub fn synergize_loss(tape: &mut Tape, logits: Var, examples: &WeightedExamples) -> Result<Var> {
    if examples.positive_weight() <= 0.0 {
        return Err(Error::NoPositives);
    }
    tape.bce_with_logits(logits, &examples.targets, &examples.weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    /// Weighted loss divided by total weight.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLog {
    pub stage: Stage,
    pub generator: Expert,
    pub candidates: usize,
    pub pseudo_positives: usize,
    pub pseudo_negatives: usize,
    pub positive_weight: f64,
    pub negative_weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub batches: Vec<BatchLog>,
    pub warnings: Vec<String>,
}

impl TrainingLog {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Labeled training pairs over a catalog.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub catalog: &'a Catalog,
    pub positives: &'a [Pair],
    pub negatives: &'a [Pair],
}

/// Which prediction a stage loss reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Extrinsic,
    Intrinsic,
    Mixed,
}

/// Which parameters a stage updates.
struct Trainable {
    params: Vec<ParamId>,
    /// Parameters trained at `gate_lr` instead of the stage rate.
    gate: Vec<ParamId>,
    /// Entity rows of the embedding table to unfreeze.
    entity_rows: Option<Vec<bool>>,
}

fn entity_mask(model: &MoseModel, cat: &Catalog, pairs: &[Pair]) -> Vec<bool> {
    let mut mask = vec![false; model.entity_ids.len()];
    for p in pairs {
        if let Some(r) = cat.drug_rows[p.drug] {
            mask[r] = true;
        }
        if let Some(r) = cat.target_rows[p.target] {
            mask[r] = true;
        }
    }
    mask
}

/// Weighted BCE of one head, normalized by the total example weight.
pub fn stage_loss(model: &MoseModel, tape: &mut Tape, cat: &Catalog, head: Head, ex: &WeightedExamples) -> Result<Var> {
    let loss = match head {
        Head::Extrinsic => {
            let (d, t) = model.extrinsic_hidden(tape, cat, &ex.pairs)?;
            let logits = model.extrinsic_logits(tape, d, t)?;
            synergize_loss(tape, logits, ex)?
        }
        Head::Intrinsic => {
            let (d, t) = model.intrinsic_hidden(tape, cat, &ex.pairs)?;
            let logits = model.intrinsic_logits(tape, d, t)?;
            synergize_loss(tape, logits, ex)?
        }
        Head::Mixed => {
            if ex.positive_weight() <= 0.0 {
                return Err(Error::NoPositives);
            }
            let (p, ..) = model.mixed_on_tape(tape, cat, &ex.pairs)?;
            tape.bce_prob(p, &ex.targets, &ex.weights)?
        }
    };
    tape.scale(loss, 1.0 / ex.total_weight())
}

fn train_stage(
    model: &mut MoseModel,
    cat: &Catalog,
    stage: Stage,
    head: Head,
    ex: &WeightedExamples,
    trainable: Trainable,
    config: &SynergyConfig,
    log: &mut TrainingLog,
) -> Result<()> {
    let k = stage as usize;
    model.store.freeze_all();
    for &id in &trainable.params {
        model.store.set_trainable(id, true);
    }
    if let Some(mask) = trainable.entity_rows {
        model.store.set_trainable(model.entity_table, true);
        model.store.set_row_mask(model.entity_table, Some(mask))?;
    }
    let mut opt = Optimizer::new(OptimizerConfig {
        kind: config.optimizer,
        ..OptimizerConfig::adam(config.lr[k])
    });
    for &id in &trainable.gate {
        model.store.set_trainable(id, true);
        if config.lr[k] > 0.0 {
            opt.set_lr_scale(id, config.gate_lr / config.lr[k]);
        }
    }
    for epoch in 0..config.epochs[k] {
        let mut tape = Tape::new();
        let loss = stage_loss(model, &mut tape, cat, head, ex)?;
        let value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        model.store.accumulate(&grads)?;
        opt.step(&mut model.store)?;
        log.epochs.push(EpochLog { stage, epoch, loss: value });
    }
    model.store.freeze_all();
    Ok(())
}

fn score(model: &MoseModel, cat: &Catalog, expert: Expert, pairs: &[Pair]) -> Result<Vec<f64>> {
    match expert {
        Expert::Extrinsic => model.predict_extrinsic(cat, pairs),
        Expert::Intrinsic => model.predict_intrinsic(cat, pairs),
    }
}

/// Generates a pseudo-label batch with `generator` for the other expert.
fn exchange(
    model: &MoseModel,
    data: &TrainingData,
    generator: Expert,
    alpha: f64,
    beta: f64,
    gamma: u32,
    stage: Stage,
    config: &SynergyConfig,
    log: &mut TrainingLog,
) -> Result<PseudoLabelBatch> {
    let cat = data.catalog;
    let labeled: BTreeSet<Pair> = data.positives.iter().chain(data.negatives).copied().collect();
    let mut rng = rng::tagged(config.seed, &format!("synergy.{}.candidates", stage.name()));
    let cand = sample_candidates(
        cat.drugs.len(),
        cat.targets.len(),
        alpha,
        &labeled,
        |p| cat.has_extrinsic(p) && cat.has_intrinsic(p),
        &mut rng,
    )?;
    let scores = score(model, cat, generator, &cand)?;
    let k = libm::floor(beta * cand.len() as f64) as usize;
    let (m, clamped) = needed_negatives(gamma, data.positives.len(), k, data.negatives.len());
    if clamped {
        log.warn(format!(
            "{}: labeled negatives exceed weighted positives; no pseudo-negatives drawn",
            stage.name()
        ));
    }
    select_counts(generator, &cand, &scores, k, m)
}

/// Keeps pairs the expert can score, warning about the rest.
fn usable(pairs: &[Pair], ok: impl Fn(Pair) -> bool, what: &str, log: &mut TrainingLog) -> Vec<Pair> {
    let kept: Vec<Pair> = pairs.iter().copied().filter(|&p| ok(p)).collect();
    if kept.len() < pairs.len() {
        log.warn(format!("{} {what} pairs lack data for this expert", pairs.len() - kept.len()));
    }
    kept
}

fn record(log: &mut TrainingLog, stage: Stage, generator: Expert, cand: usize, pos: usize, neg: usize, ex: &WeightedExamples) {
    log.batches.push(BatchLog {
        stage,
        generator,
        candidates: cand,
        pseudo_positives: pos,
        pseudo_negatives: neg,
        positive_weight: ex.positive_weight(),
        negative_weight: ex.negative_weight(),
    });
}

/// Joint-stage pseudo-labels from both experts' candidate pools.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBatch {
    pub positives: Vec<Pair>,
    pub negatives: Vec<Pair>,
    pub per_expert_positives: usize,
    pub duplicates: usize,
    pub counts: JointNegatives,
}

/// Draws `floor(beta_g |Cand|)` pseudo-positives from each scored pool,
/// trims the longer list to the shorter, merges duplicates, then takes the
/// balancing number of lowest-ranked pseudo-negatives from each pool,
/// skipping pairs already chosen.
pub fn select_joint(
    pool_a: (&[Pair], &[f64]),
    pool_b: (&[Pair], &[f64]),
    beta_g: f64,
    gamma_g: u32,
    positives: usize,
    negatives: usize,
) -> JointBatch {
    let order_a = rank_order(pool_a.1);
    let order_b = rank_order(pool_b.1);
    let ka = libm::floor(beta_g * pool_a.0.len() as f64) as usize;
    let kb = libm::floor(beta_g * pool_b.0.len() as f64) as usize;
    let k = ka.min(kb);
    let mut chosen: BTreeSet<Pair> = BTreeSet::new();
    let mut pos = Vec::new();
    let mut duplicates = 0;
    // Interleave by rank so a duplicate keeps its better-ranked provenance.
    let mut picks: Vec<(f64, Pair)> = order_a[..k]
        .iter()
        .map(|&i| (pool_a.1[i], pool_a.0[i]))
        .chain(order_b[..k].iter().map(|&i| (pool_b.1[i], pool_b.0[i])))
        .collect();
    picks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, p) in picks {
        if chosen.insert(p) {
            pos.push(p);
        } else {
            duplicates += 1;
        }
    }
    let counts = joint_negatives(gamma_g, positives, pos.len(), 0, negatives);
    let mut neg = Vec::new();
    for (pool, order) in [(pool_a, &order_a), (pool_b, &order_b)] {
        let mut taken = 0;
        for &i in order.iter().rev() {
            if taken == counts.per_expert {
                break;
            }
            if chosen.insert(pool.0[i]) {
                neg.push(pool.0[i]);
                taken += 1;
            }
        }
    }
    JointBatch {
        positives: pos,
        negatives: neg,
        per_expert_positives: k,
        duplicates,
        counts,
    }
}

/// Callback invoked with the model after each stage.
pub type StageHook<'a> = &'a mut dyn FnMut(Stage, &MoseModel);

/// Runs S1–S4 on `model` in place.
pub fn run_training(
    model: &mut MoseModel,
    data: &TrainingData,
    config: &SynergyConfig,
    hook: StageHook,
) -> Result<TrainingLog> {
    config.validate()?;
    let cat = data.catalog;
    let mut log = TrainingLog::default();
    if data.positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let ex_pos = usable(data.positives, |p| cat.has_extrinsic(p), "positive", &mut log);
    let ex_neg = usable(data.negatives, |p| cat.has_extrinsic(p), "negative", &mut log);
    let in_pos = usable(data.positives, |p| cat.has_intrinsic(p), "positive", &mut log);
    let in_neg = usable(data.negatives, |p| cat.has_intrinsic(p), "negative", &mut log);
    let both = |p: Pair| cat.has_extrinsic(p) && cat.has_intrinsic(p);
    let mix_pos = usable(data.positives, both, "positive", &mut log);
    let mix_neg = usable(data.negatives, both, "negative", &mut log);
    let g = |gamma: u32| if config.pseudo_labels { gamma } else { 1 };

    // S1: extrinsic classifier on ground truth, embeddings frozen.
    let s1 = WeightedExamples::new(&ex_pos, &ex_neg, &[], &[], 1);
    train_stage(
        model,
        cat,
        Stage::S1,
        Head::Extrinsic,
        &s1,
        Trainable {
            params: model.extrinsic_params(),
            entity_rows: None,
            gate: Vec::new(),
        },
        config,
        &mut log,
    )?;
    hook(Stage::S1, model);

    // S2: extrinsic labels candidates for the intrinsic expert.
    let s2_data = TrainingData {
        catalog: cat,
        positives: &in_pos,
        negatives: &in_neg,
    };
    let (s2, pool_a) = if config.pseudo_labels {
        let batch = exchange(
            model,
            &s2_data,
            Expert::Extrinsic,
            config.alpha_a,
            config.beta_a,
            config.gamma_a,
            Stage::S2,
            config,
            &mut log,
        )?;
        let ex = WeightedExamples::new(&in_pos, &in_neg, &batch.positives, &batch.negatives, config.gamma_a);
        record(&mut log, Stage::S2, Expert::Extrinsic, batch.candidates.len(), batch.positives.len(), batch.negatives.len(), &ex);
        (ex, batch.candidates)
    } else {
        (WeightedExamples::new(&in_pos, &in_neg, &[], &[], g(config.gamma_a)), Vec::new())
    };
    train_stage(
        model,
        cat,
        Stage::S2,
        Head::Intrinsic,
        &s2,
        Trainable {
            params: model.intrinsic_params(),
            entity_rows: None,
            gate: Vec::new(),
        },
        config,
        &mut log,
    )?;
    hook(Stage::S2, model);

    // S3: roles swapped; embeddings of entities in the batch are tuned.
    let s3_data = TrainingData {
        catalog: cat,
        positives: &ex_pos,
        negatives: &ex_neg,
    };
    let (s3, pool_b) = if config.pseudo_labels {
        let batch = exchange(
            model,
            &s3_data,
            Expert::Intrinsic,
            config.alpha_b,
            config.beta_b,
            config.gamma_b,
            Stage::S3,
            config,
            &mut log,
        )?;
        let ex = WeightedExamples::new(&ex_pos, &ex_neg, &batch.positives, &batch.negatives, config.gamma_b);
        record(&mut log, Stage::S3, Expert::Intrinsic, batch.candidates.len(), batch.positives.len(), batch.negatives.len(), &ex);
        (ex, batch.candidates)
    } else {
        (WeightedExamples::new(&ex_pos, &ex_neg, &[], &[], g(config.gamma_b)), Vec::new())
    };
    let rows = entity_mask(model, cat, &s3.pairs);
    train_stage(
        model,
        cat,
        Stage::S3,
        Head::Extrinsic,
        &s3,
        Trainable {
            params: model.extrinsic_params(),
            entity_rows: Some(rows),
            gate: Vec::new(),
        },
        config,
        &mut log,
    )?;
    hook(Stage::S3, model);

    // S4: gate and both experts on the blended prediction.
    let s4 = if config.pseudo_labels {
        let scores_a = score(model, cat, Expert::Extrinsic, &pool_a)?;
        let scores_b = score(model, cat, Expert::Intrinsic, &pool_b)?;
        let joint = select_joint(
            (&pool_a, &scores_a),
            (&pool_b, &scores_b),
            config.beta_g,
            config.gamma_g,
            mix_pos.len(),
            mix_neg.len(),
        );
        if joint.counts.odd {
            log.warn("S4: odd balance numerator, negatives rounded down by one".into());
        }
        if joint.counts.clamped {
            log.warn("S4: labeled negatives exceed weighted positives; no pseudo-negatives drawn".into());
        }
        if joint.duplicates > 0 {
            log.warn(format!("S4: {} pseudo-positives proposed by both experts", joint.duplicates));
        }
        if joint.negatives.len() < 2 * joint.counts.per_expert {
            log.warn("S4: candidate pools too small for the balancing negatives".into());
        }
        let ex = WeightedExamples::new(&mix_pos, &mix_neg, &joint.positives, &joint.negatives, config.gamma_g);
        record(&mut log, Stage::S4, Expert::Extrinsic, pool_a.len() + pool_b.len(), joint.positives.len(), joint.negatives.len(), &ex);
        ex
    } else {
        WeightedExamples::new(&mix_pos, &mix_neg, &[], &[], g(config.gamma_g))
    };
    let mut params = model.extrinsic_params();
    params.extend(model.intrinsic_params());
    let rows = entity_mask(model, cat, &s4.pairs);
    train_stage(
        model,
        cat,
        Stage::S4,
        Head::Mixed,
        &s4,
        Trainable {
            params,
            entity_rows: Some(rows),
            gate: model.gate_params(),
        },
        config,
        &mut log,
    )?;
    hook(Stage::S4, model);
    Ok(log)
}
