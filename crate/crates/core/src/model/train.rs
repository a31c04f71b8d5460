//! Triplet loss, semi-hard mining, SGD training and gradient checking.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::CellTable;
use super::{Model, ModelConfig, ModelError, ModelKind};
use crate::features::WindowTensor;

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `max(|a-p|^2 - |a-n|^2 + m, 0)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], m: f64) -> Result<f64, ModelError> {
    if a.len() != p.len() {
        return Err(ModelError::DimMismatch(a.len(), p.len()));
    }
    if a.len() != n.len() {
        return Err(ModelError::DimMismatch(a.len(), n.len()));
    }
    Ok((sq_dist(a, p) - sq_dist(a, n) + m).max(0.0))
}

/// Loss gradients with respect to `(a, p, n)` on the active side of the hinge.
fn triplet_grads(a: &[f64], p: &[f64], n: &[f64]) -> [Vec<f64>; 3] {
    let da = n.iter().zip(p).map(|(nv, pv)| 2.0 * (nv - pv)).collect();
    let dp = a.iter().zip(p).map(|(av, pv)| -2.0 * (av - pv)).collect();
    let dn = a.iter().zip(n).map(|(av, nv)| 2.0 * (av - nv)).collect();
    [da, dp, dn]
}

/// Indices of triplets with `0 < loss < m`, in input order. When fewer than
/// `batch_size` qualify, the smallest-loss triplets with `loss >= m` fill
/// the gap. Zero-loss triplets are never chosen.
pub fn mine_semihard(losses: &[f64], m: f64, batch_size: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = (0..losses.len())
        .filter(|&i| losses[i] > 0.0 && losses[i] < m)
        .collect();
    if chosen.len() < batch_size {
        let mut hard: Vec<usize> = (0..losses.len()).filter(|&i| losses[i] >= m).collect();
        hard.sort_by(|&i, &j| losses[i].total_cmp(&losses[j]).then(i.cmp(&j)));
        chosen.extend(hard.into_iter().take(batch_size - chosen.len()));
    }
    chosen
}

/// Windows over one cell table and `(anchor, positive, negative)` triplets
/// indexing into them.
#[derive(Debug, Clone)]
pub struct TripletSet {
    pub table: CellTable,
    pub windows: Vec<Vec<u32>>,
    pub triplets: Vec<[u32; 3]>,
}

impl TripletSet {
    pub fn new(d_cell: usize) -> Self {
        TripletSet {
            table: CellTable::new(d_cell),
            windows: Vec::new(),
            triplets: Vec::new(),
        }
    }

    pub fn add_window(&mut self, t: &WindowTensor) -> u32 {
        let ids = self.table.intern_tensor(t);
        self.windows.push(ids);
        (self.windows.len() - 1) as u32
    }

    pub fn window(&self, i: u32) -> &[u32] {
        &self.windows[i as usize]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchStep {
    /// Mean loss over the scored candidates.
    pub mean_loss: f64,
    pub semihard: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub coarse: BranchStep,
    pub fine: BranchStep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

/// Scores a random candidate batch, selects triplets and takes one SGD step
/// on their mean loss.
fn sgd_episode(model: &mut Model, set: &TripletSet, cfg: &ModelConfig, rng: &mut impl Rng) -> BranchStep {
    let cand: Vec<[u32; 3]> = (0..cfg.candidates.max(1))
        .map(|_| set.triplets[rng.random_range(0..set.triplets.len())])
        .collect();
    let mut slot: HashMap<u32, usize> = HashMap::new();
    let mut wins: Vec<&[u32]> = Vec::new();
    let slots: Vec<[usize; 3]> = cand
        .iter()
        .map(|t| {
            t.map(|w| {
                *slot.entry(w).or_insert_with(|| {
                    wins.push(set.window(w));
                    wins.len() - 1
                })
            })
        })
        .collect();
    let (emb, cache) = model.forward(&set.table, &wins);
    let m = cfg.margin;
    let losses: Vec<f64> = slots
        .iter()
        .map(|[a, p, n]| (sq_dist(&emb[*a], &emb[*p]) - sq_dist(&emb[*a], &emb[*n]) + m).max(0.0))
        .collect();
    let selected = mine_semihard(&losses, m, cfg.batch_size);
    let step = BranchStep {
        mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        semihard: losses.iter().filter(|&&l| l > 0.0 && l < m).count(),
        selected: selected.len(),
    };
    if selected.is_empty() {
        return step;
    }
    let scale = 1.0 / selected.len() as f64;
    let mut d_out = vec![vec![0.0; model.dim()]; wins.len()];
    for &i in &selected {
        let [a, p, n] = slots[i];
        let g = triplet_grads(&emb[a], &emb[p], &emb[n]);
        for (s, gv) in [a, p, n].into_iter().zip(g) {
            d_out[s].iter_mut().zip(gv).for_each(|(d, v)| *d += scale * v);
        }
    }
    let mut grad = vec![0.0; model.n_params()];
    model.backward(&cache, &d_out, &mut grad);
    let lr = cfg.learning_rate;
    model.params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * g);
    step
}

/// Trains both branches for `cfg.episodes` episodes from a seeded
/// initialization; each episode takes one step on each model.
pub fn train_models(
    coarse_set: &TripletSet,
    fine_set: &TripletSet,
    cfg: &ModelConfig,
) -> Result<(Model, Model, TrainingLog), ModelError> {
    cfg.validate()?;
    if coarse_set.triplets.is_empty() {
        return Err(ModelError::NoTriplets("coarse"));
    }
    if fine_set.triplets.is_empty() {
        return Err(ModelError::NoTriplets("fine"));
    }
    let mut coarse = Model::init(ModelKind::Coarse, cfg, cfg.seed)?;
    let mut fine = Model::init(ModelKind::Fine, cfg, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    for episode in 0..cfg.episodes {
        let c = sgd_episode(&mut coarse, coarse_set, cfg, &mut rng);
        let f = sgd_episode(&mut fine, fine_set, cfg, &mut rng);
        tracing::debug!(episode, coarse_loss = c.mean_loss, fine_loss = f.mean_loss, "episode");
        log.episodes.push(EpisodeLog {
            episode,
            coarse: c,
            fine: f,
        });
    }
    Ok((coarse, fine, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a perturbation crossed a kink.
    pub skipped: usize,
}

fn loss_and_pattern(model: &Model, table: &CellTable, wins: &[&[u32]; 3], m: f64) -> (f64, Vec<u32>) {
    let (e, cache) = model.forward(table, wins);
    let l = (sq_dist(&e[0], &e[1]) - sq_dist(&e[0], &e[2]) + m).max(0.0);
    (l, cache.pattern())
}

/// Compares analytic triplet-loss gradients with central differences
/// (step `h`) on up to `per_tensor` sampled entries of every tensor.
/// Entries whose perturbation changes a ReLU mask, a pooling choice or the
/// hinge side are skipped.
pub fn gradient_check(
    model: &Model,
    table: &CellTable,
    triplet: [&[u32]; 3],
    m: f64,
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    let (e, cache) = model.forward(table, &triplet);
    let loss = (sq_dist(&e[0], &e[1]) - sq_dist(&e[0], &e[2]) + m).max(0.0);
    let mut grad = vec![0.0; model.n_params()];
    if loss > 0.0 {
        let d_out: Vec<Vec<f64>> = triplet_grads(&e[0], &e[1], &e[2]).into();
        model.backward(&cache, &d_out, &mut grad);
    }
    let base_pattern = cache.pattern();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        loss,
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for spec in model.specs() {
        let n = spec.len();
        for k in sample(&mut rng, n, per_tensor.min(n)) {
            let i = spec.offset + k;
            let orig = model.params[i];
            probe.params[i] = orig + h;
            let (lp, pp) = loss_and_pattern(&probe, table, &triplet, m);
            probe.params[i] = orig - h;
            let (lm, pm) = loss_and_pattern(&probe, table, &triplet, m);
            probe.params[i] = orig;
            let smooth = pp == base_pattern && pm == base_pattern;
            let same_side = (loss > 0.0) == (lp > 0.0) && (loss > 0.0) == (lm > 0.0);
            if !smooth || !same_side {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grad[i];
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-9 {
                (analytic - numeric).abs()
            } else {
                (analytic - numeric).abs() / scale
            };
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }
    report
}
