//! Seeded sampling and splitting of manifests.
//!
//! Outputs keep the input manifest order, so repeated runs with the same
//! seed serialize byte-identically.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{DatasetError, Manifest};
use crate::rng;
use crate::token::Voicing;

fn pick<'a>(m: &'a Manifest, chosen: &HashSet<usize>, what: String) -> Manifest {
    Manifest {
        records: m.records.iter().enumerate().filter(|(i, _)| chosen.contains(i)).map(|(_, r)| r.clone()).collect(),
        provenance: format!("{what} <- {}", m.provenance),
        schema_version: m.schema_version,
    }
}

fn by_voicing(m: &Manifest, eligible: impl Fn(usize) -> bool) -> BTreeMap<Voicing, Vec<usize>> {
    let mut out: BTreeMap<Voicing, Vec<usize>> = Voicing::ALL.iter().map(|&v| (v, Vec::new())).collect();
    for (i, r) in m.records.iter().enumerate() {
        if eligible(i) {
            out.entry(r.voicing).or_default().push(i);
        }
    }
    out
}

/// Exactly `n_per_voicing` labeled tokens of each voicing class, drawn
/// uniformly without replacement.
pub fn sample_balanced(m: &Manifest, n_per_voicing: usize, seed: u64) -> Result<Manifest, DatasetError> {
    let classes = by_voicing(m, |i| {
        let r = &m.records[i];
        r.burst.as_binary().is_some() && !r.excluded
    });
    let available: Vec<(Voicing, usize)> = classes.iter().map(|(v, ix)| (*v, ix.len())).collect();
    if available.iter().any(|&(_, n)| n < n_per_voicing) {
        return Err(DatasetError::InsufficientClass { requested: n_per_voicing, available });
    }
    let mut chosen = HashSet::with_capacity(2 * n_per_voicing);
    for (k, (_, idx)) in classes.iter().enumerate() {
        let mut r = rng::substream(seed, "sample_balanced", k as u64);
        for j in index::sample(&mut r, idx.len(), n_per_voicing) {
            chosen.insert(idx[j]);
        }
    }
    Ok(pick(m, &chosen, format!("sample_balanced(n_per_voicing={n_per_voicing}, seed={seed})")))
}

/// Largest-remainder apportionment of `total` slots by `weights`,
/// with ties broken by position.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let ideal: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut alloc: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}

/// Voicing-stratified train/test split. The train side has
/// `round(train_frac · n)` tokens; each class is split at `train_frac`
/// within one token.
pub fn split_train_test(m: &Manifest, train_frac: f64, seed: u64) -> Result<(Manifest, Manifest), DatasetError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DatasetError::InvalidParameter(format!("train_frac {train_frac} must lie in (0, 1)")));
    }
    let classes = by_voicing(m, |_| true);
    let n_train = (train_frac * m.len() as f64).round() as usize;
    let weights: Vec<f64> = classes.values().map(|ix| ix.len() as f64).collect();
    let quotas = largest_remainder(n_train, &weights);
    let mut train = HashSet::with_capacity(n_train);
    for (k, ((_, idx), &q)) in classes.iter().zip(&quotas).enumerate() {
        let mut r = rng::substream(seed, "split_train_test", k as u64);
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut r);
        train.extend(shuffled.into_iter().take(q));
    }
    let test: HashSet<usize> = (0..m.len()).filter(|i| !train.contains(i)).collect();
    let what = format!("split_train_test(train_frac={train_frac}, seed={seed})");
    Ok((pick(m, &train, format!("{what}[train]")), pick(m, &test, format!("{what}[test]"))))
}

/// Per-stratum quota for annotation sampling: `min(ceil(frac · n), cap)`.
pub fn annotation_quota(stratum_size: usize, frac: f64, cap: usize) -> usize {
    // guard against 0.05 * 100 = 5.000000000000001 style rounding
    let want = (frac * stratum_size as f64 - 1e-9).ceil().max(0.0) as usize;
    want.min(cap).min(stratum_size)
}

/// Draws `min(ceil(frac · n), cap)` tokens from every (corpus, voicing)
/// stratum of size `n`.
pub fn annotation_sample(m: &Manifest, frac: f64, cap: usize, seed: u64) -> Result<Manifest, DatasetError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(DatasetError::InvalidParameter(format!("frac {frac} must lie in (0, 1]")));
    }
    let mut strata: BTreeMap<(&str, Voicing), Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        if !r.excluded {
            strata.entry((r.corpus.as_str(), r.voicing)).or_default().push(i);
        }
    }
    let mut chosen = HashSet::new();
    for ((corpus, voicing), idx) in &strata {
        let k = annotation_quota(idx.len(), frac, cap);
        let key = format!("annotation_sample/{corpus}/{voicing}");
        let mut r = rng::stream(seed, &key);
        for j in index::sample(&mut r, idx.len(), k) {
            chosen.insert(idx[j]);
        }
    }
    Ok(pick(m, &chosen, format!("annotation_sample(frac={frac}, cap={cap}, seed={seed})")))
}

/// Per-corpus allocation for [`stratified_validation`].
pub fn validation_allocation(
    sizes: &BTreeMap<String, usize>,
    n_total: usize,
    min_per_corpus: usize,
) -> Result<BTreeMap<String, usize>, DatasetError> {
    let available: usize = sizes.values().sum();
    if n_total > available || min_per_corpus * sizes.len() > n_total {
        return Err(DatasetError::InfeasibleValidation {
            n_total,
            min_per_corpus,
            corpus_sizes: sizes.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        });
    }
    let names: Vec<&String> = sizes.keys().collect();
    let cap: Vec<usize> = names.iter().map(|n| sizes[*n]).collect();
    let mut alloc: Vec<usize> = cap.iter().map(|&c| c.min(min_per_corpus)).collect();
    let mut remaining = n_total - alloc.iter().sum::<usize>();
    while remaining > 0 {
        let weights: Vec<f64> =
            cap.iter().zip(&alloc).map(|(&c, &a)| if a < c { c as f64 } else { 0.0 }).collect();
        let share = largest_remainder(remaining, &weights);
        let mut given = 0;
        for i in 0..alloc.len() {
            let g = share[i].min(cap[i] - alloc[i]);
            alloc[i] += g;
            given += g;
        }
        remaining -= given;
        if given == 0 {
            break;
        }
    }
    Ok(names.into_iter().cloned().zip(alloc).collect())
}

/// Selects `n_total` validation tokens with every corpus represented by at
/// least `min(min_per_corpus, corpus size)` tokens; remaining slots follow
/// corpus size (largest remainder). Returns `(validation, remainder)`.
pub fn stratified_validation(
    m: &Manifest,
    n_total: usize,
    min_per_corpus: usize,
    seed: u64,
) -> Result<(Manifest, Manifest), DatasetError> {
    let mut by_corpus: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        by_corpus.entry(r.corpus.clone()).or_default().push(i);
    }
    let sizes: BTreeMap<String, usize> = by_corpus.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let alloc = validation_allocation(&sizes, n_total, min_per_corpus)?;
    let mut chosen = HashSet::with_capacity(n_total);
    for (corpus, idx) in &by_corpus {
        let mut r = rng::stream(seed, &format!("stratified_validation/{corpus}"));
        for j in index::sample(&mut r, idx.len(), alloc[corpus]) {
            chosen.insert(idx[j]);
        }
    }
    let rest: HashSet<usize> = (0..m.len()).filter(|i| !chosen.contains(i)).collect();
    let what = format!("stratified_validation(n_total={n_total}, min_per_corpus={min_per_corpus}, seed={seed})");
    Ok((pick(m, &chosen, format!("{what}[validation]")), pick(m, &rest, format!("{what}[remainder]"))))
}

/// Nested training subsets of increasing size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetLadder {
    pub sizes: Vec<usize>,
    pub subsets: BTreeMap<usize, Vec<String>>,
}

pub const DEFAULT_LADDER: [usize; 6] = [500, 1000, 2000, 10_000, 20_000, 40_000];

/// Shuffles each voicing class once and interleaves them so every prefix
/// keeps the manifest's voicing proportions (to within one token); the
/// subsets are prefixes of that order, hence nested.
pub fn build_ladder(m: &Manifest, sizes: &[usize], seed: u64) -> Result<SubsetLadder, DatasetError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DatasetError::InvalidParameter("ladder sizes must be non-empty and strictly increasing".into()));
    }
    let largest = *sizes.last().expect("non-empty");
    if largest > m.len() {
        return Err(DatasetError::LadderTooLarge { largest, available: m.len() });
    }
    let mut classes: Vec<Vec<usize>> = by_voicing(m, |_| true).into_values().collect();
    for (k, c) in classes.iter_mut().enumerate() {
        c.shuffle(&mut rng::substream(seed, "build_ladder", k as u64));
    }
    let total = m.len() as f64;
    let targets: Vec<f64> = classes.iter().map(|c| c.len() as f64 / total).collect();
    let mut taken = vec![0usize; classes.len()];
    let mut order = Vec::with_capacity(largest);
    for pos in 1..=largest {
        // class furthest behind its share of the first `pos` slots
        let k = (0..classes.len())
            .filter(|&k| taken[k] < classes[k].len())
            .max_by(|&a, &b| {
                let da = targets[a] * pos as f64 - taken[a] as f64;
                let db = targets[b] * pos as f64 - taken[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("largest <= manifest size");
        order.push(classes[k][taken[k]]);
        taken[k] += 1;
    }
    let subsets = sizes
        .iter()
        .map(|&s| (s, order[..s].iter().map(|&i| m.records[i].token_id.clone()).collect()))
        .collect();
    Ok(SubsetLadder { sizes: sizes.to_vec(), subsets })
}
