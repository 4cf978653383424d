//! Gradient-boosted decision trees for binary classification.
//!
//! Logistic loss, second-order leaf values `-G/(H+λ)`. Features are quantized
//! once into at most 256 bins (one per distinct value when there are few
//! enough), and trees grow level by level from per-node gradient histograms.
//! Thresholds lie between adjacent bins; samples with `x < threshold` go left.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const GBDT_MAGIC: &[u8; 8] = b"RHGBDT\0\0";
const GBDT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_trees: 300,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            subsample: 0.8,
            l2_leaf_reg: 1.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return bad("max_depth and min_samples_leaf must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0, 1], got {}", self.subsample));
        }
        if !(self.l2_leaf_reg > 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad(format!("l2_leaf_reg must be positive, got {}", self.l2_leaf_reg));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a node array rooted at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value<T: Scalar>(&self, x: &[T]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature].as_f64() < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbdtModel {
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Most bins a feature is quantized into.
pub const MAX_BINS: usize = 256;

/// Features quantized to bin indices, column-major.
///
/// A feature with at most [`MAX_BINS`] distinct training values gets one bin
/// per value; otherwise bin edges sit at equal-count quantiles. Cut `k`
/// separates bins `k` and `k + 1` and lies strictly between the largest value
/// of the former and the smallest of the latter, so `x < cuts[k]` exactly when
/// `x` falls in bin `k` or lower.
struct Binned {
    n: usize,
    /// `bins[f*n + i]` is the bin of sample `i` along feature `f`.
    bins: Vec<u8>,
    cuts: Vec<Vec<f64>>,
}

fn between(lo: f64, hi: f64) -> f64 {
    let t = lo + 0.5 * (hi - lo);
    if t > lo { t } else { hi }
}

impl Binned {
    fn build<T: Scalar, R: AsRef<[T]> + Sync>(rows: &[R], d: usize) -> Self {
        let n = rows.len();
        let per_feature: Vec<(Vec<u8>, Vec<f64>)> = (0..d)
            .into_par_iter()
            .map(|f| {
                let column: Vec<f64> = rows.iter().map(|r| r.as_ref()[f].as_f64()).collect();
                let mut sorted = column.clone();
                sorted.sort_by(f64::total_cmp);
                let mut distinct = sorted.clone();
                distinct.dedup();
                let cuts: Vec<f64> = if distinct.len() <= MAX_BINS {
                    distinct.windows(2).map(|w| between(w[0], w[1])).collect()
                } else {
                    let mut cuts: Vec<f64> = (1..MAX_BINS)
                        .map(|q| q * n / MAX_BINS)
                        .filter(|&p| p > 0 && sorted[p - 1] < sorted[p])
                        .map(|p| between(sorted[p - 1], sorted[p]))
                        .collect();
                    cuts.dedup();
                    cuts
                };
                let bins = column
                    .iter()
                    .map(|&v| cuts.partition_point(|&c| c <= v) as u8)
                    .collect();
                (bins, cuts)
            })
            .collect();
        let mut bins = Vec::with_capacity(n * d);
        let mut cuts = Vec::with_capacity(d);
        for (b, c) in per_feature {
            bins.extend(b);
            cuts.push(c);
        }
        Binned { n, bins, cuts }
    }

    fn column(&self, f: usize) -> &[u8] {
        &self.bins[f * self.n..(f + 1) * self.n]
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    /// Last bin sent left.
    bin: usize,
}

/// A node still being grown and its range in the sample list.
#[derive(Clone, Copy, Debug)]
struct Segment {
    node: usize,
    start: usize,
    end: usize,
    g: f64,
    h: f64,
}

struct TreeBuilder<'a> {
    params: &'a GbdtParams,
    data: &'a Binned,
    /// Gradient and hessian per sample.
    gh: &'a [(f64, f64)],
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.l2_leaf_reg)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.l2_leaf_reg)
    }

    /// Best split of one segment along one feature.
    fn scan(&self, f: usize, samples: &[u32], seg: &Segment) -> Option<Candidate> {
        let lambda = self.params.l2_leaf_reg;
        let msl = self.params.min_samples_leaf;
        let count = seg.end - seg.start;
        if count < 2 * msl {
            return None;
        }
        let nb = self.data.cuts[f].len() + 1;
        if nb < 2 {
            return None;
        }
        let column = self.data.column(f);
        let mut hist = [(0.0f64, 0.0f64, 0usize); MAX_BINS];
        for &i in &samples[seg.start..seg.end] {
            let (g, h) = self.gh[i as usize];
            let e = &mut hist[column[i as usize] as usize];
            e.0 += g;
            e.1 += h;
            e.2 += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0);
        let mut best = f64::NEG_INFINITY;
        let mut bin = 0;
        for (k, &(g, h, c)) in hist[..nb - 1].iter().enumerate() {
            gl += g;
            hl += h;
            cl += c;
            if c == 0 || cl < msl || count - cl < msl {
                continue;
            }
            let gr = seg.g - gl;
            let hr = seg.h - hl;
            // Split score without the constant parent term.
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda);
            if gain > best {
                best = gain;
                bin = k;
            }
        }
        (best > f64::NEG_INFINITY).then(|| Candidate {
            gain: 0.5 * (best - self.score(seg.g, seg.h)),
            feature: f,
            bin,
        })
    }

    /// Grows one tree over the in-bag `samples`, listed in increasing order.
    fn grow(&self, samples: &mut [u32]) -> Tree {
        let (g, h) = samples
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.gh[i as usize].0, h + self.gh[i as usize].1));
        let d = self.data.cuts.len();
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut open = vec![Segment {
            node: 0,
            start: 0,
            end: samples.len(),
            g,
            h,
        }];
        let mut right_buf = Vec::with_capacity(samples.len());
        for _ in 0..self.params.max_depth {
            if open.is_empty() {
                break;
            }
            let list: &[u32] = samples;
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..d)
                .into_par_iter()
                .map(|f| open.iter().map(|seg| self.scan(f, list, seg)).collect())
                .collect();
            let mut chosen: Vec<Option<Candidate>> = vec![None; open.len()];
            for feature_best in &per_feature {
                for (c, b) in chosen.iter_mut().zip(feature_best) {
                    if let Some(b) = b {
                        if b.gain > 0.0 && c.is_none_or(|c| b.gain > c.gain) {
                            *c = Some(*b);
                        }
                    }
                }
            }

            let mut next_open = Vec::new();
            for (seg, c) in open.iter().zip(&chosen) {
                let Some(c) = c else {
                    nodes[seg.node] = Node::Leaf {
                        value: self.leaf_value(seg.g, seg.h),
                    };
                    continue;
                };
                let (left, right) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[seg.node] = Node::Split {
                    feature: c.feature,
                    threshold: self.data.cuts[c.feature][c.bin],
                    left,
                    right,
                };
                // Stable partition of the segment: left samples first.
                let column = self.data.column(c.feature);
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut mid = seg.start;
                right_buf.clear();
                for k in seg.start..seg.end {
                    let i = samples[k];
                    if column[i as usize] as usize <= c.bin {
                        gl += self.gh[i as usize].0;
                        hl += self.gh[i as usize].1;
                        samples[mid] = i;
                        mid += 1;
                    } else {
                        right_buf.push(i);
                    }
                }
                samples[mid..seg.end].copy_from_slice(&right_buf);
                next_open.push(Segment {
                    node: left,
                    start: seg.start,
                    end: mid,
                    g: gl,
                    h: hl,
                });
                next_open.push(Segment {
                    node: right,
                    start: mid,
                    end: seg.end,
                    g: seg.g - gl,
                    h: seg.h - hl,
                });
            }
            open = next_open;
        }
        for seg in &open {
            nodes[seg.node] = Node::Leaf {
                value: self.leaf_value(seg.g, seg.h),
            };
        }
        Tree { nodes }
    }
}

fn check_binary(labels: &[bool]) -> Result<usize> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "classifier needs both classes, got {pos} positives of {}",
            labels.len()
        )));
    }
    Ok(pos)
}

impl GbdtModel {
    /// Trains on row-major samples `rows` with binary `labels`.
    pub fn train<T: Scalar, R: AsRef<[T]> + Sync>(
        rows: &[R],
        labels: &[bool],
        params: &GbdtParams,
    ) -> Result<Self> {
        Self::train_with_callback(rows, labels, params, |_, _| {})
    }

    /// As [`train`](Self::train), calling `on_round(round, raw_scores)` after
    /// every tree.
    pub fn train_with_callback<T: Scalar, R: AsRef<[T]> + Sync>(
        rows: &[R],
        labels: &[bool],
        params: &GbdtParams,
        mut on_round: impl FnMut(usize, &[f64]),
    ) -> Result<Self> {
        params.validate()?;
        if rows.len() != labels.len() {
            return Err(Error::shape(labels.len(), rows.len()));
        }
        let pos = check_binary(labels)?;
        let n = rows.len();
        if n < 2 * params.min_samples_leaf {
            return Err(Error::InsufficientData {
                needed: 2 * params.min_samples_leaf,
                got: n,
            });
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(Error::Config("classifier needs at least one feature".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.as_ref().len() != d) {
            return Err(Error::shape(d, r.as_ref().len()));
        }
        if u32::try_from(n).is_err() {
            return Err(Error::Config(format!("too many samples: {n}")));
        }
        let data = Binned::build(rows, d);

        let rate = pos as f64 / n as f64;
        let base_score = (rate / (1.0 - rate)).ln();
        let mut raw = vec![base_score; n];
        let mut gh = vec![(0.0, 0.0); n];
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let bag_size = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut samples: Vec<u32> = Vec::with_capacity(n);
        let mut trees = Vec::with_capacity(params.n_trees);
        for round in 0..params.n_trees {
            for i in 0..n {
                let p = sigmoid(raw[i]);
                gh[i] = (p - labels[i] as u8 as f64, (p * (1.0 - p)).max(1e-16));
            }
            samples.clear();
            if bag_size < n {
                order.shuffle(&mut rng);
                samples.extend(order[..bag_size].iter().map(|&i| i as u32));
                samples.sort_unstable();
            } else {
                samples.extend(0..n as u32);
            }
            let builder = TreeBuilder {
                params,
                data: &data,
                gh: &gh,
            };
            let tree = builder.grow(&mut samples);
            for (r, row) in raw.iter_mut().zip(rows) {
                *r += params.learning_rate * tree.leaf_value(row.as_ref());
            }
            trees.push(tree);
            on_round(round, &raw);
        }
        Ok(GbdtModel {
            n_features: d,
            base_score,
            learning_rate: params.learning_rate,
            trees,
        })
    }

    /// Raw log-odds `base + lr · Σ leaf`.
    pub fn predict_raw<T: Scalar>(&self, x: &[T]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::shape(self.n_features, x.len()));
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    pub fn predict_proba<T: Scalar>(&self, x: &[T]) -> Result<f64> {
        Ok(sigmoid(self.predict_raw(x)?))
    }

    pub fn predict_batch<T: Scalar, R: AsRef<[T]> + Sync>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.predict_proba(r.as_ref())).collect()
    }

    /// Stored reals: two per split (feature, threshold), one per leaf, plus
    /// the base score.
    pub fn parameter_count(&self) -> usize {
        1 + self
            .trees
            .iter()
            .flat_map(|t| &t.nodes)
            .map(|n| match n {
                Node::Split { .. } => 2,
                Node::Leaf { .. } => 1,
            })
            .sum::<usize>()
    }

    /// Comparisons and additions for one prediction, plus the sigmoid.
    pub fn flops_per_prediction(&self) -> u64 {
        let path: usize = self.trees.iter().map(|t| t.depth() + 1).sum();
        (path + 4) as u64
    }

    pub fn encode(&self, w: &mut Writer) {
        w.usize(self.n_features);
        w.f64(self.base_score);
        w.f64(self.learning_rate);
        w.usize(self.trees.len());
        for t in &self.trees {
            w.usize(t.nodes.len());
            for n in &t.nodes {
                match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.u8(0);
                        w.usize(feature);
                        w.f64(threshold);
                        w.usize(left);
                        w.usize(right);
                    }
                    Node::Leaf { value } => {
                        w.u8(1);
                        w.f64(value);
                    }
                }
            }
        }
    }

    pub fn decode(r: &mut Reader) -> Result<Self> {
        let n_features = r.usize()?;
        let base_score = r.f64()?;
        let learning_rate = r.f64()?;
        let n_trees = r.len(1)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.len(9)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => Node::Split {
                        feature: r.usize()?,
                        threshold: r.f64()?,
                        left: r.usize()?,
                        right: r.usize()?,
                    },
                    1 => Node::Leaf { value: r.f64()? },
                    t => return Err(Error::Format(format!("unknown tree node tag {t}"))),
                });
            }
            validate_tree(&nodes, n_features)?;
            trees.push(Tree { nodes });
        }
        Ok(GbdtModel {
            n_features,
            base_score,
            learning_rate,
            trees,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(GBDT_MAGIC);
        w.u32(GBDT_VERSION);
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(GBDT_MAGIC.len())? != GBDT_MAGIC {
            return Err(Error::Format("not a GBDT file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != GBDT_VERSION {
            return Err(Error::Format(format!(
                "unsupported GBDT version {version}, expected {GBDT_VERSION}"
            )));
        }
        let model = Self::decode(&mut r)?;
        if !r.is_at_end() {
            return Err(Error::Format("trailing bytes after GBDT model".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Children must point forward inside the array so traversal terminates.
fn validate_tree(nodes: &[Node], n_features: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    for (i, n) in nodes.iter().enumerate() {
        if let Node::Split {
            feature,
            left,
            right,
            ..
        } = *n
        {
            if feature >= n_features || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                return Err(Error::Format(format!("invalid split node {i}")));
            }
        }
    }
    Ok(())
}

/// Out-of-fold probabilities from stratified `folds`-fold cross-validation.
///
/// Positives and negatives are shuffled separately and dealt round-robin into
/// folds; fold `k` is predicted by a model trained with seed `seed + k` on the
/// other folds.
pub fn cross_predict<T: Scalar, R: AsRef<[T]> + Sync>(
    rows: &[R],
    labels: &[bool],
    params: &GbdtParams,
    folds: usize,
) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::Config(format!("cross prediction needs at least 2 folds, got {folds}")));
    }
    if rows.len() != labels.len() {
        return Err(Error::shape(labels.len(), rows.len()));
    }
    check_binary(labels)?;
    let fold_of = stratified_folds(labels, folds, params.seed);
    let mut out = vec![0.0; rows.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != k).collect();
        let test: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == k).collect();
        if test.is_empty() {
            continue;
        }
        let train_rows: Vec<&[T]> = train.iter().map(|&i| rows[i].as_ref()).collect();
        let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        check_binary(&train_labels).map_err(|_| {
            Error::DegenerateLabels(format!("training fold {k} is missing a class"))
        })?;
        let model = GbdtModel::train(
            &train_rows,
            &train_labels,
            &GbdtParams {
                seed: params.seed.wrapping_add(k as u64),
                ..params.clone()
            },
        )?;
        for &i in &test {
            out[i] = model.predict_proba(rows[i].as_ref())?;
        }
    }
    Ok(out)
}

/// Fold index of every sample, stratified by label.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            fold_of[i] = (offset + k) % folds;
        }
        offset += idx.len();
    }
    fold_of
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_trees: usize) -> GbdtParams {
        GbdtParams {
            n_trees,
            min_samples_leaf: 2,
            subsample: 1.0,
            ..GbdtParams::default()
        }
    }

    #[test]
    fn zero_trees_predict_positive_rate() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let m = GbdtModel::train(&rows, &labels, &params(0)).unwrap();
        assert!((m.predict_proba(&[5.0]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn separable_one_feature() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 - 99.5]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let m = GbdtModel::train(&rows, &labels, &params(50)).unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| (m.predict_proba(r).unwrap() > 0.5) == l)
            .count();
        assert!(correct as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn single_class_rejected() {
        let rows = vec![vec![1.0f64]; 10];
        assert!(matches!(
            GbdtModel::train(&rows, &[true; 10], &params(1)),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn bytes_round_trip() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, i as f64]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let m = GbdtModel::train(&rows, &labels, &params(5)).unwrap();
        let back = GbdtModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.to_bytes();
        bad[0] = b'X';
        assert!(matches!(GbdtModel::from_bytes(&bad), Err(Error::Format(_))));
    }
}
