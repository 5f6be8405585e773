//! The learned state mask.
//!
//! A mask is a static n×n matrix `M`, every row of which lies on the
//! probability simplex. The state representation is `z = M s`. `M` is a pure
//! function of its parameters θ, so the same matrix is applied to every state.
//! Column j of `M` measures how much of state element j survives into `z`;
//! [`column_relevance`] turns that into a per-element score in `[0, 1]`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::math::{Graph, NodeId, Tensor};

/// Row normalizer applied to the raw pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Softmax,
    Sparsemax,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Softmax => "softmax",
            Normalization::Sparsemax => "sparsemax",
        }
    }

    pub fn apply(self, row: &[f64]) -> Vec<f64> {
        match self {
            Normalization::Softmax => crate::math::softmax_row(row),
            Normalization::Sparsemax => crate::math::sparsemax_row(row),
        }
    }
}

/// How the raw n×n pre-activation is produced from θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVariant {
    /// θ is the n×n pre-activation itself.
    DirectMatrix,
    /// θ are the weights of a one-hidden-layer tanh network fed a constant
    /// all-ones k-vector; its n² outputs are reshaped to n×n.
    OnesEncoder,
}

pub const DEFAULT_ENCODER_INPUT: usize = 8;
pub const DEFAULT_ENCODER_HIDDEN: usize = 64;
const DIRECT_INIT_STD: f64 = 0.5;
/// The encoder's output layer starts small so every row begins close to
/// uniform with full support, under either normalizer.
const ENCODER_OUTPUT_GAIN: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub variant: MaskVariant,
    pub norm: Normalization,
    pub n: usize,
    /// Encoder input size; unused by `DirectMatrix`.
    pub k: usize,
    /// Encoder hidden width; unused by `DirectMatrix`.
    pub hidden: usize,
    /// `DirectMatrix`: `[θ (n×n)]`.
    /// `OnesEncoder`: `[W1 (hidden×k), b1 (hidden), W2 (n²×hidden), b2 (n²)]`.
    pub tensors: Vec<Tensor>,
}

impl MaskParams {
    /// θ ~ Normal(0, 0.5) i.i.d.; rows start close to uniform after softmax.
    pub fn direct<R: Rng + ?Sized>(n: usize, norm: Normalization, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("mask dimension must be at least 1".into()));
        }
        let theta = normal_tensor(vec![n, n], DIRECT_INIT_STD, rng);
        Self::from_parts(MaskVariant::DirectMatrix, norm, n, 0, 0, vec![theta])
    }

    pub fn ones_encoder<R: Rng + ?Sized>(
        n: usize,
        k: usize,
        hidden: usize,
        norm: Normalization,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || k == 0 || hidden == 0 {
            return Err(Error::InvalidParams("mask dimension, encoder input and hidden width must be at least 1".into()));
        }
        let w1 = normal_tensor(vec![hidden, k], 1.0 / (k as f64).sqrt(), rng);
        let b1 = Tensor::zeros(vec![hidden]);
        let w2 = normal_tensor(vec![n * n, hidden], ENCODER_OUTPUT_GAIN / (hidden as f64).sqrt(), rng);
        let b2 = Tensor::zeros(vec![n * n]);
        Self::from_parts(MaskVariant::OnesEncoder, norm, n, k, hidden, vec![w1, b1, w2, b2])
    }

    pub fn from_parts(
        variant: MaskVariant,
        norm: Normalization,
        n: usize,
        k: usize,
        hidden: usize,
        tensors: Vec<Tensor>,
    ) -> Result<Self> {
        let params = Self { variant, norm, n, k, hidden, tensors };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("mask dimension must be at least 1".into()));
        }
        let expected: Vec<Vec<usize>> = match self.variant {
            MaskVariant::DirectMatrix => vec![vec![self.n, self.n]],
            MaskVariant::OnesEncoder => {
                if self.k == 0 || self.hidden == 0 {
                    return Err(Error::InvalidParams("encoder input size and hidden width must be at least 1".into()));
                }
                let nn = self.n * self.n;
                vec![vec![self.hidden, self.k], vec![self.hidden], vec![nn, self.hidden], vec![nn]]
            }
        };
        let got: Vec<Vec<usize>> = self.tensors.iter().map(|t| t.shape().to_vec()).collect();
        if got != expected {
            return Err(Error::InvalidParams(format!(
                "{:?} mask expects tensor shapes {expected:?}, got {got:?}",
                self.variant
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Adds θ to `graph` as trainable leaves.
    pub fn register(&self, graph: &mut Graph) -> Vec<NodeId> {
        self.tensors.iter().map(|t| graph.param(t.clone())).collect()
    }

    /// Builds the row-normalized n×n mask inside `graph` from the leaves
    /// returned by [`MaskParams::register`].
    pub fn build_in(&self, graph: &mut Graph, theta: &[NodeId]) -> Result<NodeId> {
        let raw = match self.variant {
            MaskVariant::DirectMatrix => theta[0],
            MaskVariant::OnesEncoder => {
                let ones = graph.constant(Tensor::from_raw(vec![1, self.k], vec![1.0; self.k]));
                let h = graph.matmul_bt(ones, theta[0])?;
                let h = graph.add_row_bias(h, theta[1])?;
                let h = graph.tanh(h);
                let out = graph.matmul_bt(h, theta[2])?;
                let out = graph.add_row_bias(out, theta[3])?;
                graph.reshape(out, vec![self.n, self.n])?
            }
        };
        match self.norm {
            Normalization::Softmax => graph.row_softmax(raw),
            Normalization::Sparsemax => graph.row_sparsemax(raw),
        }
    }
}

fn normal_tensor<R: Rng + ?Sized>(shape: Vec<usize>, std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let len = shape.iter().product();
    Tensor::from_raw(shape, (0..len).map(|_| dist.sample(rng)).collect())
}

/// A realized mask: n×n, every row on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    matrix: Tensor,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl Mask {
    pub fn from_matrix(matrix: Tensor) -> Result<Self> {
        let (rows, cols) = match matrix.shape() {
            [r, c] => (*r, *c),
            other => return Err(mismatch("Mask", "n×n matrix", format!("{other:?}"))),
        };
        if rows != cols || rows == 0 {
            return Err(mismatch("Mask", "square non-empty matrix", format!("{rows}×{cols}")));
        }
        for i in 0..rows {
            let row = matrix.row(i);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParams(format!("mask row {i} is not on the simplex (sum {sum})")));
            }
        }
        Ok(Self { matrix })
    }

    /// The no-masking special case used by the plain BC baseline.
    pub fn identity(n: usize) -> Self {
        Self { matrix: Tensor::identity(n) }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.n();
        let mut sums = vec![0.0; n];
        for i in 0..n {
            sums.iter_mut().zip(self.matrix.row(i)).for_each(|(c, m)| *c += m);
        }
        sums
    }

    /// Writes one row per line, entries separated by single spaces.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.n() {
            let line: Vec<String> = self.matrix.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| Error::InvalidParams(format!("bad mask entry {v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_matrix(Tensor::from_rows(&rows)?)
    }
}

/// Realizes the mask for the current θ.
pub fn build_mask(params: &MaskParams) -> Result<Mask> {
    params.validate()?;
    let mut graph = Graph::new();
    let theta: Vec<NodeId> = params.tensors.iter().map(|t| graph.constant(t.clone())).collect();
    let m = params.build_in(&mut graph, &theta)?;
    Mask::from_matrix(graph.value(m).clone())
}

/// z = M s. The state is data; nothing is differentiated here.
pub fn transform(mask: &Mask, s: &[f64]) -> Result<Vec<f64>> {
    crate::math::matvec(mask.matrix(), s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceVector(pub Vec<f64>);

impl RelevanceVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Mean relevance over `relevant` minus mean over the remaining indices.
    pub fn separation(&self, relevant: &[usize]) -> f64 {
        let (mut rel, mut irr) = (Vec::new(), Vec::new());
        for (i, v) in self.0.iter().enumerate() {
            if relevant.contains(&i) { rel.push(*v) } else { irr.push(*v) }
        }
        mean(&rel) - mean(&irr)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
}

/// Column sums of M divided by the largest column sum. All zeros if every
/// column sum is zero. Max-division keeps exact zeros exact.
pub fn column_relevance(mask: &Mask) -> RelevanceVector {
    let sums = mask.column_sums();
    let max = sums.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return RelevanceVector(vec![0.0; sums.len()]);
    }
    RelevanceVector(sums.iter().map(|c| c / max).collect())
}

/// Min-max rescaling of the column sums, exported next to the max-normalized
/// score for comparison. Constant column sums map to all ones.
pub fn column_relevance_minmax(mask: &Mask) -> RelevanceVector {
    let sums = mask.column_sums();
    let max = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min <= 0.0 {
        return RelevanceVector(vec![if max > 0.0 { 1.0 } else { 0.0 }; sums.len()]);
    }
    RelevanceVector(sums.iter().map(|c| (c - min) / (max - min)).collect())
}

/// `index,relevance,relevance_minmax,column_sum,ground_truth_relevant`
pub fn write_relevance_csv(mask: &Mask, ground_truth: Option<&[usize]>, path: &Path) -> Result<()> {
    let rel = column_relevance(mask);
    let minmax = column_relevance_minmax(mask);
    let sums = mask.column_sums();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "relevance", "relevance_minmax", "column_sum", "ground_truth_relevant"])?;
    for (i, sum) in sums.iter().enumerate() {
        let flag = match ground_truth {
            Some(rel) if rel.contains(&i) => "1",
            Some(_) => "0",
            None => "",
        };
        w.write_record([
            i.to_string(),
            rel.0[i].to_string(),
            minmax.0[i].to_string(),
            sum.to_string(),
            flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct(theta: Vec<Vec<f64>>, norm: Normalization) -> MaskParams {
        let n = theta.len();
        MaskParams::from_parts(MaskVariant::DirectMatrix, norm, n, 0, 0, vec![Tensor::from_rows(&theta).unwrap()]).unwrap()
    }

    #[test]
    fn constant_rows_give_uniform_mask() {
        for norm in [Normalization::Softmax, Normalization::Sparsemax] {
            let m = build_mask(&direct(vec![vec![0.3; 4], vec![-2.0; 4], vec![5.0; 4], vec![0.0; 4]], norm)).unwrap();
            assert!(m.matrix().values().iter().all(|v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn sparsemax_saturates_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let n = 5;
        for c in [2.0, 10.0, 100.0] {
            let theta: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { c } else { 0.0 } + noise.sample(&mut rng)).collect())
                .collect();
            let m = build_mask(&direct(theta, Normalization::Sparsemax)).unwrap();
            let dist: f64 = m
                .matrix()
                .values()
                .iter()
                .zip(Tensor::identity(n).values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if c >= 10.0 {
                assert!(dist < 1e-12, "c = {c}: distance {dist}");
                assert_eq!(m.matrix().values().iter().filter(|v| **v == 0.0).count(), n * n - n);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in [
            MaskParams::direct(6, Normalization::Sparsemax, &mut rng).unwrap(),
            MaskParams::ones_encoder(6, 8, 16, Normalization::Softmax, &mut rng).unwrap(),
        ] {
            let a = build_mask(&params).unwrap();
            let b = build_mask(&params).unwrap();
            let bits = |m: &Mask| m.matrix().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn invalid_shapes_rejected() {
        let bad = MaskParams::from_parts(MaskVariant::DirectMatrix, Normalization::Softmax, 3, 0, 0, vec![Tensor::zeros(vec![3, 2])]);
        assert!(matches!(bad, Err(Error::InvalidParams(_))));
        let bad = MaskParams::from_parts(MaskVariant::OnesEncoder, Normalization::Softmax, 2, 0, 4, vec![]);
        assert!(bad.is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MaskParams::direct(0, Normalization::Softmax, &mut rng).is_err());
    }

    #[test]
    fn relevance_examples() {
        assert_eq!(column_relevance(&Mask::identity(2)).0, vec![1.0, 1.0]);
        let m = Mask::from_matrix(Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(column_relevance(&m).0, vec![1.0, 0.0]);
        let u = Mask::from_matrix(Tensor::matrix(3, 3, vec![1.0 / 3.0; 9]).unwrap()).unwrap();
        assert!(column_relevance(&u).0.iter().all(|r| (r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identity_mask_properties() {
        let m = Mask::identity(3);
        assert_eq!(m.matrix(), &Tensor::identity(3));
        let s = [0.25, -4.0, 9.5];
        assert_eq!(transform(&m, &s).unwrap(), s.to_vec());
        assert_eq!(column_relevance(&m).0, vec![1.0; 3]);
    }

    #[test]
    fn from_matrix_rejects_off_simplex_rows() {
        assert!(Mask::from_matrix(Tensor::from_rows(&[vec![0.5, 0.6], vec![1.0, 0.0]]).unwrap()).is_err());
        assert!(Mask::from_matrix(Tensor::from_rows(&[vec![1.5, -0.5], vec![1.0, 0.0]]).unwrap()).is_err());
        assert!(Mask::from_matrix(Tensor::zeros(vec![2, 3])).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = build_mask(&MaskParams::direct(4, Normalization::Softmax, &mut rng).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        m.write_text(&path).unwrap();
        assert_eq!(Mask::read_text(&path).unwrap(), m);
    }

    #[test]
    fn transform_dimension_mismatch() {
        assert!(transform(&Mask::identity(3), &[1.0]).is_err());
    }
}
