//! Face recognition by non-negative factorization encodings.
//!
//! Training images are column-vectorized and stacked into `X_train`, which
//! is factorized as `W H`. A probe `g` is encoded by least squares,
//! `h = (W* W + eps I)^-1 W* g`, and matched to the training column of `H`
//! with the largest cosine similarity. Three pipelines share this shape:
//! quaternion (one pure-quaternion model), per-channel (three real models
//! whose cosines add) and gray (one real model on luma).
//!
//! Images are vectorized column-major: pixel `(row, col)` lands at index
//! `col * height + row`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{nmf_admm, nmf_pg, ChannelMethod, RealAdmmState, RealFactorPair};
use crate::error::{check_shape, Error, Result};
use crate::imaging::{load_image, ColorImage};
use crate::init::InitBundle;
use crate::linalg::{HpdFactor, Side};
use crate::qmatrix::QMatrix;
use crate::solvers::{qadmm_run, qipg_run, PgConfig, PgVariant};

/// Luma weights used for the gray pipeline.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Column-vectorized pure-quaternion faces with identity labels.
#[derive(Debug, Clone)]
pub struct FaceDataset {
    pub width: usize,
    pub height: usize,
    /// Each `width * height x 1`.
    pub images: Vec<QMatrix>,
    pub labels: Vec<u32>,
    pub split: Vec<Split>,
    /// Source of each image, used in reports.
    pub paths: Vec<String>,
}

/// `width * height x 1` column of the pure-quaternion encoding.
pub fn vectorize(img: &ColorImage) -> QMatrix {
    let [r, g, b] = img.channels();
    let col = |c: &DMatrix<f64>| DMatrix::from_column_slice(c.len(), 1, c.as_slice());
    QMatrix::pure(col(r), col(g), col(b)).expect("channel shapes agree")
}

impl FaceDataset {
    pub fn new(
        width: usize,
        height: usize,
        images: Vec<QMatrix>,
        labels: Vec<u32>,
        split: Vec<Split>,
        paths: Vec<String>,
    ) -> Result<Self> {
        let n = images.len();
        if labels.len() != n || split.len() != n || paths.len() != n {
            return Err(Error::Domain("images, labels, splits and paths must be parallel".into()));
        }
        for img in &images {
            check_shape("FaceDataset::new", img.shape(), (width * height, 1))?;
        }
        Ok(FaceDataset {
            width,
            height,
            images,
            labels,
            split,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Columns `indices` side by side.
    pub fn stack(&self, indices: &[usize]) -> Result<QMatrix> {
        if indices.is_empty() {
            return Err(Error::Domain("no images selected".into()));
        }
        let cols: Vec<QMatrix> = indices.iter().map(|&i| self.images[i].clone()).collect();
        QMatrix::hstack(&cols)
    }

    /// Reassigns splits: per identity, `eta` images chosen by a seeded
    /// shuffle go to training and the rest to testing.
    pub fn resplit(&mut self, eta: usize, seed: u64) -> Result<()> {
        let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            by_label.entry(l).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (label, mut idx) in by_label {
            if idx.len() <= eta {
                return Err(Error::Config(format!(
                    "identity {label} has {} images; a split of {eta} training images needs more",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            for (k, &i) in idx.iter().enumerate() {
                self.split[i] = if k < eta { Split::Train } else { Split::Test };
            }
        }
        Ok(())
    }

    /// Reads a `path,label[,split]` manifest; paths resolve against the
    /// manifest's directory. Without a split column, `eta` (required then)
    /// training images per identity are drawn with `seed`.
    pub fn load_manifest(manifest: impl AsRef<Path>, eta: Option<usize>, seed: u64) -> Result<Self> {
        let manifest = manifest.as_ref();
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::Reader::from_path(manifest)?;
        let headers = rdr.headers()?.clone();
        let column = |name: &str| headers.iter().position(|h| h.trim() == name);
        let path_col = column("path").ok_or_else(|| Error::Manifest("missing column `path`".into()))?;
        let label_col = column("label").ok_or_else(|| Error::Manifest("missing column `label`".into()))?;
        let split_col = column("split");

        let (mut images, mut labels, mut split, mut paths) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut dims = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let field = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
            let rel = field(path_col);
            let label: u32 = field(label_col)
                .parse()
                .map_err(|_| Error::Manifest(format!("line {line}: bad label `{}`", field(label_col))))?;
            let s = match split_col.map(field) {
                None => Split::Train,
                Some("train") => Split::Train,
                Some("test") => Split::Test,
                Some(other) => {
                    return Err(Error::Manifest(format!("line {line}: split must be train or test, got `{other}`")))
                }
            };
            let full: PathBuf = base.join(rel);
            let img = load_image(&full)?;
            let d = (img.width(), img.height());
            if *dims.get_or_insert(d) != d {
                return Err(Error::Manifest(format!("line {line}: {rel} is {}x{}, expected {}x{}", d.0, d.1, dims.unwrap().0, dims.unwrap().1)));
            }
            images.push(vectorize(&img));
            labels.push(label);
            split.push(s);
            paths.push(rel.to_string());
        }
        let (width, height) = dims.ok_or_else(|| Error::Manifest("manifest lists no images".into()))?;
        let mut ds = FaceDataset::new(width, height, images, labels, split, paths)?;
        if split_col.is_none() {
            let eta = eta.ok_or_else(|| Error::Config("manifest has no split column; a training size is required".into()))?;
            ds.resplit(eta, seed)?;
        }
        Ok(ds)
    }
}

/// Synthetic corpus with its generating factors, `X = W_true H_true`
/// exactly (before any quantization on save).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: FaceDataset,
    /// `width * height x rank`, pure imaginary, non-negative.
    pub w_true: QMatrix,
    /// `rank x images`, real, non-negative.
    pub h_true: QMatrix,
}

/// Face-like corpus: a shared basis of `rank` smooth color parts, a
/// non-negative base code per identity, and per-image illumination scaling
/// plus small expression perturbations of the code. Pixels are rescaled so
/// the brightest sample is 255. The first `eta` images of each identity are
/// marked for training.
pub fn synthetic_corpus(
    seed: u64,
    identities: usize,
    per_identity: usize,
    width: usize,
    height: usize,
    rank: usize,
    eta: usize,
) -> Result<SyntheticCorpus> {
    if identities == 0 || per_identity == 0 || width == 0 || height == 0 || rank == 0 {
        return Err(Error::Config("corpus dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mn = width * height;
    let part = |rng: &mut ChaCha8Rng| {
        let (cx, cy) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let r: f64 = rng.random_range(0.1..0.35);
        DMatrix::from_fn(mn, 1, |k, _| {
            let (row, col) = (k % height, k / height);
            let (x, y) = ((col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * r * r)).exp()
        })
    };
    let mut planes: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(mn, rank));
    for t in 0..rank {
        for p in planes.iter_mut() {
            let col = part(&mut rng) * rng.random_range(0.2..1.0);
            p.set_column(t, &col.column(0));
        }
    }
    let w_true = QMatrix::pure(planes[0].clone(), planes[1].clone(), planes[2].clone())?;

    let total = identities * per_identity;
    let mut h = DMatrix::zeros(rank, total);
    let mut labels = Vec::with_capacity(total);
    let mut split = Vec::with_capacity(total);
    for id in 0..identities {
        let base: Vec<f64> = (0..rank)
            .map(|_| if rng.random_bool(0.4) { rng.random_range(0.5..1.5) } else { 0.0 })
            .collect();
        for k in 0..per_identity {
            let illum = rng.random_range(0.8..1.2);
            let col = id * per_identity + k;
            for t in 0..rank {
                h[(t, col)] = illum * base[t] + 0.1 * rng.random_range(0.0..1.0);
            }
            labels.push(id as u32);
            split.push(if k < eta { Split::Train } else { Split::Test });
        }
    }
    let mut h_true = QMatrix::from_real(h);
    let peak = (&w_true * &h_true).imag().planes().iter().map(|p| p.max()).fold(0.0, f64::max);
    if peak > 0.0 {
        h_true = h_true.scale(255.0 / peak);
    }
    let x = &w_true * &h_true;
    let images = (0..total).map(|j| x.column(j)).collect();
    let paths = (0..total)
        .map(|j| format!("id{:03}_{:02}.ppm", labels[j], j % per_identity))
        .collect();
    let dataset = FaceDataset::new(width, height, images, labels, split, paths)?;
    Ok(SyntheticCorpus { dataset, w_true, h_true })
}

/// Writes every image as PPM plus `manifest.csv` (`path,label,split`).
pub fn write_corpus(ds: &FaceDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut wtr = csv::Writer::from_path(dir.join("manifest.csv"))?;
    wtr.write_record(["path", "label", "split"])?;
    for i in 0..ds.len() {
        let img = devectorize(&ds.images[i], ds.width, ds.height)?;
        crate::imaging::save_image(&img, dir.join(&ds.paths[i]))?;
        let split = match ds.split[i] {
            Split::Train => "train",
            Split::Test => "test",
        };
        wtr.write_record([ds.paths[i].as_str(), &ds.labels[i].to_string(), split])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Inverse of [`vectorize`], clamping to the pixel range.
pub fn devectorize(col: &QMatrix, width: usize, height: usize) -> Result<ColorImage> {
    check_shape("devectorize", col.shape(), (width * height, 1))?;
    let plane = |p: usize| DMatrix::from_column_slice(height, width, col.plane(p).as_slice());
    ColorImage::new(plane(1), plane(2), plane(3))
}

/// Solver used to factorize the training matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSolver {
    Admm { alpha: f64, beta: f64, iters: usize },
    Pg { cfg: PgConfig, variant: PgVariant },
}

impl Default for TrainSolver {
    fn default() -> Self {
        TrainSolver::Admm {
            alpha: 0.01,
            beta: 0.01,
            iters: 4,
        }
    }
}

fn check_rank(l: usize, mn: usize, mu: usize) -> Result<()> {
    if l == 0 || l >= mn.min(mu) {
        return Err(Error::Config(format!(
            "rank {l} must satisfy 0 < l < min({mn}, {mu})"
        )));
    }
    Ok(())
}

/// Real cosine similarity; `None` when either vector is zero.
fn cosine(a_dot_b: f64, na: f64, nb: f64) -> Option<f64> {
    (na > 0.0 && nb > 0.0).then(|| a_dot_b / (na * nb))
}

/// Index of the largest score, smallest index on ties. `None` when every
/// score is `-inf`.
fn argmax(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, &s) in scores.iter().enumerate() {
        if s > f64::NEG_INFINITY && best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    best
}

/// `Re <h, c> / (|h|_F |c|_F)` for quaternion vectors.
pub fn similarity_q(h: &QMatrix, c: &QMatrix) -> Result<f64> {
    let dot = h.re_inner(c)?;
    cosine(dot, h.fro_norm(), c.fro_norm()).ok_or_else(|| Error::Domain("similarity of a zero vector".into()))
}

/// Trained quaternion recognition model.
#[derive(Debug, Clone)]
pub struct RecognitionModel {
    pub w: QMatrix,
    pub h: QMatrix,
    pub labels: Vec<u32>,
    pub ridge: f64,
    gram: HpdFactor,
}

impl RecognitionModel {
    /// Wraps given factors; one label per column of `h`.
    pub fn from_factors(w: QMatrix, h: QMatrix, labels: Vec<u32>, ridge: f64) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(Error::Dimension {
                op: "RecognitionModel",
                lhs: w.shape(),
                rhs: h.shape(),
            });
        }
        if labels.len() != h.cols() {
            return Err(Error::Domain("one label per training column required".into()));
        }
        if ridge.is_nan() || ridge < 0.0 {
            return Err(Error::Config("ridge must be non-negative".into()));
        }
        let l = w.cols();
        let gram = &(&w.conj_transpose() * &w) + &QMatrix::identity(l).scale(ridge);
        let gram = HpdFactor::new(&gram)?;
        Ok(RecognitionModel { w, h, labels, ridge, gram })
    }

    /// Factorizes `x_train` (`mn x mu`) from the seeded initial factors.
    /// ADMM training keeps the primal iterates `(W, H)`: after a handful of
    /// steps the splits can still be identically zero.
    pub fn train(x_train: &QMatrix, labels: Vec<u32>, l: usize, solver: &TrainSolver, seed: u64, ridge: f64) -> Result<Self> {
        let (mn, mu) = x_train.shape();
        check_rank(l, mn, mu)?;
        let bundle = InitBundle::draw(seed, mn, mu, l);
        let pair = match *solver {
            TrainSolver::Admm { alpha, beta, iters } => {
                let s = qadmm_run(x_train, bundle.quaternion_admm(alpha, beta)?, iters, 0.0)?.state;
                (s.w, s.h)
            }
            TrainSolver::Pg { cfg, variant } => {
                let p = qipg_run(x_train, &bundle.quaternion_pair(), &cfg, variant)?.pair;
                (p.w, p.h)
            }
        };
        Self::from_factors(pair.0, pair.1, labels, ridge)
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    /// `|X - W H|_F / |X|_F`.
    pub fn training_residual(&self, x_train: &QMatrix) -> Result<f64> {
        let r = x_train.try_sub(&self.w.try_mul(&self.h)?)?;
        Ok(r.fro_norm() / x_train.fro_norm())
    }

    /// Least-squares code `(W* W + eps I)^-1 W* g`.
    pub fn encode_probe(&self, g: &QMatrix) -> Result<QMatrix> {
        let rhs = self.w.conj_transpose().try_mul(g)?;
        self.gram.solve(&rhs, Side::Left)
    }

    /// Cosine of the probe code against every training column; zero codes
    /// score `-inf`.
    pub fn scores(&self, g: &QMatrix) -> Result<Vec<f64>> {
        let h = self.encode_probe(g)?;
        let nh = h.fro_norm();
        Ok((0..self.h.cols())
            .map(|t| {
                let c = self.h.column(t);
                let dot = h.re_inner(&c).expect("conformable codes");
                cosine(dot, nh, c.fro_norm()).unwrap_or(f64::NEG_INFINITY)
            })
            .collect())
    }

    /// Best-matching training column and its score.
    pub fn classify(&self, g: &QMatrix) -> Result<(usize, f64)> {
        argmax(&self.scores(g)?).ok_or_else(|| Error::Domain("probe has no non-degenerate match".into()))
    }

    /// Binary layout, all integers and floats little-endian:
    /// `b"QFRM"`, `u32` version (1), `u64` rows of W, `u64` rank, `u64`
    /// training columns, `f64` ridge, the four planes of `W` then of `H`
    /// (each row-major `f64`), then one `u32` label per column.
    pub fn write_to<Wr: Write>(&self, mut out: Wr) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        for d in [self.w.rows(), self.rank(), self.h.cols()] {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&self.ridge.to_le_bytes())?;
        for m in [&self.w, &self.h] {
            for p in m.planes() {
                for i in 0..p.nrows() {
                    for j in 0..p.ncols() {
                        out.write_all(&p[(i, j)].to_le_bytes())?;
                    }
                }
            }
        }
        for l in &self.labels {
            out.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<Rd: Read>(mut input: Rd) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::Parse { offset: 0, msg: "not a model file".into() });
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != MODEL_VERSION {
            return Err(Error::Unsupported(format!("model version {version}")));
        }
        let mut dim = || -> Result<usize> {
            let at = cur.pos;
            usize::try_from(u64::from_le_bytes(cur.array()?)).map_err(|_| Error::Parse { offset: at, msg: "dimension overflow".into() })
        };
        let (rows, l, mu) = (dim()?, dim()?, dim()?);
        let ridge = f64::from_le_bytes(cur.array()?);
        let need = rows
            .checked_mul(l)
            .and_then(|a| l.checked_mul(mu).and_then(|b| a.checked_add(b)))
            .and_then(|n| n.checked_mul(32))
            .and_then(|n| n.checked_add(4 * mu))
            .ok_or_else(|| Error::Parse { offset: cur.pos, msg: "dimension overflow".into() })?;
        if bytes.len() - cur.pos != need {
            return Err(Error::Parse {
                offset: cur.pos,
                msg: format!("expected {need} payload bytes, found {}", bytes.len() - cur.pos),
            });
        }
        let mut read_q = |r: usize, c: usize| -> Result<QMatrix> {
            let mut planes = Vec::with_capacity(4);
            for _ in 0..4 {
                let mut vals = Vec::with_capacity(r * c);
                for _ in 0..r * c {
                    vals.push(f64::from_le_bytes(cur.array()?));
                }
                planes.push(DMatrix::from_row_slice(r, c, &vals));
            }
            let [a, b, c2, d]: [DMatrix<f64>; 4] = planes.try_into().expect("four planes");
            QMatrix::new(a, b, c2, d)
        };
        let w = read_q(rows, l)?;
        let h = read_q(l, mu)?;
        let labels = (0..mu).map(|_| cur.array().map(u32::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        Self::from_factors(w, h, labels, ridge)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"QFRM";
const MODEL_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or(Error::Parse {
            offset: self.bytes.len(),
            msg: "truncated model file".into(),
        })?;
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

/// Real least-squares encoder `h = (W^T W + eps I)^-1 W^T g`.
#[derive(Debug, Clone)]
pub struct RealModel {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl RealModel {
    pub fn from_factors(w: DMatrix<f64>, h: DMatrix<f64>, ridge: f64) -> Result<Self> {
        if w.ncols() != h.nrows() {
            return Err(Error::Dimension {
                op: "RealModel",
                lhs: w.shape(),
                rhs: h.shape(),
            });
        }
        let l = w.ncols();
        let gram = w.transpose() * &w + DMatrix::identity(l, l) * ridge;
        let gram = Cholesky::new(gram).ok_or_else(|| Error::Singular("W^T W is not positive definite".into()))?;
        Ok(RealModel { w, h, gram })
    }

    pub fn encode(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        check_shape("RealModel::encode", (g.len(), 1), (self.w.nrows(), 1))?;
        Ok(self.gram.solve(&(self.w.transpose() * g)))
    }

    /// Cosine of `code` against each training column; `None` entries mark
    /// zero training columns. Returns `None` for a zero code.
    fn cosines(&self, code: &DVector<f64>) -> Option<Vec<Option<f64>>> {
        let nc = code.norm();
        (nc > 0.0).then(|| {
            self.h
                .column_iter()
                .map(|c| cosine(code.dot(&c), nc, c.norm()))
                .collect()
        })
    }
}

fn train_real(x: &DMatrix<f64>, init: (DMatrix<f64>, DMatrix<f64>), method: &ChannelMethod) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(match *method {
        ChannelMethod::Pg(cfg) => {
            let p = nmf_pg(x, &RealFactorPair::new(init.0, init.1)?, &cfg)?.pair;
            (p.w, p.h)
        }
        ChannelMethod::Admm { alpha, beta, iters } => {
            let s = nmf_admm(x, RealAdmmState::from_factors(init.0, init.1, alpha, beta)?, iters)?.state;
            (s.w, s.h)
        }
    })
}

/// Three per-channel real models whose cosines are summed.
#[derive(Debug, Clone)]
pub struct ChannelModels {
    pub models: [RealModel; 3],
    pub labels: Vec<u32>,
}

impl ChannelModels {
    /// Channel `c` of `x_train` is factorized from `(L_c, S_c)`.
    pub fn train(x_train: &QMatrix, labels: Vec<u32>, l: usize, method: &ChannelMethod, seed: u64, ridge: f64) -> Result<Self> {
        let (mn, mu) = x_train.shape();
        check_rank(l, mn, mu)?;
        if labels.len() != mu {
            return Err(Error::Domain("one label per training column required".into()));
        }
        let bundle = InitBundle::draw(seed, mn, mu, l);
        let trained: Vec<Result<RealModel>> = (0..3usize)
            .into_par_iter()
            .map(|c| {
                let (w, h) = train_real(x_train.plane(c + 1), (bundle.l[c].clone(), bundle.s[c].clone()), method)?;
                RealModel::from_factors(w, h, ridge)
            })
            .collect();
        let [r, g, b]: [RealModel; 3] = trained.into_iter().collect::<Result<Vec<_>>>()?.try_into().expect("three channels");
        Ok(ChannelModels { models: [r, g, b], labels })
    }

    /// Sum over channels of the per-channel cosine. A zero probe channel
    /// contributes nothing; a zero training column in a contributing
    /// channel scores `-inf`.
    pub fn scores(&self, g: &QMatrix) -> Result<Vec<f64>> {
        let mu = self.labels.len();
        let mut total = vec![0.0; mu];
        let mut any = false;
        for (c, model) in self.models.iter().enumerate() {
            let probe = DVector::from_column_slice(g.plane(c + 1).as_slice());
            let code = model.encode(&probe)?;
            if let Some(cos) = model.cosines(&code) {
                any = true;
                for (t, v) in cos.into_iter().enumerate() {
                    total[t] += v.unwrap_or(f64::NEG_INFINITY);
                }
            }
        }
        if !any {
            return Err(Error::Domain("probe encodes to zero in every channel".into()));
        }
        Ok(total)
    }

    pub fn classify(&self, g: &QMatrix) -> Result<(usize, f64)> {
        argmax(&self.scores(g)?).ok_or_else(|| Error::Domain("probe has no non-degenerate match".into()))
    }
}

/// Luma of a pure-quaternion column.
pub fn to_gray(g: &QMatrix) -> DVector<f64> {
    let v = g.plane(1) * LUMA[0] + g.plane(2) * LUMA[1] + g.plane(3) * LUMA[2];
    DVector::from_column_slice(v.as_slice())
}

/// Real model on luma images.
#[derive(Debug, Clone)]
pub struct GrayModel {
    pub model: RealModel,
    pub labels: Vec<u32>,
}

impl GrayModel {
    /// Factorizes the luma matrix from `(L_1, S_1)`.
    pub fn train(x_train: &QMatrix, labels: Vec<u32>, l: usize, method: &ChannelMethod, seed: u64, ridge: f64) -> Result<Self> {
        let (mn, mu) = x_train.shape();
        check_rank(l, mn, mu)?;
        if labels.len() != mu {
            return Err(Error::Domain("one label per training column required".into()));
        }
        let gray = x_train.plane(1) * LUMA[0] + x_train.plane(2) * LUMA[1] + x_train.plane(3) * LUMA[2];
        let bundle = InitBundle::draw(seed, mn, mu, l);
        let (w, h) = train_real(&gray, (bundle.l[0].clone(), bundle.s[0].clone()), method)?;
        Ok(GrayModel {
            model: RealModel::from_factors(w, h, ridge)?,
            labels,
        })
    }

    pub fn scores(&self, g: &DVector<f64>) -> Result<Vec<f64>> {
        let code = self.model.encode(g)?;
        let cos = self
            .model
            .cosines(&code)
            .ok_or_else(|| Error::Domain("probe encodes to zero".into()))?;
        Ok(cos.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
    }

    pub fn classify(&self, g: &DVector<f64>) -> Result<(usize, f64)> {
        argmax(&self.scores(g)?).ok_or_else(|| Error::Domain("probe has no non-degenerate match".into()))
    }
}

/// Fraction of equal entries.
pub fn accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Domain("prediction and truth lengths differ".into()));
    }
    if truth.is_empty() {
        return Err(Error::Domain("empty test set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecognitionMethod {
    QadmmColor,
    RadmmColor,
    RadmmGray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probe: usize,
    /// Index into the training selection.
    pub matched: usize,
    pub predicted_label: u32,
    pub true_label: u32,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub accuracy: f64,
    /// `|X - W H|_F / |X|_F`, combined over channels for the real methods.
    pub training_residual: f64,
}

/// Trains on `train` indices and classifies `test` indices of `ds`.
pub fn evaluate(
    ds: &FaceDataset,
    train: &[usize],
    test: &[usize],
    method: RecognitionMethod,
    l: usize,
    (alpha, beta, iters): (f64, f64, usize),
    seed: u64,
    ridge: f64,
) -> Result<Evaluation> {
    let x = ds.stack(train)?;
    let labels: Vec<u32> = train.iter().map(|&i| ds.labels[i]).collect();
    let (classify, training_residual): (Box<dyn Fn(&QMatrix) -> Result<(usize, f64)> + Sync>, f64) = match method {
        RecognitionMethod::QadmmColor => {
            let solver = TrainSolver::Admm { alpha, beta, iters };
            let m = RecognitionModel::train(&x, labels.clone(), l, &solver, seed, ridge)?;
            let r = m.training_residual(&x)?;
            (Box::new(move |g| m.classify(g)), r)
        }
        RecognitionMethod::RadmmColor => {
            let m = ChannelModels::train(&x, labels.clone(), l, &ChannelMethod::Admm { alpha, beta, iters }, seed, ridge)?;
            let num: f64 = (0..3)
                .map(|c| (x.plane(c + 1) - &m.models[c].w * &m.models[c].h).norm_squared())
                .sum();
            let r = num.sqrt() / x.fro_norm();
            (Box::new(move |g| m.classify(g)), r)
        }
        RecognitionMethod::RadmmGray => {
            let m = GrayModel::train(&x, labels.clone(), l, &ChannelMethod::Admm { alpha, beta, iters }, seed, ridge)?;
            let gray = x.plane(1) * LUMA[0] + x.plane(2) * LUMA[1] + x.plane(3) * LUMA[2];
            let r = (&gray - &m.model.w * &m.model.h).norm() / gray.norm();
            (Box::new(move |g| m.classify(&to_gray(g))), r)
        }
    };
    let predictions = test
        .par_iter()
        .map(|&i| {
            let (matched, score) = classify(&ds.images[i])?;
            Ok(Prediction {
                probe: i,
                matched,
                predicted_label: labels[matched],
                true_label: ds.labels[i],
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<u32> = predictions.iter().map(|p| p.predicted_label).collect();
    let truth: Vec<u32> = predictions.iter().map(|p| p.true_label).collect();
    Ok(Evaluation {
        accuracy: accuracy(&pred, &truth)?,
        predictions,
        training_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quaternion::Quaternion;

    /// Cosine computed entry by entry from quaternion components.
    fn brute_force_scores(model: &RecognitionModel, g: &QMatrix) -> Vec<f64> {
        let h = model.encode_probe(g).unwrap();
        (0..model.h.cols())
            .map(|t| {
                let (mut dot, mut nh, mut nc) = (0.0, 0.0, 0.0);
                for i in 0..h.rows() {
                    let a = h.get(i, 0);
                    let b = model.h.get(i, t);
                    dot += (a.conj() * b).w;
                    nh += a.norm_sqr();
                    nc += b.norm_sqr();
                }
                if nh == 0.0 || nc == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    dot / (nh.sqrt() * nc.sqrt())
                }
            })
            .collect()
    }

    fn brute_argmax(s: &[f64]) -> usize {
        let mut best = 0;
        for t in 1..s.len() {
            if s[t] > s[best] {
                best = t;
            }
        }
        best
    }

    fn corpus() -> SyntheticCorpus {
        synthetic_corpus(5, 3, 4, 8, 6, 6, 2).unwrap()
    }

    #[test]
    fn vectorize_is_column_major_and_invertible() {
        let img = ColorImage::from_rgb8(2, 3, &(0..18).collect::<Vec<u8>>()).unwrap();
        let v = vectorize(&img);
        // pixel (row 1, col 0) is the second entry.
        assert_eq!(v.get(1, 0), Quaternion::new(0.0, 6.0, 7.0, 8.0));
        assert_eq!(v.get(3, 0), Quaternion::new(0.0, 3.0, 4.0, 5.0));
        assert_eq!(devectorize(&v, 2, 3).unwrap(), img);
    }

    #[test]
    fn similarity_examples() {
        let h = QMatrix::pure(
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_column_slice(2, 1, &[0.5, 0.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert!((similarity_q(&h, &h).unwrap() - 1.0).abs() < 1e-15);
        assert!((similarity_q(&h, &h.scale(-1.0)).unwrap() + 1.0).abs() < 1e-15);
        assert!((similarity_q(&h, &h.scale(3.5)).unwrap() - 1.0).abs() < 1e-15);
        let a = QMatrix::from_real(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let b = QMatrix::from_real(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(similarity_q(&a, &b).unwrap(), 0.0);
        assert_eq!(similarity_q(&a, &b).unwrap(), similarity_q(&b, &a).unwrap());
        assert!(similarity_q(&a, &QMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.9, 0.9]), Some((1, 0.9)));
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), None);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn exact_model_recovers_training_codes() {
        let c = corpus();
        let model = RecognitionModel::from_factors(c.w_true.clone(), c.h_true.clone(), c.dataset.labels.clone(), 0.0).unwrap();
        for t in 0..c.dataset.len() {
            let code = model.encode_probe(&c.dataset.images[t]).unwrap();
            let err = code.try_sub(&c.h_true.column(t)).unwrap().fro_norm();
            assert!(err <= 1e-8 * c.h_true.column(t).fro_norm(), "column {t}: {err}");
            let (idx, score) = model.classify(&c.dataset.images[t]).unwrap();
            assert_eq!(idx, t);
            assert!((score - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_factors_reproduce_columns() {
        let c = corpus();
        let x = c.dataset.stack(&[0, 1, 2]).unwrap();
        let model = RecognitionModel::from_factors(x.clone(), QMatrix::identity(3), vec![0, 0, 0], 0.0).unwrap();
        assert!(model.training_residual(&x).unwrap() == 0.0);
        for t in 0..3 {
            let e = model.encode_probe(&x.column(t)).unwrap();
            assert!(e.try_sub(&QMatrix::identity(3).column(t)).unwrap().fro_norm() < 1e-9);
        }
    }

    #[test]
    fn encoding_is_orthogonal_projection() {
        let c = corpus();
        let model = RecognitionModel::from_factors(c.w_true.clone(), c.h_true.clone(), c.dataset.labels.clone(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = crate::sampling::random_qmatrix(&mut rng, c.w_true.rows(), 1);
        let r = g.try_sub(&(&model.w * &model.encode_probe(&g).unwrap())).unwrap();
        for _ in 0..5 {
            let d = crate::sampling::random_qmatrix(&mut rng, model.rank(), 1);
            let wd = &model.w * &d;
            assert!(r.re_inner(&wd).unwrap().abs() <= 1e-8 * r.fro_norm() * wd.fro_norm());
        }
    }

    #[test]
    fn trained_classify_matches_brute_force_and_is_scale_invariant() {
        let c = corpus();
        let train = c.dataset.indices(Split::Train);
        let x = c.dataset.stack(&train).unwrap();
        let labels = train.iter().map(|&i| c.dataset.labels[i]).collect();
        let model = RecognitionModel::train(&x, labels, 3, &TrainSolver::default(), 1, 0.0).unwrap();
        for g in &c.dataset.images {
            let (idx, score) = model.classify(g).unwrap();
            let bf = brute_force_scores(&model, g);
            assert_eq!(idx, brute_argmax(&bf));
            assert!((score - bf[idx]).abs() < 1e-12);
            assert_eq!(model.classify(&g.scale(7.25)).unwrap().0, idx);
        }
    }

    #[test]
    fn permuting_training_columns_permutes_matches() {
        let c = corpus();
        let model = RecognitionModel::from_factors(c.w_true.clone(), c.h_true.clone(), c.dataset.labels.clone(), 0.0).unwrap();
        let mu = c.h_true.cols();
        let perm: Vec<usize> = (0..mu).rev().collect();
        let hp = QMatrix::hstack(&perm.iter().map(|&t| c.h_true.column(t)).collect::<Vec<_>>()).unwrap();
        let lp = perm.iter().map(|&t| c.dataset.labels[t]).collect();
        let permuted = RecognitionModel::from_factors(c.w_true.clone(), hp, lp, 0.0).unwrap();
        for g in &c.dataset.images {
            let (a, sa) = model.classify(g).unwrap();
            let (b, sb) = permuted.classify(g).unwrap();
            assert_eq!(perm[b], a);
            assert!((sa - sb).abs() < 1e-12);
            assert_eq!(permuted.labels[b], model.labels[a]);
        }
    }

    #[test]
    fn zero_probe_is_degenerate() {
        let c = corpus();
        let model = RecognitionModel::from_factors(c.w_true.clone(), c.h_true.clone(), c.dataset.labels.clone(), 0.0).unwrap();
        let z = QMatrix::zeros(c.w_true.rows(), 1);
        assert!(model.scores(&z).unwrap().iter().all(|s| *s == f64::NEG_INFINITY));
        assert!(model.classify(&z).is_err());
    }

    #[test]
    fn channel_models_identical_channels_score_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Same real factors in every channel: probe equal to a training image.
        let w = crate::sampling::uniform_matrix(&mut rng, 30, 6, 0.0, 1.0);
        let h = DMatrix::identity(6, 6);
        let model = RealModel::from_factors(w.clone(), h, 0.0).unwrap();
        let cm = ChannelModels {
            models: [model.clone(), model.clone(), model],
            labels: (0..6).collect(),
        };
        let probe = QMatrix::pure(w.columns(2, 1).into(), w.columns(2, 1).into(), w.columns(2, 1).into()).unwrap();
        let (idx, score) = cm.classify(&probe).unwrap();
        assert_eq!(idx, 2);
        assert!((score - 3.0).abs() < 1e-9);

        // A probe living in one channel scores a single cosine.
        let mut single = QMatrix::zeros(w.nrows(), 1);
        single.plane_mut(2).copy_from(&w.column(4));
        let (idx, score) = cm.classify(&single).unwrap();
        assert_eq!(idx, 4);
        assert!((score - 1.0).abs() < 1e-9);
        assert!(cm.classify(&QMatrix::zeros(w.nrows(), 1)).is_err());
    }

    #[test]
    fn channel_and_gray_training_match_brute_force() {
        let c = corpus();
        let idx: Vec<usize> = (0..c.dataset.len()).collect();
        let x = c.dataset.stack(&idx).unwrap();
        let method = ChannelMethod::Admm { alpha: 0.01, beta: 0.01, iters: 4 };
        let cm = ChannelModels::train(&x, c.dataset.labels.clone(), 3, &method, 2, 0.0).unwrap();
        let gm = GrayModel::train(&x, c.dataset.labels.clone(), 3, &method, 2, 0.0).unwrap();
        for g in &c.dataset.images {
            let mut bf = vec![0.0; idx.len()];
            for (ch, m) in cm.models.iter().enumerate() {
                let p = DVector::from_column_slice(g.plane(ch + 1).as_slice());
                let code = (m.w.transpose() * &m.w).lu().solve(&(m.w.transpose() * &p)).unwrap();
                for t in 0..idx.len() {
                    let col = m.h.column(t);
                    bf[t] += code.dot(&col) / (code.norm() * col.norm());
                }
            }
            assert_eq!(cm.classify(g).unwrap().0, brute_argmax(&bf));

            let gray = to_gray(g);
            let m = &gm.model;
            let code = (m.w.transpose() * &m.w).lu().solve(&(m.w.transpose() * &gray)).unwrap();
            let bf: Vec<f64> = (0..idx.len())
                .map(|t| code.dot(&m.h.column(t)) / (code.norm() * m.h.column(t).norm()))
                .collect();
            assert_eq!(gm.classify(&gray).unwrap().0, brute_argmax(&bf));
        }
    }

    #[test]
    fn luma_weights() {
        let g = QMatrix::pure(
            DMatrix::from_element(1, 1, 100.0),
            DMatrix::from_element(1, 1, 200.0),
            DMatrix::from_element(1, 1, 50.0),
        )
        .unwrap();
        assert!((to_gray(&g)[0] - (29.9 + 117.4 + 5.7)).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_validates_rank() {
        let c = corpus();
        let x = c.dataset.stack(&(0..c.dataset.len()).collect::<Vec<_>>()).unwrap();
        let labels = c.dataset.labels.clone();
        let a = RecognitionModel::train(&x, labels.clone(), 3, &TrainSolver::default(), 9, 0.0).unwrap();
        let b = RecognitionModel::train(&x, labels.clone(), 3, &TrainSolver::default(), 9, 0.0).unwrap();
        assert_eq!((a.w, a.h), (b.w, b.h));
        assert!(RecognitionModel::train(&x, labels.clone(), 0, &TrainSolver::default(), 9, 0.0).is_err());
        assert!(RecognitionModel::train(&x, labels, 12, &TrainSolver::default(), 9, 0.0).is_err());
    }

    #[test]
    fn model_round_trip() {
        let c = corpus();
        let model = RecognitionModel::from_factors(c.w_true.clone(), c.h_true.clone(), c.dataset.labels.clone(), 0.5).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"QFRM");
        let (rows, l, mu) = (c.w_true.rows(), c.w_true.cols(), c.h_true.cols());
        assert_eq!(buf.len(), 4 + 4 + 24 + 8 + 32 * (rows * l + l * mu) + 4 * mu);
        let back = RecognitionModel::read_from(buf.as_slice()).unwrap();
        assert_eq!((&back.w, &back.h, &back.labels, back.ridge), (&model.w, &model.h, &model.labels, 0.5));
        assert!(RecognitionModel::read_from(&buf[..buf.len() - 1]).is_err());
        assert!(RecognitionModel::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn manifest_split_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let c = synthetic_corpus(1, 2, 3, 4, 4, 3, 1).unwrap();
        write_corpus(&c.dataset, dir.path()).unwrap();
        let ds = FaceDataset::load_manifest(dir.path().join("manifest.csv"), None, 0).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.indices(Split::Train).len(), 2);
        assert_eq!(ds.labels, c.dataset.labels);

        let text = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        let no_split: String = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
        std::fs::write(dir.path().join("m2.csv"), &no_split).unwrap();
        let a = FaceDataset::load_manifest(dir.path().join("m2.csv"), Some(2), 4).unwrap();
        let b = FaceDataset::load_manifest(dir.path().join("m2.csv"), Some(2), 4).unwrap();
        assert_eq!(a.split, b.split);
        assert_eq!(a.indices(Split::Train).len(), 4);
        assert!(FaceDataset::load_manifest(dir.path().join("m2.csv"), None, 4).is_err());
        assert!(FaceDataset::load_manifest(dir.path().join("m2.csv"), Some(3), 4).is_err());

        std::fs::write(dir.path().join("m3.csv"), "file,label\nx.ppm,1\n").unwrap();
        let err = FaceDataset::load_manifest(dir.path().join("m3.csv"), Some(0), 0).unwrap_err();
        assert!(err.to_string().contains("path"), "{err}");
    }

    #[test]
    fn evaluate_self_recognition_on_exact_corpus() {
        let c = corpus();
        let all: Vec<usize> = (0..c.dataset.len()).collect();
        for method in [RecognitionMethod::QadmmColor, RecognitionMethod::RadmmColor, RecognitionMethod::RadmmGray] {
            let e = evaluate(&c.dataset, &all, &all, method, 4, (0.01, 0.01, 4), 3, 0.0).unwrap();
            assert_eq!(e.predictions.len(), all.len());
            assert!((0.0..=1.0).contains(&e.accuracy));
            assert!(e.training_residual.is_finite());
        }
    }
}
