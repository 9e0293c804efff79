use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{gaussian_matrix, Matrix};
use crate::rng::derive;
use crate::seqalign::{align_sequence, AlignStrategy};
use crate::tensor::Tensor3;

/// Gaussian blobs around seeded class centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub n_classes: usize,
    pub d_raw: usize,
    pub centers: Matrix,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

impl SyntheticTask {
    /// Centers are standard normal draws scaled by `center_scale`.
    pub fn generate(n_classes: usize, d_raw: usize, center_scale: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        let centers = gaussian_matrix(n_classes, d_raw, derive(seed, 0)).scale(center_scale);
        Self::new(centers, noise_sigma, seed)
    }

    pub fn new(centers: Matrix, noise_sigma: f64, seed: u64) -> Result<Self> {
        if centers.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a task needs at least 2 classes, got {}",
                centers.rows()
            )));
        }
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be > 0, got {noise_sigma}"
            )));
        }
        centers.ensure_finite("class centers")?;
        Ok(SyntheticTask {
            n_classes: centers.rows(),
            d_raw: centers.cols(),
            centers,
            noise_sigma,
            seed,
        })
    }
}

/// Raw feature vectors with labels; row `i` is sample id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub raw: Matrix,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, ids: &[usize]) -> Samples {
        let d = self.raw.cols();
        let raw = Matrix::from_fn(ids.len(), d, |r, c| self.raw[(ids[r], c)]);
        Samples {
            raw,
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// `n_per_class` samples of every class, class-major. Each split draws its
/// noise from its own sub-seed.
pub fn sample_split(task: &SyntheticTask, n_per_class: usize, split: Split) -> Result<Samples> {
    if n_per_class < 1 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    let n = task.n_classes * n_per_class;
    let noise = gaussian_matrix(n, task.d_raw, derive(task.seed, split.stream()));
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_class).collect();
    let raw = Matrix::from_fn(n, task.d_raw, |r, c| {
        task.centers[(labels[r], c)] + task.noise_sigma * noise[(r, c)]
    });
    Ok(Samples { raw, labels })
}

/// Raw vectors read as a `grid × grid` patch grid, optionally preceded by
/// a class token equal to the patch mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub grid: usize,
    pub class_token: bool,
}

impl TokenLayout {
    pub fn len(&self) -> usize {
        self.grid * self.grid + self.class_token as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_dim(&self, d_raw: usize) -> Result<usize> {
        let patches = self.grid * self.grid;
        if patches == 0 || !d_raw.is_multiple_of(patches) {
            return dim_err(format!(
                "d_raw = {d_raw} does not split into a {0}x{0} patch grid",
                self.grid
            ));
        }
        Ok(d_raw / patches)
    }

    pub fn tokens(&self, raw: &Matrix) -> Result<Tensor3> {
        let dp = self.patch_dim(raw.cols())?;
        let patches = self.grid * self.grid;
        let off = self.class_token as usize;
        let mut out = Tensor3::zeros(raw.rows(), self.len(), dp);
        for s in 0..raw.rows() {
            let row = raw.row(s);
            for p in 0..patches {
                out.token_mut(s, off + p).copy_from_slice(&row[p * dp..(p + 1) * dp]);
            }
            if self.class_token {
                let cls = out.token_mut(s, 0);
                for p in 0..patches {
                    for (f, x) in cls.iter_mut().enumerate() {
                        *x += row[p * dp + f];
                    }
                }
                cls.iter_mut().for_each(|x| *x /= patches as f64);
            }
        }
        Ok(out)
    }
}

/// Classification inputs for the model with input layout `layout`.
pub fn make_dataset(
    task: &SyntheticTask,
    n_per_class: usize,
    split: Split,
    layout: &TokenLayout,
) -> Result<(Tensor3, Vec<usize>)> {
    let s = sample_split(task, n_per_class, split)?;
    Ok((layout.tokens(&s.raw)?, s.labels))
}

/// A model's input pipeline: raw patch grid resized bilinearly to the model's
/// own grid, then every token projected to the model width.
#[derive(Debug, Clone, PartialEq)]
pub struct Renderer {
    pub source: TokenLayout,
    pub grid: usize,
    /// `d_patch × width`.
    pub proj: Matrix,
}

impl Renderer {
    pub fn new(source: TokenLayout, grid: usize, proj: Matrix) -> Result<Self> {
        if grid == 0 {
            return Err(Error::InvalidArgument("renderer grid must be >= 1".into()));
        }
        Ok(Renderer { source, grid, proj })
    }

    pub fn width(&self) -> usize {
        self.proj.cols()
    }

    pub fn seq_len(&self) -> usize {
        self.grid * self.grid + self.source.class_token as usize
    }

    pub fn render(&self, raw: &Matrix) -> Result<Tensor3> {
        let toks = self.source.tokens(raw)?;
        if toks.dim() != self.proj.rows() {
            return dim_err(format!(
                "patch dimension {} does not match projection {}x{}",
                toks.dim(),
                self.proj.rows(),
                self.proj.cols()
            ));
        }
        let resized = align_sequence(&toks, self.seq_len(), AlignStrategy::Interp2d)?;
        let (n, l, _) = resized.shape();
        Tensor3::from_matrix(resized.into_matrix().matmul(&self.proj)?, n, l)
    }
}
