//! Sequence-length alignment of paired activations and token flattening.
//!
//! All strategies are linear maps along the token axis applied to every
//! feature channel independently. Resampling uses the align-corners
//! convention: output position `i` of `L_t` samples source position
//! `i · (L_s − 1) / (L_t − 1)`, so endpoints map onto endpoints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignStrategy {
    /// Average every sequence down to a single token.
    Mean,
    /// Linear resampling along the flat token axis.
    Interp1d,
    /// Bilinear resampling of the patch grid; a leading class token is
    /// carried through untouched.
    #[default]
    Interp2d,
}

impl AlignStrategy {
    pub const ALL: [AlignStrategy; 3] = [AlignStrategy::Mean, AlignStrategy::Interp1d, AlignStrategy::Interp2d];

    pub fn name(self) -> &'static str {
        match self {
            AlignStrategy::Mean => "mean",
            AlignStrategy::Interp1d => "interp1d",
            AlignStrategy::Interp2d => "interp2d",
        }
    }
}

impl fmt::Display for AlignStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlignStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AlignStrategy::Mean),
            "interp1d" => Ok(AlignStrategy::Interp1d),
            "interp2d" => Ok(AlignStrategy::Interp2d),
            other => Err(Error::InvalidArgument(format!(
                "unknown sequence alignment `{other}` (valid: mean, interp1d, interp2d)"
            ))),
        }
    }
}

/// Token layout of a length-`L` sequence seen as a square patch grid:
/// `L = g²` or `L = g² + 1` with a leading class token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub side: usize,
    pub class_token: bool,
}

impl GridLayout {
    pub fn of_len(len: usize) -> Option<GridLayout> {
        if len == 0 {
            return None;
        }
        let side = isqrt(len);
        if side * side == len {
            return Some(GridLayout {
                side,
                class_token: false,
            });
        }
        let side = isqrt(len - 1);
        (side >= 1 && side * side == len - 1).then_some(GridLayout {
            side,
            class_token: true,
        })
    }

    pub fn len(self) -> usize {
        self.side * self.side + self.class_token as usize
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Bracketing indices and weight for align-corners resampling of
/// `len_src → len_dst`.
fn sample_points(len_src: usize, len_dst: usize) -> Vec<(usize, usize, f64)> {
    (0..len_dst)
        .map(|i| {
            if len_src == 1 || len_dst == 1 {
                return (0, 0, 0.0);
            }
            if len_src == len_dst {
                return (i, i, 0.0);
            }
            let p = i as f64 * (len_src - 1) as f64 / (len_dst - 1) as f64;
            let lo = (p.floor() as usize).min(len_src - 2);
            let t = p - lo as f64;
            (lo, lo + 1, t)
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        a + t * (b - a)
    }
}

fn resample_1d(h: &Tensor3, l_target: usize) -> Tensor3 {
    let (n, l, d) = h.shape();
    if l == l_target {
        return h.clone();
    }
    let pts = sample_points(l, l_target);
    let mut out = Tensor3::zeros(n, l_target, d);
    for s in 0..n {
        for (i, &(lo, hi, t)) in pts.iter().enumerate() {
            let (a, b) = (h.token(s, lo), h.token(s, hi));
            for (o, (&x, &y)) in out.token_mut(s, i).iter_mut().zip(a.iter().zip(b)) {
                *o = lerp(x, y, t);
            }
        }
    }
    out
}

fn resample_2d(h: &Tensor3, src: GridLayout, dst: GridLayout) -> Tensor3 {
    let (n, _, d) = h.shape();
    if src == dst {
        return h.clone();
    }
    let off_src = src.class_token as usize;
    let off_dst = dst.class_token as usize;
    let pts = sample_points(src.side, dst.side);
    let mut out = Tensor3::zeros(n, dst.len(), d);
    for s in 0..n {
        if src.class_token {
            out.token_mut(s, 0).copy_from_slice(h.token(s, 0));
        }
        for (r, &(r0, r1, tr)) in pts.iter().enumerate() {
            for (c, &(c0, c1, tc)) in pts.iter().enumerate() {
                let at = |rr: usize, cc: usize| h.token(s, off_src + rr * src.side + cc);
                let (p00, p01, p10, p11) = (at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1));
                let o = out.token_mut(s, off_dst + r * dst.side + c);
                for f in 0..d {
                    let top = lerp(p00[f], p01[f], tc);
                    let bot = lerp(p10[f], p11[f], tc);
                    o[f] = lerp(top, bot, tr);
                }
            }
        }
    }
    out
}

fn mean_tokens(h: &Tensor3) -> Tensor3 {
    let (n, l, d) = h.shape();
    let mut out = Tensor3::zeros(n, 1, d);
    for s in 0..n {
        let o = out.token_mut(s, 0);
        for t in 0..l {
            for (x, y) in o.iter_mut().zip(h.token(s, t)) {
                *x += y;
            }
        }
        o.iter_mut().for_each(|x| *x /= l as f64);
    }
    out
}

/// Resamples `h` (`N × L_src × d`) along the token axis.
///
/// `Mean` ignores `l_target` and returns a single averaged token.
pub fn align_sequence(h: &Tensor3, l_target: usize, strategy: AlignStrategy) -> Result<Tensor3> {
    if l_target < 1 {
        return Err(Error::InvalidArgument("target sequence length must be >= 1".into()));
    }
    if h.shape().1 == 0 {
        return Err(Error::InvalidArgument("source sequence is empty".into()));
    }
    match strategy {
        AlignStrategy::Mean => Ok(mean_tokens(h)),
        AlignStrategy::Interp1d => Ok(resample_1d(h, l_target)),
        AlignStrategy::Interp2d => {
            let src = grid_of(h.len())?;
            let dst = grid_of(l_target)?;
            if src.class_token != dst.class_token {
                return Err(Error::InvalidArgument(format!(
                    "interp2d: class token on only one side (lengths {} and {l_target})",
                    h.len()
                )));
            }
            Ok(resample_2d(h, src, dst))
        }
    }
}

fn grid_of(len: usize) -> Result<GridLayout> {
    GridLayout::of_len(len)
        .ok_or_else(|| Error::InvalidArgument(format!("interp2d: length {len} is neither g² nor g²+1")))
}

/// Brings paired sequences to a common length: the shorter side is
/// resampled up to the longer one, and `Mean` averages both.
pub fn align_pair(a: &Tensor3, b: &Tensor3, strategy: AlignStrategy) -> Result<(Tensor3, Tensor3)> {
    if a.n() != b.n() {
        return Err(Error::Dimension(format!(
            "paired activations hold {} and {} samples",
            a.n(),
            b.n()
        )));
    }
    match strategy {
        AlignStrategy::Mean => Ok((mean_tokens(a), mean_tokens(b))),
        _ if a.len() == b.len() => Ok((a.clone(), b.clone())),
        _ if a.len() < b.len() => Ok((align_sequence(a, b.len(), strategy)?, b.clone())),
        _ => Ok((a.clone(), align_sequence(b, a.len(), strategy)?)),
    }
}

/// `N × L × d → (N·L) × d`, row `n·L + l` holding token `(n, l)`.
pub fn flatten_tokens(h: &Tensor3) -> Matrix {
    h.to_matrix()
}

pub fn unflatten_tokens(m: Matrix, n: usize, l: usize) -> Result<Tensor3> {
    Tensor3::from_matrix(m, n, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;

    fn seq(n: usize, l: usize, d: usize, seed: u64) -> Tensor3 {
        Tensor3::from_matrix(gaussian_matrix(n * l, d, seed), n, l).unwrap()
    }

    #[test]
    fn constant_sequences_stay_constant() {
        for strategy in AlignStrategy::ALL {
            for (ls, lt) in [(5usize, 10usize), (10, 5), (4, 9), (9, 4), (2, 2)] {
                let h = Tensor3::from_fn(2, ls, 3, |_, _, f| 0.7 + f as f64);
                let out = align_sequence(&h, lt, strategy).unwrap();
                for s in 0..out.n() {
                    for t in 0..out.len() {
                        for f in 0..3 {
                            assert!((out.get(s, t, f) - (0.7 + f as f64)).abs() <= 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn identity_at_equal_length() {
        let h = seq(3, 5, 4, 1);
        assert_eq!(align_sequence(&h, 5, AlignStrategy::Interp1d).unwrap(), h);
        assert_eq!(align_sequence(&h, 5, AlignStrategy::Interp2d).unwrap(), h);
    }

    #[test]
    fn interp1d_hand_values() {
        let h = Tensor3::from_vec(1, 2, 1, vec![0.0, 2.0]).unwrap();
        let out = align_sequence(&h, 3, AlignStrategy::Interp1d).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn interp1d_endpoints() {
        let h = seq(2, 7, 3, 4);
        let out = align_sequence(&h, 12, AlignStrategy::Interp1d).unwrap();
        for s in 0..2 {
            assert_eq!(out.token(s, 0), h.token(s, 0));
            assert_eq!(out.token(s, 11), h.token(s, 6));
        }
    }

    #[test]
    fn interp2d_center_value() {
        let h = Tensor3::from_vec(1, 4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = align_sequence(&h, 9, AlignStrategy::Interp2d).unwrap();
        // bilinear midpoint of the 2x2 grid
        assert!((out.get(0, 4, 0) - 1.5).abs() <= 1e-12);
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(0, 8, 0), 3.0);
        assert!((out.get(0, 1, 0) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn interp2d_class_token_passthrough() {
        let h = seq(2, 5, 3, 8);
        let out = align_sequence(&h, 10, AlignStrategy::Interp2d).unwrap();
        assert_eq!(out.len(), 10);
        for s in 0..2 {
            assert_eq!(out.token(s, 0), h.token(s, 0));
        }
    }

    #[test]
    fn interp2d_rejects_bad_lengths() {
        let h = seq(1, 5, 2, 0);
        assert!(align_sequence(&h, 9, AlignStrategy::Interp2d).is_err()); // cls on one side
        assert!(align_sequence(&seq(1, 3, 2, 0), 4, AlignStrategy::Interp2d).is_err());
        assert!(align_sequence(&h, 0, AlignStrategy::Interp1d).is_err());
    }

    #[test]
    fn pair_upsamples_shorter_side() {
        let a = seq(2, 5, 3, 1);
        let b = seq(2, 10, 4, 2);
        let (aa, bb) = align_pair(&a, &b, AlignStrategy::Interp2d).unwrap();
        assert_eq!(aa.len(), 10);
        assert_eq!(bb, b);
        let (bb2, aa2) = align_pair(&b, &a, AlignStrategy::Interp2d).unwrap();
        assert_eq!((bb2, aa2), (b.clone(), aa));
        let (ma, mb) = align_pair(&a, &b, AlignStrategy::Mean).unwrap();
        assert_eq!((ma.len(), mb.len()), (1, 1));
    }

    #[test]
    fn flatten_index_arithmetic() {
        let h = seq(2, 3, 4, 5);
        let m = flatten_tokens(&h);
        assert_eq!(m.rows(), 6);
        assert_eq!(m.row(4), h.token(1, 1));
        assert_eq!(unflatten_tokens(m, 2, 3).unwrap(), h);
        let one = seq(1, 1, 3, 6);
        assert_eq!(flatten_tokens(&one).row(0), one.token(0, 0));
    }
}
