//! Pixel-space augmentation of 32x32 RGB images stored channel-major (R plane, G plane,
//! B plane, each row-major).

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real, Rng};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_DIMS: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;

const PLANE: usize = IMAGE_SIDE * IMAGE_SIDE;

#[inline]
fn at(c: usize, r: usize, col: usize) -> usize {
    c * PLANE + r * IMAGE_SIDE + col
}

fn check(img: &[impl Copy]) -> Result<()> {
    if img.len() != IMAGE_DIMS {
        return Err(Error::InvalidArgument(format!(
            "expected a {IMAGE_SIDE}x{IMAGE_SIDE}x{IMAGE_CHANNELS} image ({IMAGE_DIMS} values), got {}",
            img.len()
        )));
    }
    Ok(())
}

/// Mirror every row left to right.
pub fn flip_h<T: Real>(img: &[T]) -> Result<Vec<T>> {
    check(img)?;
    let mut out = vec![T::zero(); IMAGE_DIMS];
    for c in 0..IMAGE_CHANNELS {
        for r in 0..IMAGE_SIDE {
            for col in 0..IMAGE_SIDE {
                out[at(c, r, col)] = img[at(c, r, IMAGE_SIDE - 1 - col)];
            }
        }
    }
    Ok(out)
}

/// Rotate by `degrees` (counter-clockwise) about the image center with nearest-neighbour
/// sampling; pixels that map outside the source are zero.
pub fn rotate<T: Real>(img: &[T], degrees: f64) -> Result<Vec<T>> {
    check(img)?;
    let (s, c) = degrees.to_radians().sin_cos();
    let center = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    let mut out = vec![T::zero(); IMAGE_DIMS];
    for r in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            // inverse map: destination (x, y) comes from rotating by -degrees
            let x = col as f64 - center;
            let y = center - r as f64;
            let sx = c * x + s * y;
            let sy = -s * x + c * y;
            let src_col = (sx + center).round();
            let src_row = (center - sy).round();
            if src_col < 0.0 || src_row < 0.0 {
                continue;
            }
            let (src_row, src_col) = (src_row as usize, src_col as usize);
            if src_row >= IMAGE_SIDE || src_col >= IMAGE_SIDE {
                continue;
            }
            for ch in 0..IMAGE_CHANNELS {
                out[at(ch, r, col)] = img[at(ch, src_row, src_col)];
            }
        }
    }
    Ok(out)
}

/// Translate by `dx` columns right and `dy` rows down, zero padding the exposed border.
pub fn shift<T: Real>(img: &[T], dx: i64, dy: i64) -> Result<Vec<T>> {
    check(img)?;
    let side = IMAGE_SIDE as i64;
    let mut out = vec![T::zero(); IMAGE_DIMS];
    for r in 0..side {
        let sr = r - dy;
        if !(0..side).contains(&sr) {
            continue;
        }
        for col in 0..side {
            let sc = col - dx;
            if !(0..side).contains(&sc) {
                continue;
            }
            for ch in 0..IMAGE_CHANNELS {
                out[at(ch, r as usize, col as usize)] = img[at(ch, sr as usize, sc as usize)];
            }
        }
    }
    Ok(out)
}

/// Which transforms are enabled and their magnitudes. Each enabled op is applied
/// independently with probability `probability`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOps {
    pub flip: bool,
    pub rotate: bool,
    pub shift: bool,
    pub max_degrees: f64,
    pub max_shift: i64,
    pub probability: f64,
}

impl Default for AugmentOps {
    fn default() -> Self {
        AugmentOps {
            flip: true,
            rotate: true,
            shift: true,
            max_degrees: 15.0,
            max_shift: 4,
            probability: 0.5,
        }
    }
}

fn augment_one<T: Real>(img: &[T], ops: &AugmentOps, rng: &mut Rng) -> Result<Vec<T>> {
    let mut out = img.to_vec();
    if ops.flip && rng.bernoulli(ops.probability) {
        out = flip_h(&out)?;
    }
    if ops.rotate && rng.bernoulli(ops.probability) {
        let deg = rng.uniform_range(-ops.max_degrees, ops.max_degrees);
        out = rotate(&out, deg)?;
    }
    if ops.shift && rng.bernoulli(ops.probability) {
        let dx = rng.int_range(-ops.max_shift, ops.max_shift);
        let dy = rng.int_range(-ops.max_shift, ops.max_shift);
        out = shift(&out, dx, dy)?;
    }
    Ok(out)
}

/// Augments every row of `batch`. Row `i` draws from `rng.stream(offset + i)`, so the
/// result for an example depends only on the seed and its global index.
pub fn augment<T: Real>(
    batch: &Matrix<T>,
    rng: &Rng,
    offset: u64,
    ops: &AugmentOps,
) -> Result<Matrix<T>> {
    if batch.cols() != IMAGE_DIMS {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs {IMAGE_DIMS}-dim image rows, got {}",
            batch.cols()
        )));
    }
    let mut data = Vec::with_capacity(batch.len());
    for (i, row) in batch.row_iter().enumerate() {
        let mut stream = rng.stream(offset + i as u64);
        data.extend(augment_one(row, ops, &mut stream)?);
    }
    Matrix::from_vec(batch.rows(), IMAGE_DIMS, data)
}

/// Like [`augment`], but row `i` draws from `rng.stream(indices[i])`, for batches gathered
/// from a shuffled dataset.
pub fn augment_indexed<T: Real>(
    batch: &Matrix<T>,
    rng: &Rng,
    indices: &[u64],
    ops: &AugmentOps,
) -> Result<Matrix<T>> {
    if batch.cols() != IMAGE_DIMS {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs {IMAGE_DIMS}-dim image rows, got {}",
            batch.cols()
        )));
    }
    if indices.len() != batch.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} stream indices for {} rows",
            indices.len(),
            batch.rows()
        )));
    }
    let mut data = Vec::with_capacity(batch.len());
    for (row, &index) in batch.row_iter().zip(indices) {
        data.extend(augment_one(row, ops, &mut rng.stream(index))?);
    }
    Matrix::from_vec(batch.rows(), IMAGE_DIMS, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asymmetric() -> Vec<f64> {
        (0..IMAGE_DIMS)
            .map(|i| (i * 7 % 251) as f64 / 250.0)
            .collect()
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = asymmetric();
        assert_eq!(flip_h(&flip_h(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn flip_reverses_columns() {
        let img = asymmetric();
        let f = flip_h(&img).unwrap();
        for c in 0..3 {
            for r in 0..32 {
                for col in 0..32 {
                    assert_eq!(
                        f[c * 1024 + r * 32 + col],
                        img[c * 1024 + r * 32 + 31 - col]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_ops_are_identity() {
        let img = asymmetric();
        assert_eq!(shift(&img, 0, 0).unwrap(), img);
        assert_eq!(rotate(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn shift_zero_pads() {
        let img = vec![1.0f64; IMAGE_DIMS];
        let s = shift(&img, 3, -2).unwrap();
        for r in 0..32 {
            for col in 0..32 {
                let expect = if col >= 3 && r < 30 { 1.0 } else { 0.0 };
                assert_eq!(s[r * 32 + col], expect, "({r},{col})");
            }
        }
        let img = asymmetric();
        assert_eq!(shift(&img, 2, 1).unwrap()[at(1, 5, 9)], img[at(1, 4, 7)]);
    }

    #[test]
    fn rotation_quarter_turn_matches_index_map() {
        let img = asymmetric();
        let r = rotate(&img, 90.0).unwrap();
        // counter-clockwise: destination (r, c) reads source (c, 31 - r)
        for row in 0..32 {
            for col in 0..32 {
                assert_eq!(r[at(2, row, col)], img[at(2, col, 31 - row)]);
            }
        }
        let full = rotate(&img, 360.0).unwrap();
        assert_eq!(full, img);
    }

    #[test]
    fn augment_preserves_shape_and_is_reproducible() {
        let mut rng = Rng::new(3);
        let batch = Matrix::<f32>::from_fn(6, IMAGE_DIMS, |_, _| rng.uniform() as f32);
        let key = Rng::new(11);
        let a = augment(&batch, &key, 0, &AugmentOps::default()).unwrap();
        let b = augment(&batch, &key, 0, &AugmentOps::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), batch.shape());
        // the same example at the same global index is augmented identically
        let tail = augment(&batch.select_rows(&[4, 5]), &key, 4, &AugmentOps::default()).unwrap();
        assert_eq!(tail.row(0), a.row(4));
        let off = AugmentOps {
            probability: 0.0,
            ..AugmentOps::default()
        };
        assert_eq!(augment(&batch, &key, 0, &off).unwrap(), batch);
    }

    #[test]
    fn indexed_matches_offset_streams() {
        let mut rng = Rng::new(5);
        let batch = Matrix::<f64>::from_fn(4, IMAGE_DIMS, |_, _| rng.uniform());
        let key = Rng::new(2);
        let full = augment(&batch, &key, 10, &AugmentOps::default()).unwrap();
        let picked = augment_indexed(
            &batch.select_rows(&[3, 1]),
            &key,
            &[13, 11],
            &AugmentOps::default(),
        )
        .unwrap();
        assert_eq!(picked.row(0), full.row(3));
        assert_eq!(picked.row(1), full.row(1));
        assert!(augment_indexed(&batch, &key, &[0], &AugmentOps::default()).is_err());
    }

    #[test]
    fn rejects_non_images() {
        assert!(flip_h(&[0.0f64; 10]).is_err());
        assert!(augment(
            &Matrix::<f64>::zeros(2, 28),
            &Rng::new(0),
            0,
            &AugmentOps::default()
        )
        .is_err());
    }
}
