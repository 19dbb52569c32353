//! Distance and similarity kernels. Inputs are `f32`; all arithmetic is `f64`.

use crate::error::{Error, Result};

fn check_dims(u: &[f32], v: &[f32]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Squared Euclidean distance. Callers guarantee equal lengths.
///
/// Eight independent accumulators keep the dependency chain short; the
/// summation order is fixed, so the result is deterministic.
#[inline]
pub(crate) fn squared_l2(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0f64; 8];
    let uc = u.chunks_exact(8);
    let vc = v.chunks_exact(8);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for j in 0..8 {
            let d = a[j] as f64 - b[j] as f64;
            acc[j] += d * d;
        }
    }
    let mut tail = 0.0;
    for (a, b) in ur.iter().zip(vr) {
        let d = *a as f64 - *b as f64;
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum()
}

/// `‖u − v‖₂`.
pub fn euclidean(u: &[f32], v: &[f32]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(squared_l2(u, v).sqrt())
}

/// `u·v / (‖u‖·‖v‖)`.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    check_dims(u, v)?;
    let nu = dot(u, u);
    let nv = dot(v, v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot(u, v) / (nu.sqrt() * nv.sqrt()))
}
