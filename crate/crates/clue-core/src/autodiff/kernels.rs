//! Row-major matrix product kernels shared by the tape and the plain
//! (no-gradient) model forward paths.
//!
//! Every output element is a sequential dot product or a sequential
//! accumulation over a fixed index order, so results are bitwise
//! deterministic whether or not rayon splits the row loop.

use rayon::prelude::*;

/// Rough flop threshold below which threading overhead dominates.
const PAR_FLOPS: usize = 1 << 17;

/// C[m×n] = A[m×k] · B[k×n], overwriting C.
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |c_row: &mut [f64], a_row: &[f64]| {
        c_row.fill(0.0);
        for (l, &a_il) in a_row.iter().enumerate() {
            let b_row = &b[l * n..(l + 1) * n];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += a_il * bv;
            }
        }
    };
    if 2 * m * k * n >= PAR_FLOPS && m > 1 {
        out.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(c_row, a_row)| row(c_row, a_row));
    } else {
        for (c_row, a_row) in out.chunks_mut(n).zip(a.chunks(k)) {
            row(c_row, a_row);
        }
    }
}

/// C[m×n] += A[m×k] · B[n×k]ᵀ.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row = |c_row: &mut [f64], a_row: &[f64]| {
        for (j, c) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *c += acc;
        }
    };
    if 2 * m * k * n >= PAR_FLOPS && m > 1 {
        out.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(c_row, a_row)| row(c_row, a_row));
    } else {
        for (c_row, a_row) in out.chunks_mut(n).zip(a.chunks(k)) {
            row(c_row, a_row);
        }
    }
}

/// C[m×n] += A[k×m]ᵀ · B[k×n].
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if 2 * m * k * n >= PAR_FLOPS && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(j, c_row)| {
            for i in 0..k {
                let a_ij = a[i * m + j];
                if a_ij != 0.0 {
                    let b_row = &b[i * n..(i + 1) * n];
                    for (c, &bv) in c_row.iter_mut().zip(b_row) {
                        *c += a_ij * bv;
                    }
                }
            }
        });
    } else {
        for (i, b_row) in b.chunks(n).enumerate() {
            let a_row = &a[i * m..(i + 1) * m];
            for (j, &a_ij) in a_row.iter().enumerate() {
                if a_ij != 0.0 {
                    let c_row = &mut out[j * n..(j + 1) * n];
                    for (c, &bv) in c_row.iter_mut().zip(b_row) {
                        *c += a_ij * bv;
                    }
                }
            }
        }
    }
}
