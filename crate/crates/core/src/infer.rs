//! Whole-sequence inference with fixed-length windows.
//!
//! The input is cut into consecutive non-overlapping windows of
//! `seq_len` frames. A final partial window of `r` frames is left-padded
//! to full length by repeating its own first frame; the network runs on
//! the padded window and only its last `r` output rows are kept. Every
//! input frame therefore yields exactly one output frame.

use crate::error::{check_dim, Error, Result};
use crate::model::{kinest_forward_raw, Matrix, Weights, OUTPUT_DIM};

/// `(start, len)` of each window over `frames` frames.
pub fn windows(frames: usize, seq_len: usize) -> Vec<(usize, usize)> {
    (0..frames)
        .step_by(seq_len.max(1))
        .map(|start| (start, seq_len.min(frames - start)))
        .collect()
}

pub fn infer(x: &Matrix, w: &Weights) -> Result<Matrix> {
    let config = w.config();
    check_dim("input columns", config.input_dim, x.cols())?;
    if x.rows() == 0 {
        return Err(Error::InvalidValue("empty input sequence".into()));
    }
    let l = config.seq_len;
    let mut out = Vec::with_capacity(x.rows() * OUTPUT_DIM);
    for (start, len) in windows(x.rows(), l) {
        let mut window = Vec::with_capacity(l * x.cols());
        for _ in len..l {
            window.extend_from_slice(x.row(start));
        }
        for r in start..start + len {
            window.extend_from_slice(x.row(r));
        }
        let y = kinest_forward_raw(&Matrix::from_vec(l, x.cols(), window)?, w)?;
        for r in l - len..l {
            out.extend_from_slice(y.row(r));
        }
    }
    Matrix::from_vec(x.rows(), OUTPUT_DIM, out)
}
