//! Scalar-decay state space duality kernels.
//!
//! One SSM call maps inputs `x` (T × P) to outputs `y` (T × P) through a
//! hidden state `h` (N × P):
//!
//! ```text
//!   h_t = a_t · h_{t-1} + b_t ⊗ x_t
//!   y_t = c_tᵀ · h_t
//! ```
//!
//! The same map is a multiplication by the lower-triangular semiseparable
//! matrix `M = F ∘ (C Bᵀ)` where `F[j][i] = a_j ⋯ a_{i+1}`. Three
//! realizations are provided and must agree:
//!
//! * [`ssm_recurrence`]: left-to-right scan, O(T·N·P).
//! * [`ssd_matrix_form`]: quadratic form, O(T²·(N+P)).
//! * [`chunked_scan`]: quadratic inside blocks of `chunk` steps, state
//!   carried between blocks, O(T·chunk·(N+P) + T·N·P).
//!
//! All arithmetic is `f64`.

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_STATE_DIM: usize = 16;
pub const DEFAULT_CHUNK: usize = 16;

/// Inputs of one scalar-decay SSM call. All matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdParams {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
    state_dim: usize,
    channels: usize,
}

impl SsdParams {
    /// `b` and `c` are `T × state_dim`, `x` is `T × channels`, `T = a.len()`.
    /// Every decay must lie in `(0, 1]`.
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        x: Vec<f64>,
        state_dim: usize,
        channels: usize,
    ) -> Result<Self> {
        let len = a.len();
        if len == 0 {
            return Err(Error::InvalidValue("empty SSM sequence".into()));
        }
        if state_dim == 0 || channels == 0 {
            return Err(Error::InvalidValue(
                "state dimension and channel width must be positive".into(),
            ));
        }
        check_dim("ssd b", len * state_dim, b.len())?;
        check_dim("ssd c", len * state_dim, c.len())?;
        check_dim("ssd x", len * channels, x.len())?;
        if let Some((t, v)) = a
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
        {
            return Err(Error::InvalidValue(format!(
                "decay a[{t}] = {v} outside (0, 1]"
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            x,
            state_dim,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b_row(&self, t: usize) -> &[f64] {
        &self.b[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn c_row(&self, t: usize) -> &[f64] {
        &self.c[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x[t * self.channels..(t + 1) * self.channels]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Replaces the inputs, keeping decays and projections.
    pub fn with_x(&self, x: Vec<f64>) -> Result<Self> {
        check_dim("ssd x", self.len() * self.channels, x.len())?;
        Ok(Self { x, ..self.clone() })
    }
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(p, q)| p * q).sum()
}

/// Left-to-right recurrence. `h0` is the `N × P` initial state (row-major),
/// zero when `None`.
pub fn ssm_recurrence(params: &SsdParams, h0: Option<&[f64]>) -> Result<Vec<f64>> {
    let (n, p) = (params.state_dim, params.channels);
    let mut h = match h0 {
        Some(init) => {
            check_dim("initial state", n * p, init.len())?;
            init.to_vec()
        }
        None => vec![0.0; n * p],
    };
    let mut y = vec![0.0; params.len() * p];
    for t in 0..params.len() {
        let a = params.a[t];
        let b = params.b_row(t);
        let c = params.c_row(t);
        let x = params.x_row(t);
        for (k, &bk) in b.iter().enumerate() {
            let row = &mut h[k * p..(k + 1) * p];
            for (hv, &xv) in row.iter_mut().zip(x) {
                *hv = a * *hv + bk * xv;
            }
        }
        let out = &mut y[t * p..(t + 1) * p];
        for (k, &ck) in c.iter().enumerate() {
            let row = &h[k * p..(k + 1) * p];
            for (o, &hv) in out.iter_mut().zip(row) {
                *o += ck * hv;
            }
        }
    }
    Ok(y)
}

/// Lower-triangular matrix of cumulative decay products.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayMatrix {
    len: usize,
    f: Vec<f64>,
}

impl DecayMatrix {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.f[row * self.len + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.f.chunks(self.len)
    }

    /// `y = (F ∘ C Bᵀ) x` with this matrix in place of the decays of `params`.
    pub fn apply(&self, params: &SsdParams) -> Result<Vec<f64>> {
        check_dim("decay matrix", params.len(), self.len)?;
        let p = params.channels;
        let mut y = vec![0.0; self.len * p];
        for (j, row) in self.rows().enumerate() {
            let c = params.c_row(j);
            let out = &mut y[j * p..(j + 1) * p];
            for (i, &f) in row.iter().enumerate().take(j + 1) {
                let w = f * dot(c, params.b_row(i));
                for (o, &xv) in out.iter_mut().zip(params.x_row(i)) {
                    *o += w * xv;
                }
            }
        }
        Ok(y)
    }
}

/// `F[j][i] = a_j ⋯ a_{i+1}` for `i < j`, 1 on the diagonal, 0 above it.
/// `a[0]` never enters the matrix. Zero decays are accepted here.
pub fn build_decay_matrix(a: &[f64]) -> Result<DecayMatrix> {
    let len = a.len();
    if len == 0 {
        return Err(Error::InvalidValue("empty decay sequence".into()));
    }
    let mut f = vec![0.0; len * len];
    for j in 0..len {
        f[j * len + j] = 1.0;
        if j > 0 {
            for i in 0..j {
                f[j * len + i] = a[j] * f[(j - 1) * len + i];
            }
        }
    }
    Ok(DecayMatrix { len, f })
}

/// Quadratic (matrix) realization. Builds decay rows on the fly so memory
/// stays O(T) while arithmetic matches [`DecayMatrix::apply`].
pub fn ssd_matrix_form(params: &SsdParams) -> Vec<f64> {
    let (len, p) = (params.len(), params.channels);
    let mut y = vec![0.0; len * p];
    let mut row = vec![0.0; len];
    for j in 0..len {
        let a = params.a[j];
        for v in row.iter_mut().take(j) {
            *v *= a;
        }
        row[j] = 1.0;
        let c = params.c_row(j);
        let out = &mut y[j * p..(j + 1) * p];
        for (i, &f) in row.iter().enumerate().take(j + 1) {
            let w = f * dot(c, params.b_row(i));
            for (o, &xv) in out.iter_mut().zip(params.x_row(i)) {
                *o += w * xv;
            }
        }
    }
    y
}

/// Blockwise realization: quadratic form inside each block plus the carried
/// state from previous blocks. The last block shrinks when `chunk ∤ T`.
pub fn chunked_scan(params: &SsdParams, chunk: usize) -> Result<Vec<f64>> {
    let len = params.len();
    if chunk == 0 || chunk > len {
        return Err(Error::InvalidValue(format!(
            "chunk size {chunk} must lie in 1..={len}"
        )));
    }
    let (n, p) = (params.state_dim, params.channels);
    let mut y = vec![0.0; len * p];
    let mut h = vec![0.0; n * p];
    let mut row = vec![0.0; chunk];
    let mut ch = vec![0.0; p];

    let mut start = 0;
    while start < len {
        let end = (start + chunk).min(len);
        let mut carry = 1.0;
        for j in start..end {
            let a = params.a[j];
            carry *= a;
            let local = j - start;
            for v in row.iter_mut().take(local) {
                *v *= a;
            }
            row[local] = 1.0;

            let c = params.c_row(j);
            ch.iter_mut().for_each(|v| *v = 0.0);
            for (k, &ck) in c.iter().enumerate() {
                for (acc, &hv) in ch.iter_mut().zip(&h[k * p..(k + 1) * p]) {
                    *acc += ck * hv;
                }
            }
            let out = &mut y[j * p..(j + 1) * p];
            for (o, &v) in out.iter_mut().zip(&ch) {
                *o = carry * v;
            }
            for (li, &f) in row.iter().enumerate().take(local + 1) {
                let i = start + li;
                let w = f * dot(c, params.b_row(i));
                for (o, &xv) in out.iter_mut().zip(params.x_row(i)) {
                    *o += w * xv;
                }
            }
        }
        // `row` now holds the decays from each step of the block to its end.
        for v in h.iter_mut() {
            *v *= carry;
        }
        for (li, &f) in row.iter().enumerate().take(end - start) {
            let i = start + li;
            let x = params.x_row(i);
            for (k, &bk) in params.b_row(i).iter().enumerate() {
                let w = f * bk;
                for (hv, &xv) in h[k * p..(k + 1) * p].iter_mut().zip(x) {
                    *hv += w * xv;
                }
            }
        }
        start = end;
    }
    Ok(y)
}

/// Zero-order-hold discretization of a scalar-decay continuous SSM.
/// Returns `(exp(a·dt), (exp(a·dt) − 1)/a · b)`, with `dt · b` at `a = 0`.
pub fn discretize_zoh(a_cont: f64, b_cont: &[f64], dt: f64) -> Result<(f64, Vec<f64>)> {
    if !a_cont.is_finite() || !dt.is_finite() || b_cont.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite ZOH input".into()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidValue(format!("ZOH step {dt} must be positive")));
    }
    let a_disc = (a_cont * dt).exp();
    let scale = if a_cont == 0.0 {
        dt
    } else {
        (a_cont * dt).exp_m1() / a_cont
    };
    Ok((a_disc, b_cont.iter().map(|b| scale * b).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, len: usize, n: usize, p: usize) -> SsdParams {
        let a = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
        let mut gen = |k: usize| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let b = gen(len * n);
        let c = gen(len * n);
        let x = gen(len * p);
        SsdParams::new(a, b, c, x, n, p).unwrap()
    }

    /// Direct evaluation of `y_t = Σ_{i≤t} c_t·b_i (a_t ⋯ a_{i+1}) x_i`.
    fn brute_force(params: &SsdParams) -> Vec<f64> {
        let (len, p) = (params.len(), params.channels());
        let mut y = vec![0.0; len * p];
        for t in 0..len {
            for i in 0..=t {
                let decay: f64 = (i + 1..=t).map(|k| params.a()[k]).product();
                let cb: f64 = params
                    .c_row(t)
                    .iter()
                    .zip(params.b_row(i))
                    .map(|(c, b)| c * b)
                    .sum();
                for ch in 0..p {
                    y[t * p + ch] += decay * cb * params.x_row(i)[ch];
                }
            }
        }
        y
    }

    fn assert_rel(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol * (1.0 + w.abs()), "{g} vs {w}");
        }
    }

    #[test]
    fn recurrence_single_step() {
        let p = SsdParams::new(vec![0.5], vec![1.0], vec![1.0], vec![2.0], 1, 1).unwrap();
        assert_eq!(ssm_recurrence(&p, None).unwrap(), vec![2.0]);
    }

    #[test]
    fn recurrence_two_steps_hand_unrolled() {
        let p = SsdParams::new(
            vec![1.0, 0.5],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            1,
            1,
        )
        .unwrap();
        assert_eq!(ssm_recurrence(&p, None).unwrap(), vec![1.0, 1.5]);
        assert_eq!(ssd_matrix_form(&p), vec![1.0, 1.5]);
        assert_eq!(chunked_scan(&p, 1).unwrap(), vec![1.0, 1.5]);
        assert_eq!(chunked_scan(&p, 2).unwrap(), vec![1.0, 1.5]);
    }

    #[test]
    fn recurrence_initial_state() {
        let p = SsdParams::new(vec![0.5], vec![0.0], vec![2.0], vec![0.0], 1, 1).unwrap();
        assert_eq!(ssm_recurrence(&p, Some(&[3.0])).unwrap(), vec![3.0]);
        assert!(matches!(
            ssm_recurrence(&p, Some(&[1.0, 2.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(SsdParams::new(vec![0.0], vec![1.0], vec![1.0], vec![1.0], 1, 1).is_err());
        assert!(SsdParams::new(vec![1.5], vec![1.0], vec![1.0], vec![1.0], 1, 1).is_err());
        assert!(SsdParams::new(vec![f64::NAN], vec![1.0], vec![1.0], vec![1.0], 1, 1).is_err());
        assert!(SsdParams::new(vec![0.5], vec![1.0, 2.0], vec![1.0], vec![1.0], 1, 1).is_err());
        assert!(SsdParams::new(vec![], vec![], vec![], vec![], 1, 1).is_err());
    }

    #[test]
    fn decay_matrix_case_table() {
        let f = build_decay_matrix(&[0.7, 0.3, 0.2]).unwrap();
        let want = [[1.0, 0.0, 0.0], [0.3, 1.0, 0.0], [0.2 * 0.3, 0.2, 1.0]];
        for (j, row) in want.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                assert_eq!(f.get(j, i), *v);
            }
        }
    }

    #[test]
    fn decay_matrix_extremes() {
        let ones = build_decay_matrix(&[1.0; 4]).unwrap();
        let zeros = build_decay_matrix(&[0.0; 4]).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert_eq!(ones.get(j, i), if i <= j { 1.0 } else { 0.0 });
                assert_eq!(zeros.get(j, i), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(build_decay_matrix(&[]).is_err());
    }

    #[test]
    fn identity_decay_is_diagonal_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(&mut rng, 6, 3, 2);
        let y = build_decay_matrix(&[0.0; 6]).unwrap().apply(&params).unwrap();
        for t in 0..6 {
            let cb: f64 = params
                .c_row(t)
                .iter()
                .zip(params.b_row(t))
                .map(|(c, b)| c * b)
                .sum();
            for ch in 0..2 {
                assert!((y[t * 2 + ch] - cb * params.x_row(t)[ch]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn materialized_matrix_matches_streamed_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_params(&mut rng, 20, 4, 3);
        let full = build_decay_matrix(params.a()).unwrap().apply(&params).unwrap();
        assert_eq!(full, ssd_matrix_form(&params));
    }

    #[test]
    fn realizations_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(len, n, p) in &[(32, 4, 1), (64, 8, 4), (96, 4, 2)] {
            let params = random_params(&mut rng, len, n, p);
            let oracle = brute_force(&params);
            assert_rel(&ssm_recurrence(&params, None).unwrap(), &oracle, 1e-9);
            assert_rel(&ssd_matrix_form(&params), &oracle, 1e-9);
            assert_rel(&chunked_scan(&params, 16).unwrap(), &oracle, 1e-9);
        }
    }

    #[test]
    fn chunk_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(&mut rng, 8, 2, 2);
        assert!(chunked_scan(&params, 0).is_err());
        assert!(chunked_scan(&params, 9).is_err());
        assert_eq!(chunked_scan(&params, 8).unwrap(), ssd_matrix_form(&params));
    }

    #[test]
    fn zoh_cases() {
        let (a, b) = discretize_zoh(0.0, &[1.0], 0.1).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(b, vec![0.1]);

        let (a, _) = discretize_zoh(-1.0, &[1.0], 1e-12).unwrap();
        assert!((a - 1.0).abs() < 1e-11);

        let (a, b) = discretize_zoh(-2.0, &[1.0, -3.0], 0.5).unwrap();
        let e = (-1.0f64).exp();
        assert!((a - e).abs() < 1e-15);
        assert!((b[0] - (e - 1.0) / -2.0).abs() < 1e-15);
        assert!((b[1] - (e - 1.0) / -2.0 * -3.0).abs() < 1e-15);

        assert!(discretize_zoh(-1.0, &[1.0], 0.0).is_err());
        assert!(discretize_zoh(f64::NAN, &[1.0], 0.1).is_err());
        assert!(discretize_zoh(-1.0, &[f64::INFINITY], 0.1).is_err());
    }

    #[test]
    fn decay_rows_shrink_with_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..30).map(|_| rng.gen_range(0.01..0.999)).collect();
        let f = build_decay_matrix(&a).unwrap();
        for i in 0..30 {
            for j in i + 1..30 {
                assert!(f.get(j, i).abs() <= f.get(j - 1, i).abs());
            }
        }
    }
}
