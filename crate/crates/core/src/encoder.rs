//! Random-projection encoder mapping feature vectors into hyperspace.
//!
//! A basis holds `D` random Gaussian base hypervectors (the rows of a `D×n`
//! matrix) and `D` uniform phase offsets. Encoding is
//! `h_i = tanh(F·B_i + b_i)` or the forward-only `cos(F·B_i + b_i)·sin(F·B_i)`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{check_len, Error, Result};

/// Relative singular-value cutoff below which the base counts as rank deficient.
pub const PINV_RCOND: f64 = 1e-10;

/// Clamp margin applied before `artanh` in [`BackpropMode::PinvTarget`].
pub const ARTANH_EPS: f64 = 1e-6;

const BASIS_MAGIC: &[u8; 4] = b"SHDB";
const BASIS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `cos(F·B_i + b_i)·sin(F·B_i)`; cannot be back-propagated.
    SinCos,
    #[default]
    Tanh,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::SinCos => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::SinCos),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackpropMode {
    /// Exact derivative of the tanh encoding: `Bᵀ·(g ⊙ (1 − h²))`.
    #[default]
    ChainRule,
    /// Inverts the activation and applies the pseudoinverse of the base to
    /// the displacement `−g` in hyperspace.
    PinvTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Real,
    Bipolar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypervector {
    values: Vec<f64>,
    form: Form,
}

impl Hypervector {
    pub fn real(values: Vec<f64>) -> Self {
        Self {
            values,
            form: Form::Real,
        }
    }

    /// Wraps a vector whose entries are all ±1.
    pub fn bipolar(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "bipolar hypervector entry {v} is not ±1"
            )));
        }
        Ok(Self {
            values,
            form: Form::Bipolar,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Entry-wise sign. Positive entries map to `+1`, zero and negative
    /// entries to `−1`.
    pub fn binarize(&self) -> Hypervector {
        Hypervector {
            values: self
                .values
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { -1.0 })
                .collect(),
            form: Form::Bipolar,
        }
    }

    pub fn scaled(&self, factor: f64) -> Hypervector {
        Hypervector {
            values: self.values.iter().map(|v| v * factor).collect(),
            form: Form::Real,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two equal-length vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len(), "cosine similarity operands")?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    cosine(&a.values, &b.values)
}

/// Bipolar hypervector stored one bit per dimension (`1` for `+1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBipolar {
    dim: usize,
    words: Vec<u64>,
}

impl PackedBipolar {
    pub fn pack(h: &Hypervector) -> Result<Self> {
        if h.form != Form::Bipolar {
            return Err(Error::InvalidArgument(
                "only bipolar hypervectors can be packed".into(),
            ));
        }
        let mut words = vec![0u64; h.len().div_ceil(64)];
        for (i, &v) in h.values.iter().enumerate() {
            if v > 0.0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(Self { dim: h.len(), words })
    }

    pub fn unpack(&self) -> Hypervector {
        let values = (0..self.dim)
            .map(|i| {
                if self.words[i / 64] >> (i % 64) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Hypervector {
            values,
            form: Form::Bipolar,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cosine similarity via Hamming distance: `(D − 2·hamming) / D`.
    pub fn similarity(&self, other: &PackedBipolar) -> Result<f64> {
        check_len(self.dim, other.dim, "packed similarity operands")?;
        if self.dim == 0 {
            return Err(Error::ZeroNorm);
        }
        let hamming: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        let d = self.dim as f64;
        Ok((d - 2.0 * f64::from(hamming)) / d)
    }
}

/// Random projection basis. Immutable once built apart from the
/// pseudoinverse cache, which is filled at most once.
pub struct EncoderBasis {
    base: DMatrix<f64>,
    phases: Vec<f64>,
    activation: Activation,
    seed: u64,
    sigma: f64,
    pinv: Mutex<Option<Arc<DMatrix<f64>>>>,
    pinv_computations: AtomicUsize,
}

impl fmt::Debug for EncoderBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncoderBasis")
            .field("input_dim", &self.input_dim())
            .field("dim", &self.dim())
            .field("activation", &self.activation)
            .field("seed", &self.seed)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl Clone for EncoderBasis {
    fn clone(&self) -> Self {
        let cached = self.pinv.lock().unwrap().clone();
        Self {
            base: self.base.clone(),
            phases: self.phases.clone(),
            activation: self.activation,
            seed: self.seed,
            sigma: self.sigma,
            pinv: Mutex::new(cached),
            pinv_computations: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for EncoderBasis {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
            && self.phases == other.phases
            && self.activation == other.activation
            && self.seed == other.seed
            && self.sigma.to_bits() == other.sigma.to_bits()
    }
}

impl EncoderBasis {
    /// Draws a `dim × input_dim` standard-normal base and uniform `[0, 2π)`
    /// phases from `seed`.
    pub fn new(input_dim: usize, dim: usize, activation: Activation, seed: u64) -> Result<Self> {
        Self::with_bandwidth(input_dim, dim, activation, seed, 1.0)
    }

    /// As [`EncoderBasis::new`] with base entries divided by the kernel
    /// bandwidth `sigma`.
    pub fn with_bandwidth(
        input_dim: usize,
        dim: usize,
        activation: Activation,
        seed: u64,
        sigma: f64,
    ) -> Result<Self> {
        if input_dim == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".into(),
            ));
        }
        if dim < input_dim {
            return Err(Error::InvalidArgument(format!(
                "hyperspace dimension {dim} is smaller than input dimension {input_dim}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {sigma}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base = DMatrix::zeros(dim, input_dim);
        for i in 0..dim {
            for j in 0..input_dim {
                let z: f64 = rng.sample(StandardNormal);
                base[(i, j)] = z / sigma;
            }
        }
        let phases = (0..dim).map(|_| rng.random::<f64>() * TAU).collect();
        Ok(Self {
            base,
            phases,
            activation,
            seed,
            sigma,
            pinv: Mutex::new(None),
            pinv_computations: AtomicUsize::new(0),
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(base: DMatrix<f64>, phases: Vec<f64>, activation: Activation) -> Self {
        Self {
            base,
            phases,
            activation,
            seed: 0,
            sigma: 1.0,
            pinv: Mutex::new(None),
            pinv_computations: AtomicUsize::new(0),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.base.ncols()
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `D × n` base matrix; row `i` is the base hypervector `B_i`.
    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    fn project(&self, f: &[f64]) -> Result<DVector<f64>> {
        check_len(self.input_dim(), f.len(), "feature vector")?;
        if let Some(v) = f.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature {v}")));
        }
        Ok(&self.base * DVector::from_column_slice(f))
    }

    /// Real-form encoding of `f`.
    pub fn encode(&self, f: &[f64]) -> Result<Hypervector> {
        let proj = self.project(f)?;
        let values = match self.activation {
            Activation::Tanh => proj
                .iter()
                .zip(&self.phases)
                .map(|(p, b)| (p + b).tanh())
                .collect(),
            Activation::SinCos => proj
                .iter()
                .zip(&self.phases)
                .map(|(p, b)| (p + b).cos() * p.sin())
                .collect(),
        };
        Ok(Hypervector::real(values))
    }

    /// Moore-Penrose pseudoinverse (`n × D`) of the base, computed through a
    /// thin SVD on first use and cached afterwards.
    pub fn pseudoinverse(&self) -> Result<Arc<DMatrix<f64>>> {
        let mut slot = self.pinv.lock().unwrap();
        if let Some(p) = slot.as_ref() {
            return Ok(Arc::clone(p));
        }
        self.pinv_computations.fetch_add(1, Ordering::Relaxed);
        let pinv = Arc::new(pseudoinverse_svd(&self.base)?);
        *slot = Some(Arc::clone(&pinv));
        Ok(pinv)
    }

    /// How many times the pseudoinverse has actually been computed.
    pub fn pinv_computations(&self) -> usize {
        self.pinv_computations.load(Ordering::Relaxed)
    }

    /// Maps a hyperspace gradient `grad_h` taken at the encoding `h` back to
    /// feature space.
    ///
    /// In [`BackpropMode::PinvTarget`] the target `h − grad_h` and `h` are
    /// clamped to `[−1+ε, 1−ε]`, passed through `artanh`, and the difference
    /// is mapped by the pseudoinverse. The result is returned negated so both
    /// modes follow the gradient sign convention.
    pub fn backproject(&self, grad_h: &[f64], h: &Hypervector, mode: BackpropMode) -> Result<Vec<f64>> {
        if self.activation == Activation::SinCos {
            return Err(Error::ForwardOnly("backproject"));
        }
        check_len(self.dim(), grad_h.len(), "hyperspace gradient")?;
        check_len(self.dim(), h.len(), "hypervector")?;
        match mode {
            BackpropMode::ChainRule => {
                let local = DVector::from_iterator(
                    self.dim(),
                    grad_h
                        .iter()
                        .zip(&h.values)
                        .map(|(g, hv)| g * (1.0 - hv * hv)),
                );
                Ok(self.base.tr_mul(&local).as_slice().to_vec())
            }
            BackpropMode::PinvTarget => {
                let pinv = self.pseudoinverse()?;
                let lo = -1.0 + ARTANH_EPS;
                let hi = 1.0 - ARTANH_EPS;
                let delta = DVector::from_iterator(
                    self.dim(),
                    grad_h.iter().zip(&h.values).map(|(g, hv)| {
                        let target = (hv - g).clamp(lo, hi);
                        target.atanh() - hv.clamp(lo, hi).atanh()
                    }),
                );
                Ok((-(&*pinv * delta)).as_slice().to_vec())
            }
        }
    }

    /// Random-Fourier-feature estimate of the Gaussian kernel
    /// `exp(−‖x−y‖²/(2σ²))` using `z(x)_i = √(2/D)·cos(B_i·x + b_i)`.
    pub fn kernel_estimate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let px = self.project(x)?;
        let py = self.project(y)?;
        let acc: f64 = px
            .iter()
            .zip(py.iter())
            .zip(&self.phases)
            .map(|((a, b), phase)| (a + phase).cos() * (b + phase).cos())
            .sum();
        Ok(2.0 * acc / self.dim() as f64)
    }

    /// Serializes the generating parameters only; the base is regenerated on
    /// load.
    ///
    /// Layout: `"SHDB"`, `u32` version, `u64 n`, `u64 D`, `u8` activation
    /// (0 tanh, 1 sin-cos), `u64` seed, `f64` bandwidth.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(BASIS_MAGIC, BASIS_VERSION);
        enc.u64(self.input_dim() as u64)
            .u64(self.dim() as u64)
            .u8(self.activation.tag())
            .u64(self.seed)
            .f64(self.sigma);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, BASIS_MAGIC, BASIS_VERSION)?;
        let n = dec.usize()?;
        let d = dec.usize()?;
        let activation = Activation::from_tag(dec.u8()?)?;
        let seed = dec.u64()?;
        let sigma = dec.f64()?;
        dec.finish()?;
        Self::with_bandwidth(n, d, activation, seed, sigma)
    }
}

fn pseudoinverse_svd(base: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = base.clone().svd(true, true);
    let s = &svd.singular_values;
    let largest = s.max();
    let smallest = s.min();
    if !(largest > 0.0) || smallest <= PINV_RCOND * largest {
        return Err(Error::RankDeficient { smallest, largest });
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    // pinv = V · diag(1/s) · Uᵀ
    let mut v_scaled = v_t.transpose();
    for (j, sv) in s.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(1.0 / sv);
    }
    Ok(v_scaled * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    fn random_bipolar(rng: &mut ChaCha8Rng, d: usize) -> Hypervector {
        Hypervector::bipolar(
            (0..d)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn new_basis_shapes_and_errors() {
        let b = EncoderBasis::new(100, 4000, Activation::Tanh, 7).unwrap();
        assert_eq!(b.base().shape(), (4000, 100));
        assert_eq!(b.phases().len(), 4000);
        assert!(b.phases().iter().all(|p| (0.0..TAU).contains(p)));
        assert!(EncoderBasis::new(4, 4, Activation::Tanh, 0).is_ok());
        assert!(EncoderBasis::new(5, 4, Activation::Tanh, 0).is_err());
        assert!(EncoderBasis::new(0, 4, Activation::Tanh, 0).is_err());
        assert!(EncoderBasis::new(1, 0, Activation::Tanh, 0).is_err());
    }

    #[test]
    fn same_seed_same_basis() {
        let a = EncoderBasis::new(16, 256, Activation::Tanh, 42).unwrap();
        let b = EncoderBasis::new(16, 256, Activation::Tanh, 42).unwrap();
        assert_eq!(a, b);
        let c = EncoderBasis::new(16, 256, Activation::Tanh, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_input_encodings() {
        let b = EncoderBasis::new(8, 500, Activation::Tanh, 1).unwrap();
        let h = b.encode(&[0.0; 8]).unwrap();
        for (hv, phase) in h.values().iter().zip(b.phases()) {
            assert_eq!(*hv, phase.tanh());
            assert!(*hv > 0.0);
        }
        let s = EncoderBasis::new(8, 500, Activation::SinCos, 1).unwrap();
        assert!(s.encode(&[0.0; 8]).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn encode_matches_direct_dot_products() {
        let b = EncoderBasis::new(8, 1000, Activation::Tanh, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_vec(&mut rng, 8);
        let h = b.encode(&f).unwrap();
        for i in 0..1000 {
            let mut acc = 0.0;
            for j in 0..8 {
                acc += f[j] * b.base()[(i, j)];
            }
            let expected = (acc + b.phases()[i]).tanh();
            assert!((h.values()[i] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let b = EncoderBasis::new(8, 64, Activation::Tanh, 3).unwrap();
        assert!(matches!(b.encode(&[0.0; 7]), Err(Error::Shape { .. })));
    }

    #[test]
    fn binarize_rules() {
        let h = Hypervector::real(vec![0.3, -0.2, 0.0]);
        assert_eq!(h.binarize().values(), &[1.0, -1.0, -1.0]);
        let pos = Hypervector::real(vec![0.1, 2.0, 1e-300]);
        assert!(pos.binarize().values().iter().all(|v| *v == 1.0));
        let once = h.binarize();
        assert_eq!(once.binarize(), once);
    }

    #[test]
    fn cosine_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Hypervector::real(random_vec(&mut rng, 64));
        assert!((cosine_similarity(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        let neg = h.scaled(-1.0);
        assert!((cosine_similarity(&h, &neg).unwrap() + 1.0).abs() < 1e-12);
        let zero = Hypervector::real(vec![0.0; 64]);
        assert!(matches!(cosine_similarity(&h, &zero), Err(Error::ZeroNorm)));
    }

    #[test]
    fn independent_bipolar_vectors_are_nearly_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let a = random_bipolar(&mut rng, 10_000);
            let b = random_bipolar(&mut rng, 10_000);
            worst = worst.max(cosine_similarity(&a, &b).unwrap().abs());
        }
        // P(|δ| ≥ 0.05) at D=10⁴ is ~5e-7 per pair.
        assert!(worst < 0.05, "worst {worst}");
    }

    #[test]
    fn packed_similarity_matches_unpacked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [1, 63, 64, 65, 1000] {
            let a = random_bipolar(&mut rng, d);
            let b = random_bipolar(&mut rng, d);
            let pa = PackedBipolar::pack(&a).unwrap();
            let pb = PackedBipolar::pack(&b).unwrap();
            assert_eq!(pa.unpack(), a);
            let packed = pa.similarity(&pb).unwrap();
            let plain = cosine_similarity(&a, &b).unwrap();
            assert!((packed - plain).abs() <= 1e-12);
        }
        assert!(PackedBipolar::pack(&Hypervector::real(vec![1.0])).is_err());
    }

    #[test]
    fn pseudoinverse_identity_and_cache() {
        let b = EncoderBasis::new(20, 400, Activation::Tanh, 8).unwrap();
        let p = b.pseudoinverse().unwrap();
        let prod = &*p * b.base();
        let dev = (prod - DMatrix::<f64>::identity(20, 20)).abs().max();
        assert!(dev <= 1e-6, "{dev}");
        let again = b.pseudoinverse().unwrap();
        assert!(Arc::ptr_eq(&p, &again));
        assert_eq!(b.pinv_computations(), 1);
    }

    #[test]
    fn pseudoinverse_of_orthonormal_square_is_transpose() {
        let b = EncoderBasis::new(6, 6, Activation::Tanh, 4).unwrap();
        let q = b.base().clone().qr().q();
        let ortho = EncoderBasis::from_parts(q.clone(), vec![0.0; 6], Activation::Tanh);
        let p = ortho.pseudoinverse().unwrap();
        assert!((&*p - q.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn rank_deficient_base_is_rejected() {
        let mut base = DMatrix::from_element(10, 3, 1.0);
        base[(0, 0)] = 2.0;
        let b = EncoderBasis::from_parts(base, vec![0.0; 10], Activation::Tanh);
        assert!(matches!(b.pseudoinverse(), Err(Error::RankDeficient { .. })));
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let (n, d) = (6, 50);
        let b = EncoderBasis::new(n, d, Activation::Tanh, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = random_vec(&mut rng, n).iter().map(|v| v * 0.3).collect::<Vec<_>>();
        let g = random_vec(&mut rng, d);
        let loss = |x: &[f64]| dot(&g, b.encode(x).unwrap().values());
        let step = 1e-6;
        let fd: Vec<f64> = (0..n)
            .map(|j| {
                let mut up = f.clone();
                let mut dn = f.clone();
                up[j] += step;
                dn[j] -= step;
                (loss(&up) - loss(&dn)) / (2.0 * step)
            })
            .collect();
        let h = b.encode(&f).unwrap();
        let analytic = b.backproject(&g, &h, BackpropMode::ChainRule).unwrap();
        assert!(rel_err(&analytic, &fd) < 1e-4);
    }

    #[test]
    fn zero_gradient_backprojects_to_zero() {
        let b = EncoderBasis::new(4, 40, Activation::Tanh, 1).unwrap();
        let h = b.encode(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        for mode in [BackpropMode::ChainRule, BackpropMode::PinvTarget] {
            let out = b.backproject(&[0.0; 40], &h, mode).unwrap();
            assert!(out.iter().all(|v| v.abs() < 1e-12), "{mode:?}");
        }
    }

    #[test]
    fn pinv_target_recovers_feature_displacement() {
        let (n, d) = (5, 60);
        let b = EncoderBasis::new(n, d, Activation::Tanh, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let f: Vec<f64> = random_vec(&mut rng, n).iter().map(|v| v * 0.2).collect();
        let df: Vec<f64> = random_vec(&mut rng, n).iter().map(|v| v * 1e-3).collect();
        let moved: Vec<f64> = f.iter().zip(&df).map(|(a, b)| a + b).collect();
        let h = b.encode(&f).unwrap();
        let h2 = b.encode(&moved).unwrap();
        // gradient = −displacement
        let grad: Vec<f64> = h.values().iter().zip(h2.values()).map(|(a, b)| a - b).collect();
        let out = b.backproject(&grad, &h, BackpropMode::PinvTarget).unwrap();
        for (o, want) in out.iter().zip(&df) {
            assert!((-o - want).abs() < 1e-6, "{o} vs {want}");
        }
    }

    #[test]
    fn sincos_is_forward_only() {
        let b = EncoderBasis::new(3, 30, Activation::SinCos, 0).unwrap();
        let h = b.encode(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            b.backproject(&[0.0; 30], &h, BackpropMode::ChainRule),
            Err(Error::ForwardOnly(_))
        ));
    }

    #[test]
    fn kernel_estimate_self_and_far() {
        let b = EncoderBasis::new(8, 10_000, Activation::Tanh, 31).unwrap();
        let x = [0.1; 8];
        assert!((b.kernel_estimate(&x, &x).unwrap() - 1.0).abs() < 0.02);
        // distance 10σ along one axis
        let mut y = x;
        y[0] += 10.0;
        assert!(b.kernel_estimate(&x, &y).unwrap().abs() < 0.05);
    }

    #[test]
    fn basis_round_trip_is_bit_exact() {
        let b = EncoderBasis::with_bandwidth(12, 300, Activation::SinCos, 99, 0.5).unwrap();
        let back = EncoderBasis::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(b, back);
        let mut bad = b.to_bytes();
        bad[0] = b'X';
        assert!(EncoderBasis::from_bytes(&bad).is_err());
        let short = &b.to_bytes()[..20];
        assert!(matches!(EncoderBasis::from_bytes(short), Err(Error::Truncated { .. })));
    }
}
