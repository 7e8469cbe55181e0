//! Transformer encoder with a multilingual prediction head and a
//! cross-lingual (word-exchange) prediction head, both scoring the
//! vocabulary against the tied embedding table.

mod checkpoint;
mod encoder;
mod heads;
mod params;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use encoder::{encoder_backward, encoder_forward, forward_encoder, EncoderState};
pub use heads::{
    cp_backward, cp_distribution, cp_forward, log_softmax, mp_backward, mp_distribution,
    mp_forward, softmax, HeadState,
};
pub use params::{Dense, EncoderLayer, Gradients, LayerNorm, ModelParams};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub m_max: usize,
    pub init_std: f64,
    /// Start every head projection (mp and cp) at the identity with zero
    /// bias instead of a random draw. Encoder and embeddings are still random.
    pub identity_heads: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale architecture: h=64, two layers, four heads, identity heads.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
            m_max: 64,
            init_std: 0.02,
            identity_heads: true,
            seed: 0,
        }
    }

    pub fn ff_dim(&self) -> usize {
        self.hidden * self.ff_mult
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Zero encoder layers are allowed: the encoder is then the identity on
    /// `e[x_i] + P[i]`.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ff_mult", self.ff_mult),
            ("m_max", self.m_max),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config(format!("invalid init_std {}", self.init_std)));
        }
        Ok(())
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `d/dx x·Φ(x) = Φ(x) + x·φ(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Φ(x) by composite Simpson quadrature of the normal density on [0, x].
    fn normal_cdf_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let pdf = |t: f64| FRAC_1_SQRT_2PI * (-0.5 * t * t).exp();
        let mut sum = pdf(0.0) + pdf(x);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * pdf(k as f64 * h);
        }
        0.5 + sum * h / 3.0
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        let expected = normal_cdf_quadrature(1.0);
        assert_abs_diff_eq!(gelu(1.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(gelu(1.0), 0.841_344_746, epsilon = 1e-9);
        for x in [0.5, 2.0, -3.0] {
            assert_abs_diff_eq!(gelu(x) - gelu(-x), x, epsilon = 1e-15);
        }
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for x in [-2.5, -0.3, 0.0, 0.7, 3.1] {
            let eps = 1e-5;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(gelu_grad(x), fd, epsilon = 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::desk(100);
        assert!(c.validate().is_ok());
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 4;
        c.layers = 0;
        assert!(c.validate().is_ok());
    }
}

#[cfg(test)]
mod forward_tests {
    use super::*;
    use crate::corpus::{TokenizedPair, CLS, PAD, SEP};
    use crate::exchange::{build_exchange_matrix, AlignmentSet};
    use ndarray::{array, Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn config(layers: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            hidden: 16,
            layers,
            heads: 2,
            ff_mult: 4,
            m_max: 12,
            init_std: 0.3,
            identity_heads: false,
            seed: 5,
        }
    }

    fn tok(pad_to: usize) -> TokenizedPair {
        TokenizedPair {
            ids: vec![CLS, 5, 6, 7, SEP, 8, 9, SEP],
            source_span: 1..4,
            target_span: 5..7,
            pad_len: 0,
        }
        .padded_to(pad_to)
        .unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_simple_fn(n, || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn empty_stack_is_embedding_plus_position() {
        let cfg = config(0);
        let params = ModelParams::init(&cfg);
        let t = tok(12);
        let h = forward_encoder(&t, &params, &cfg).unwrap();
        assert_eq!(h.dim(), (12, 16));
        for (i, &id) in t.ids.iter().enumerate() {
            let expected = &params.embedding.row(id as usize) + &params.position.row(i);
            assert_eq!(h.row(i), expected);
        }
    }

    #[test]
    fn shape_determinism_and_errors() {
        let cfg = config(2);
        let a = ModelParams::init(&cfg);
        let b = ModelParams::init(&cfg);
        assert_eq!(a, b);
        let h1 = forward_encoder(&tok(12), &a, &cfg).unwrap();
        let h2 = forward_encoder(&tok(12), &b, &cfg).unwrap();
        assert_eq!(h1.dim(), (12, 16));
        assert!(h1
            .iter()
            .zip(h2.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));

        let mut bad = tok(12);
        bad.ids[2] = 20;
        assert!(matches!(
            forward_encoder(&bad, &a, &cfg),
            Err(Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn padding_does_not_change_real_positions() {
        let cfg = config(2);
        let params = ModelParams::init(&cfg);
        let short = forward_encoder(&tok(8), &params, &cfg).unwrap();
        let long = forward_encoder(&tok(12), &params, &cfg).unwrap();
        for i in 0..8 {
            let a = mp_distribution(short.row(i), &params);
            let b = mp_distribution(long.row(i), &params);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-9);
            }
            for (x, y) in short.row(i).iter().zip(long.row(i).iter()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn zero_output_gives_uniform() {
        let cfg = config(0);
        let mut params = ModelParams::init(&cfg);
        params.mp_output = Dense::zeros(16, 16);
        let p = mp_distribution(random_vec(16, 1).view(), &params);
        for v in p.iter() {
            assert!((v - 1.0 / 20.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_set_tied_scores() {
        let cfg = ModelConfig {
            vocab_size: 3,
            hidden: 2,
            layers: 0,
            heads: 1,
            ff_mult: 1,
            m_max: 4,
            init_std: 0.1,
            identity_heads: false,
            seed: 0,
        };
        let mut params = ModelParams::init(&cfg);
        params.embedding = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        // zero output weights with bias (2, 0) pins linear(H'_i) = (2, 0)
        params.mp_output = Dense {
            weight: Array2::zeros((2, 2)),
            bias: array![2.0, 0.0],
        };
        let p = mp_distribution(array![0.3, -0.7].view(), &params);
        let e2 = 2f64.exp();
        let z = 2.0 * e2 + 1.0;
        let expected = [e2 / z, 1.0 / z, e2 / z];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.46831).abs() < 1e-5 && (p[1] - 0.06337).abs() < 1e-5);
    }

    #[test]
    fn cross_lingual_head_reads_partner_only() {
        let cfg = config(1);
        let params = ModelParams::init(&cfg);
        let h = forward_encoder(&tok(12), &params, &cfg).unwrap();
        let a = build_exchange_matrix(&AlignmentSet::new(vec![(2, 6)]).unwrap(), 12).unwrap();
        let base = cp_distribution(h.view(), &a, 2, &params).unwrap();
        assert!((base.sum() - 1.0).abs() < 1e-12);

        let mut own = h.clone();
        own.row_mut(2).mapv_inplace(|v| v + 5.0);
        assert_eq!(cp_distribution(own.view(), &a, 2, &params).unwrap(), base);

        let mut partner = h.clone();
        partner.row_mut(6).mapv_inplace(|v| v + 5.0);
        let moved = cp_distribution(partner.view(), &a, 2, &params).unwrap();
        assert!(moved
            .iter()
            .zip(base.iter())
            .any(|(x, y)| (x - y).abs() > 1e-6));

        assert!(matches!(
            cp_distribution(h.view(), &a, 3, &params),
            Err(Error::Unaligned(3))
        ));
    }

    #[test]
    fn forced_parameters_make_heads_agree() {
        let cfg = config(1);
        let mut params = ModelParams::init(&cfg);
        params.cp_exchange = Dense::identity(16);
        params.cp_transform = params.mp_transform.clone();
        params.cp_output = params.mp_output.clone();
        let h = forward_encoder(&tok(12), &params, &cfg).unwrap();
        let a =
            build_exchange_matrix(&AlignmentSet::new(vec![(1, 5), (3, 6)]).unwrap(), 12).unwrap();
        for (i, j) in [(1, 5), (5, 1), (3, 6), (6, 3)] {
            let cp = cp_distribution(h.view(), &a, i, &params).unwrap();
            let mp = mp_distribution(h.row(j), &params);
            for (x, y) in cp.iter().zip(mp.iter()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn masked_keys_get_no_attention_even_when_padded() {
        let cfg = config(1);
        let params = ModelParams::init(&cfg);
        let mut t = tok(12);
        // a different pad token id must not matter either
        for id in t.ids[8..].iter_mut() {
            *id = PAD;
        }
        let h = forward_encoder(&t, &params, &cfg).unwrap();
        assert!(h.iter().all(|v| v.is_finite()));
    }
}
