//! Straight-line reimplementation of the N=0 objective with plain loops,
//! used as an oracle for the library's loss and for the three roles of the
//! tied embedding table.

use weam::corpus::{TokenizedPair, CLS, MASK, SEP};
use weam::exchange::{build_exchange_matrix, AlignmentSet};
use weam::model::{Dense, ModelConfig, ModelParams};
use weam::training::{compute_loss, loss_and_gradients, Corruption, MaskedEntry, MaskedInput};

type Mat = Vec<Vec<f64>>;

/// Maclaurin series; accurate to ~1e-14 for |x| < 4.
fn erf_series(x: f64) -> f64 {
    assert!(x.abs() < 4.0, "series erf used outside its range: {x}");
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf_series(x / 2f64.sqrt()))
}

fn to_mat(a: &ndarray::Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `W·x + b` with `W[out][in]` in the column-vector convention.
fn affine(w_in_out: &Dense, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = w_in_out.weight.dim();
    (0..n_out)
        .map(|o| {
            w_in_out.bias[o]
                + (0..n_in)
                    .map(|i| w_in_out.weight[[i, o]] * x[i])
                    .sum::<f64>()
        })
        .collect()
}

fn neg_log_prob(query: &[f64], table: &Mat, label: usize) -> f64 {
    let logits: Vec<f64> = table
        .iter()
        .map(|e| e.iter().zip(query).map(|(a, b)| a * b).sum())
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    -(logits[label].exp() / z).ln()
}

struct Tables {
    input: Mat,
    mp: Mat,
    cp: Mat,
}

fn oracle_loss(params: &ModelParams, tables: &Tables, entry: &MaskedEntry, lambda: f64) -> f64 {
    let ids = &entry.masked.input.ids;
    // H_i = e[x_i] + P[i] with no encoder layers
    let h: Mat = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            tables.input[id as usize]
                .iter()
                .zip(params.position.row(i))
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();
    let mut l_mp = 0.0;
    let mut l_cp = 0.0;
    for &(pos, label) in &entry.masked.labels {
        let hidden: Vec<f64> = affine(&params.mp_transform, &h[pos])
            .into_iter()
            .map(gelu)
            .collect();
        l_mp += neg_log_prob(
            &affine(&params.mp_output, &hidden),
            &tables.mp,
            label as usize,
        );

        // H' = Aᵀ·H: row pos of H' is Σ_r A[r][pos]·H[r]
        let m = ids.len();
        let exchanged: Vec<f64> = (0..h[0].len())
            .map(|c| (0..m).map(|r| entry.exchange.get(r, pos) * h[r][c]).sum())
            .collect();
        if !(0..m).any(|r| entry.exchange.get(r, pos) == 1.0) {
            continue;
        }
        let tilde = affine(&params.cp_exchange, &exchanged);
        let hidden: Vec<f64> = affine(&params.cp_transform, &tilde)
            .into_iter()
            .map(gelu)
            .collect();
        l_cp += neg_log_prob(
            &affine(&params.cp_output, &hidden),
            &tables.cp,
            label as usize,
        );
    }
    l_mp + lambda * l_cp
}

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: 8,
        hidden: 4,
        layers: 0,
        heads: 1,
        ff_mult: 1,
        m_max: 8,
        init_std: 0.1,
        identity_heads: false,
        seed: 0,
    }
}

/// Deterministic, hand-set parameter values.
fn hand_set_params() -> ModelParams {
    let mut params = ModelParams::init(&config());
    for (t, (_, mut tensor)) in params.tensors_mut().into_iter().enumerate() {
        for (k, v) in tensor.iter_mut().enumerate() {
            *v = 0.6 * ((t * 31 + k * 7) as f64 * 0.37).sin();
        }
    }
    params
}

/// `[CLS] 5 6 [SEP] 7 5 [SEP] [PAD]`, source word 6 masked and aligned to
/// target position 4, plus one unaligned masked word.
fn entry() -> MaskedEntry {
    let tok = TokenizedPair {
        ids: vec![CLS, 5, 6, SEP, 7, 5, SEP, 0],
        source_span: 1..3,
        target_span: 4..6,
        pad_len: 1,
    };
    let mut input = tok.clone();
    input.ids[2] = MASK;
    input.ids[5] = MASK;
    let a = build_exchange_matrix(&AlignmentSet::new(vec![(2, 4)]).unwrap(), 8).unwrap();
    MaskedEntry {
        masked: MaskedInput {
            input,
            labels: vec![(2, 6), (5, 5)],
            corruptions: vec![Corruption::Mask, Corruption::Mask],
        },
        exchange: a,
    }
}

fn tied(params: &ModelParams) -> Tables {
    let e = to_mat(&params.embedding);
    Tables {
        input: e.clone(),
        mp: e.clone(),
        cp: e,
    }
}

#[test]
fn library_loss_matches_straight_line_oracle() {
    let params = hand_set_params();
    let entry = entry();
    for lambda in [0.0, 1.0, 0.35] {
        let lib = compute_loss(&entry, &params, &config(), lambda).unwrap();
        let oracle = oracle_loss(&params, &tied(&params), &entry, lambda);
        assert!(
            (lib.total - oracle).abs() < 1e-10,
            "λ={lambda}: {} vs {oracle}",
            lib.total
        );
        assert_eq!(lib.masked_count, 2);
        assert_eq!(lib.aligned_masked_count, 1);
        assert!((lib.total - (lib.l_mp + lambda * lib.l_cp)).abs() <= 1e-12);
    }
}

#[test]
fn embedding_gradient_has_three_pathways() {
    let params = hand_set_params();
    let entry = entry();
    let (_, grads) =
        loss_and_gradients(std::slice::from_ref(&entry), &params, &config(), 1.0).unwrap();

    let eps = 1e-5;
    let base = tied(&params);
    let (v, h) = params.embedding.dim();
    let mut roles = vec![vec![0.0; v * h]; 3];
    for (role, out) in roles.iter_mut().enumerate() {
        for r in 0..v {
            for c in 0..h {
                let bump = |delta: f64| {
                    let mut t = Tables {
                        input: base.input.clone(),
                        mp: base.mp.clone(),
                        cp: base.cp.clone(),
                    };
                    let table = match role {
                        0 => &mut t.input,
                        1 => &mut t.mp,
                        _ => &mut t.cp,
                    };
                    table[r][c] += delta;
                    oracle_loss(&params, &t, &entry, 1.0)
                };
                out[r * h + c] = (bump(eps) - bump(-eps)) / (2.0 * eps);
            }
        }
    }
    for (role, g) in roles.iter().enumerate() {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-3, "pathway {role} contributes nothing");
    }
    let analytic = grads.embedding.as_slice().unwrap();
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..v * h {
        let sum = roles[0][k] + roles[1][k] + roles[2][k];
        diff += (sum - analytic[k]).powi(2);
        scale += analytic[k].powi(2);
    }
    assert!(diff.sqrt() / scale.sqrt() < 1e-6);
}

#[test]
fn empty_alignment_means_no_cross_lingual_term() {
    let params = hand_set_params();
    let mut entry = entry();
    entry.exchange = build_exchange_matrix(&AlignmentSet::default(), 8).unwrap();
    let l = compute_loss(&entry, &params, &config(), 1.0).unwrap();
    assert_eq!(l.l_cp, 0.0);
    assert_eq!(l.total, l.l_mp);
    assert_eq!(l.aligned_masked_count, 0);
}
