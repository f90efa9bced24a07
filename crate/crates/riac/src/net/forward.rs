//! Tape-level forward pass: builds the full RIAC-Net graph for one image.

use super::params::{ConvP, LstmP, ModelParams};
use super::{ArchConfig, FormerMode};
use crate::error::Result;
use crate::tensor::{BnMode, Tape, Tensor, Var};
use rand::Rng;

/// Everything a trainer needs from one forward pass.
pub struct ForwardOutput {
    pub logits: Var,
    /// The sigmoid attention map `[S/2, S/2, 1]`.
    pub attention: Var,
    /// Batch statistics `(mean, var)` when BN normalized by them (train
    /// mode without running stats); `None` when running stats were used.
    pub bn_stats: Option<(Vec<f64>, Vec<f64>)>,
}

fn conv_relu(tape: &mut Tape, c: &ConvP<Var>, x: Var) -> Result<Var> {
    let y = tape.conv2d(x, c.w, c.b, c.spec.stride, c.spec.padding)?;
    Ok(tape.relu(y))
}

/// The four-branch inception block; every branch lands on `[S/2, S/2, c]`
/// and the results concatenate along channels to `[S/2, S/2, 4c]`.
pub fn stcf_forward(tape: &mut Tape, p: &ModelParams<Var>, x: Var) -> Result<Var> {
    let b1 = conv_relu(tape, &p.b1, x)?;
    let b2 = conv_relu(tape, &p.b2a, x)?;
    let b2 = conv_relu(tape, &p.b2b, b2)?;
    let b3 = conv_relu(tape, &p.b3a, x)?;
    let b3 = conv_relu(tape, &p.b3b, b3)?;
    let b3 = conv_relu(tape, &p.b3c, b3)?;
    let b4 = tape.maxpool2(x, 2)?;
    let b4 = conv_relu(tape, &p.b4, b4)?;
    tape.concat_channels(&[b1, b2, b3, b4])
}

/// Attention gate: A = sigmoid(f1(relu(f7(x) + f1(maxpool(x))))), applied
/// to the 1x1-projected average-pooled input. Returns `(psi, A)`.
pub fn attention_gate(tape: &mut Tape, p: &ModelParams<Var>, x: Var) -> Result<(Var, Var)> {
    let down = tape.conv2d(x, p.f7.w, p.f7.b, p.f7.spec.stride, p.f7.spec.padding)?;
    let pooled = tape.maxpool2(x, 2)?;
    let pooled = tape.conv2d(pooled, p.f1_pool.w, p.f1_pool.b, 1, 0)?;
    let summed = tape.add(down, pooled)?;
    let act = tape.relu(summed);
    let gate = tape.conv2d(act, p.f1_post.w, p.f1_post.b, 1, 0)?;
    let amap = tape.sigmoid(gate);
    let avg = tape.avgpool2(x)?;
    let skip = tape.conv2d(avg, p.proj.w, p.proj.b, 1, 0)?;
    let psi = tape.mul(skip, amap)?;
    Ok((psi, amap))
}

/// Attention-driven residual block: relu(psi + stcf(x)).
pub fn adrb_forward(tape: &mut Tape, p: &ModelParams<Var>, x: Var) -> Result<(Var, Var)> {
    let stcf = stcf_forward(tape, p, x)?;
    let (psi, amap) = attention_gate(tape, p, x)?;
    let summed = tape.add(psi, stcf)?;
    Ok((tape.relu(summed), amap))
}

/// Collapses the fused map into an `[T, 4c]` sequence matrix.
pub fn sequence_former(tape: &mut Tape, arch: &ArchConfig, feat: Var) -> Result<Var> {
    match arch.former {
        FormerMode::SpatialRows => tape.gap_width(feat),
        FormerMode::SingleStep => {
            let v = tape.gap_full(feat)?;
            tape.reshape(v, &[1, arch.fused_channels()])
        }
    }
}

/// One LSTM layer over per-step input vectors, zero initial state.
/// Returns the hidden state at every step.
pub fn lstm_layer(tape: &mut Tape, p: &LstmP<Var>, steps: &[Var]) -> Result<Vec<Var>> {
    let hdim = p.spec.hidden;
    let mut h = tape.leaf(Tensor::zeros(&[hdim]), false);
    let mut c = tape.leaf(Tensor::zeros(&[hdim]), false);
    let mut out = Vec::with_capacity(steps.len());
    for &x in steps {
        let z = tape.concat_vec(h, x)?;
        let lin = tape.matvec(p.w, z, p.b)?;
        let gi = tape.slice_vec(lin, 0, hdim)?;
        let gf = tape.slice_vec(lin, hdim, hdim)?;
        let gg = tape.slice_vec(lin, 2 * hdim, hdim)?;
        let go = tape.slice_vec(lin, 3 * hdim, hdim)?;
        let i = tape.sigmoid(gi);
        let f = tape.sigmoid(gf);
        let g = tape.tanh(gg);
        let o = tape.sigmoid(go);
        let keep = tape.mul(c, f)?;
        let write = tape.mul(g, i)?;
        c = tape.add(keep, write)?;
        let ct = tape.tanh(c);
        h = tape.mul(o, ct)?;
        out.push(h);
    }
    Ok(out)
}

/// Full network for one `[S, S, 3]` image: ADRB, sequence former,
/// BN -> LSTM x2 -> dropout -> dense. Softmax stays outside (the loss
/// fuses it; prediction applies [`softmax`] to the logits).
pub fn model_forward(
    tape: &mut Tape,
    p: &ModelParams<Var>,
    arch: &ArchConfig,
    x: Var,
    mode: BnMode,
    running: Option<&super::BnRunning>,
    rng: &mut impl Rng,
) -> Result<ForwardOutput> {
    let (feat, attention) = adrb_forward(tape, p, x)?;
    let seq = sequence_former(tape, arch, feat)?;
    // When running stats are supplied they drive the normalization even
    // under training (frozen-BN regime): single-sample tapes would
    // otherwise normalize by per-sample statistics, which inference with
    // running stats cannot reproduce. Dropout still follows `mode`.
    let running_slices = running.map(|r| (r.mean.as_slice(), r.var.as_slice()));
    let bn_mode = if running.is_some() { BnMode::Eval } else { mode };
    let (normed, bn_stats) =
        tape.batchnorm(seq, p.bn_gamma, p.bn_beta, running_slices, arch.bn_eps, bn_mode)?;
    let steps: Vec<Var> = (0..arch.sequence_len())
        .map(|t| tape.row(normed, t))
        .collect::<Result<_>>()?;
    let h1 = lstm_layer(tape, &p.lstm1, &steps)?;
    let h2 = lstm_layer(tape, &p.lstm2, &h1)?;
    let last = *h2.last().expect("sequence length is at least 1");
    let dropped = tape.dropout(last, arch.dropout_p, mode, rng)?;
    let logits = tape.matvec(p.dense.w, dropped, p.dense.b)?;
    Ok(ForwardOutput { logits, attention, bn_stats })
}

/// Stable softmax over a plain slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::super::params::LstmSpec;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..size * size * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::new(vec![size, size, 3], data).unwrap()
    }

    #[test]
    fn zero_parameter_attention_map_is_one_half() {
        let arch = ArchConfig::reduced(12, 4, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let template = ModelParams::init(&arch, &mut rng);
        let zeros = template.map(&mut |t: &Tensor| Tensor::zeros(t.shape()));
        let mut tape = Tape::new();
        let bound = zeros.bind(&mut tape, false);
        let x = tape.leaf(random_image(12, &mut rng), false);
        let (_, amap) = attention_gate(&mut tape, &bound, x).unwrap();
        let out = tape.value(amap);
        assert_eq!(out.shape(), &[6, 6, 1]);
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn attention_map_is_strictly_inside_the_unit_interval() {
        let arch = ArchConfig::reduced(12, 4, 6, 3);
        for seed in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::init(&arch, &mut rng);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let x = tape.leaf(random_image(12, &mut rng), false);
            let (_, amap) = attention_gate(&mut tape, &bound, x).unwrap();
            assert!(tape.value(amap).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn adrb_output_is_non_negative() {
        let arch = ArchConfig::reduced(12, 4, 6, 3);
        for seed in 100..110u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::init(&arch, &mut rng);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let x = tape.leaf(random_image(12, &mut rng), false);
            let (out, _) = adrb_forward(&mut tape, &bound, x).unwrap();
            assert_eq!(tape.value(out).shape(), &[6, 6, 16]);
            assert!(tape.value(out).data().iter().all(|&v| v >= 0.0));
        }
    }

    fn lstm_inputs(steps: usize, input: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        (0..steps)
            .map(|_| Tensor::from_vec((0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn zero_parameter_lstm_emits_zero_hidden_states() {
        let (input, hidden) = (3usize, 4usize);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let p = LstmP {
            spec: LstmSpec { input, hidden },
            w: tape.leaf(Tensor::zeros(&[4 * hidden, hidden + input]), false),
            b: tape.leaf(Tensor::zeros(&[4 * hidden]), false),
        };
        let steps: Vec<Var> = lstm_inputs(5, input, &mut rng)
            .into_iter()
            .map(|t| tape.leaf(t, false))
            .collect();
        let hs = lstm_layer(&mut tape, &p, &steps).unwrap();
        for h in hs {
            assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forced_gates_copy_the_candidate_into_the_cell() {
        // Saturating the biases (i -> 1, f -> 0, o -> 1) makes C_t = C~_t
        // and h_t = tanh(C~_t) exactly in f64.
        let (input, hidden) = (3usize, 2usize);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w_data: Vec<f64> =
            (0..4 * hidden * (hidden + input)).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let mut b_data = vec![0.0; 4 * hidden];
        for r in 0..hidden {
            b_data[r] = 100.0; // i
            b_data[hidden + r] = -100.0; // f
            b_data[3 * hidden + r] = 100.0; // o
        }
        let w = Tensor::new(vec![4 * hidden, hidden + input], w_data.clone()).unwrap();

        let mut tape = Tape::new();
        let p = LstmP {
            spec: LstmSpec { input, hidden },
            w: tape.leaf(w, false),
            b: tape.leaf(Tensor::from_vec(b_data.clone()), false),
        };
        let xs = lstm_inputs(3, input, &mut rng);
        let steps: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let hs = lstm_layer(&mut tape, &p, &steps).unwrap();

        // Replay the same recurrence with plain arithmetic.
        let mut h = vec![0.0; hidden];
        for (t, x) in xs.iter().enumerate() {
            let z: Vec<f64> = h.iter().chain(x.data()).copied().collect();
            let candidate: Vec<f64> = (0..hidden)
                .map(|r| {
                    let row = &w_data[(2 * hidden + r) * (hidden + input)..][..hidden + input];
                    let lin: f64 =
                        row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b_data[2 * hidden + r];
                    lin.tanh()
                })
                .collect();
            h = candidate.iter().map(|&c| c.tanh()).collect();
            assert_eq!(tape.value(hs[t]).data(), h.as_slice(), "step {t}");
        }
    }

    #[test]
    fn hidden_states_stay_inside_the_unit_ball() {
        let (input, hidden) = (4usize, 6usize);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let n = 4 * hidden * (hidden + input);
            let w = Tensor::new(
                vec![4 * hidden, hidden + input],
                (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let b = Tensor::from_vec((0..4 * hidden).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let p = LstmP {
                spec: LstmSpec { input, hidden },
                w: tape.leaf(w, false),
                b: tape.leaf(b, false),
            };
            let steps: Vec<Var> = lstm_inputs(6, input, &mut rng)
                .into_iter()
                .map(|t| tape.leaf(t, false))
                .collect();
            for h in lstm_layer(&mut tape, &p, &steps).unwrap() {
                assert!(tape.value(h).data().iter().all(|&v| v.abs() < 1.0));
            }
        }
    }

    #[test]
    fn softmax_normalizes_and_orders() {
        let p = softmax(&[1.0, 3.0, 2.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p[1] > p[2] && p[2] > p[0]);
        // Extreme logits must not overflow.
        let q = softmax(&[1000.0, 0.0]);
        assert!(q[0] > 0.999_999);
        assert!(q.iter().all(|v| v.is_finite()));
    }
}
