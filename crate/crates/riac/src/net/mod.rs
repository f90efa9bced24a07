//! The RIAC-Net architecture: STCF inception block, attention-driven
//! residual block, sequence former, and the GAP -> BN -> LSTM x2 ->
//! dropout -> dense -> softmax head.

mod forward;
mod params;

pub use forward::{
    adrb_forward, attention_gate, lstm_layer, model_forward, softmax, stcf_forward, ForwardOutput,
};
pub use params::{BnRunning, ConvP, ConvSpec, DenseP, LstmP, LstmSpec, ModelParams, Storage};

use crate::error::{Error, Result};
use crate::tensor::{conv_out_dim, NamedTensor, Tensor};
use rand::Rng;

/// How the fused feature map becomes an LSTM input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormerMode {
    /// GAP over the width axis: one step per feature-map row (default).
    SpatialRows,
    /// Full GAP: a single-step sequence.
    SingleStep,
}

impl FormerMode {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial-rows" => Ok(FormerMode::SpatialRows),
            "single-step" => Ok(FormerMode::SingleStep),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sequence-former mode {s:?}; valid: spatial-rows, single-step"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FormerMode::SpatialRows => "spatial-rows",
            FormerMode::SingleStep => "single-step",
        }
    }
}

/// Structural hyperparameters. `branch_channels` scales the whole net
/// uniformly; the reference instantiation is 64 (branch outputs 64, fused
/// map 256) with LSTM hidden size 128.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub image_size: usize,
    pub branch_channels: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub former: FormerMode,
    pub dropout_p: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl ArchConfig {
    pub fn reference(n_classes: usize) -> Self {
        ArchConfig {
            image_size: 224,
            branch_channels: 64,
            hidden: 128,
            n_classes,
            former: FormerMode::SpatialRows,
            dropout_p: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }

    /// A small instantiation for desk-scale training and checking.
    pub fn reduced(image_size: usize, branch_channels: usize, hidden: usize, n_classes: usize) -> Self {
        ArchConfig { image_size, branch_channels, hidden, ..Self::reference(n_classes) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % 4 != 0 || self.image_size < 8 {
            return Err(Error::InvalidArgument(format!(
                "image size must be a multiple of 4 and at least 8, got {}",
                self.image_size
            )));
        }
        if self.branch_channels % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "branch channel count must be even, got {}",
                self.branch_channels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0,1), got {}", self.dropout_p)));
        }
        Ok(())
    }

    pub fn fused_channels(&self) -> usize {
        4 * self.branch_channels
    }

    pub fn feature_map_size(&self) -> usize {
        self.image_size / 2
    }

    /// Output shape of each STCF branch, computed from the convolution
    /// shape algebra without running the network.
    pub fn branch_output_shapes(&self) -> [[usize; 3]; 4] {
        let s = self.image_size;
        let c = self.branch_channels;
        // Branch 1: 1x1 stride 2.
        let b1 = conv_out_dim(s, 1, 2, 0);
        // Branch 2: 1x1 stride 1, then 3x3 stride 2 pad 1.
        let b2 = conv_out_dim(conv_out_dim(s, 1, 1, 0), 3, 2, 1);
        // Branch 3: 1x1 s1, 3x3 s1 same, 3x3 s2 pad 1.
        let b3 = conv_out_dim(conv_out_dim(conv_out_dim(s, 1, 1, 0), 3, 1, 1), 3, 2, 1);
        // Branch 4: maxpool 2x2 stride 2, then 1x1 stride 1.
        let b4 = conv_out_dim(conv_out_dim(s, 2, 2, 0), 1, 1, 0);
        [[b1, b1, c], [b2, b2, c], [b3, b3, c], [b4, b4, c]]
    }

    pub fn fused_shape(&self) -> [usize; 3] {
        let m = self.feature_map_size();
        [m, m, self.fused_channels()]
    }

    /// LSTM sequence length under the configured former mode.
    pub fn sequence_len(&self) -> usize {
        match self.former {
            FormerMode::SpatialRows => self.feature_map_size(),
            FormerMode::SingleStep => 1,
        }
    }
}

/// All learnable parameters of one part branch plus the BN running stats.
#[derive(Debug, Clone)]
pub struct RiacNetModel {
    pub arch: ArchConfig,
    pub params: ModelParams<Tensor>,
    pub bn_running: BnRunning,
}

impl RiacNetModel {
    pub fn new(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let params = ModelParams::init(&arch, rng);
        let bn_running = BnRunning::new(arch.fused_channels());
        Ok(RiacNetModel { arch, params, bn_running })
    }

    /// Class probabilities for one image in eval mode (deterministic).
    pub fn predict(&self, image: &Tensor) -> Result<Vec<f64>> {
        let mut tape = crate::tensor::Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.leaf(image.clone(), false);
        let out = forward::model_forward(
            &mut tape,
            &bound,
            &self.arch,
            x,
            crate::tensor::BnMode::Eval,
            Some(&self.bn_running),
            &mut rand::rngs::mock::StepRng::new(0, 0),
        )?;
        Ok(softmax(tape.value(out.logits).data()))
    }

    /// Named parameter list for checkpointing (trainables plus BN running
    /// stats).
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.params.for_each(&mut |name, t| {
            out.push(NamedTensor { name: name.to_string(), tensor: t.clone() });
        });
        out.push(NamedTensor {
            name: "bn.running_mean".into(),
            tensor: Tensor::from_vec(self.bn_running.mean.clone()),
        });
        out.push(NamedTensor {
            name: "bn.running_var".into(),
            tensor: Tensor::from_vec(self.bn_running.var.clone()),
        });
        out
    }

    pub fn load_named_tensors(&mut self, entries: &[NamedTensor]) -> Result<()> {
        let lookup: std::collections::BTreeMap<&str, &Tensor> =
            entries.iter().map(|e| (e.name.as_str(), &e.tensor)).collect();
        let mut missing = Vec::new();
        self.params.for_each_mut(&mut |name, t| {
            match lookup.get(name) {
                Some(src) if src.shape() == t.shape() => *t = (*src).clone(),
                _ => missing.push(name.to_string()),
            }
        });
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "checkpoint is missing or mis-shaped for: {}",
                missing.join(", ")
            )));
        }
        for (name, dst) in [
            ("bn.running_mean", &mut self.bn_running.mean),
            ("bn.running_var", &mut self.bn_running.var),
        ] {
            let src = lookup
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint is missing {name}")))?;
            if src.numel() != dst.len() {
                return Err(Error::Checkpoint(format!("wrong size for {name}")));
            }
            dst.copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Plain text layer listing emitted alongside checkpoints.
    pub fn architecture_description(&self) -> String {
        let a = &self.arch;
        let m = a.feature_map_size();
        let fc = a.fused_channels();
        let mut s = String::new();
        s.push_str(&format!(
            "input {0}x{0}x3\nstcf branches -> 4 x {m}x{m}x{1} -> concat {m}x{m}x{fc}\n",
            a.image_size, a.branch_channels
        ));
        s.push_str(&format!("attention gate -> {m}x{m}x1 map, skip projection {m}x{m}x{fc}\n"));
        s.push_str(&format!("adrb output {m}x{m}x{fc}\n"));
        s.push_str(&format!(
            "sequence former ({}) -> {} x {fc}\n",
            a.former.as_str(),
            a.sequence_len()
        ));
        s.push_str(&format!("batchnorm {fc}\n"));
        s.push_str(&format!("lstm hidden {0}\nlstm hidden {0}\n", a.hidden));
        s.push_str(&format!("dropout {}\n", a.dropout_p));
        s.push_str(&format!("dense {0}\nsoftmax {0}\n", a.n_classes));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_arch_matches_the_documented_shapes() {
        let arch = ArchConfig::reference(10);
        for shape in arch.branch_output_shapes() {
            assert_eq!(shape, [112, 112, 64]);
        }
        assert_eq!(arch.fused_shape(), [112, 112, 256]);
        assert_eq!(arch.sequence_len(), 112);
    }

    #[test]
    fn invalid_architectures_are_rejected() {
        let ok = ArchConfig::reduced(16, 4, 6, 3);
        ok.validate().unwrap();
        assert!(ArchConfig { image_size: 18, ..ok.clone() }.validate().is_err());
        assert!(ArchConfig { image_size: 4, ..ok.clone() }.validate().is_err());
        assert!(ArchConfig { branch_channels: 3, ..ok.clone() }.validate().is_err());
        assert!(ArchConfig { dropout_p: 1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn predict_returns_a_deterministic_distribution() {
        let arch = ArchConfig::reduced(16, 4, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = RiacNetModel::new(arch, &mut rng).unwrap();
        let image = Tensor::full(&[16, 16, 3], 0.3);
        let p = model.predict(&image).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
        assert_eq!(model.predict(&image).unwrap(), p);
    }

    #[test]
    fn named_tensor_round_trip_preserves_predictions() {
        let arch = ArchConfig::reduced(16, 4, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = RiacNetModel::new(arch.clone(), &mut rng).unwrap();
        let entries = model.to_named_tensors();

        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let mut other = RiacNetModel::new(arch, &mut rng2).unwrap();
        let image = Tensor::full(&[16, 16, 3], 0.6);
        assert_ne!(other.predict(&image).unwrap(), model.predict(&image).unwrap());
        other.load_named_tensors(&entries).unwrap();
        assert_eq!(other.predict(&image).unwrap(), model.predict(&image).unwrap());
    }

    #[test]
    fn loading_a_mismatched_checkpoint_fails_loudly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = RiacNetModel::new(ArchConfig::reduced(16, 4, 6, 3), &mut rng).unwrap();
        let mut big = RiacNetModel::new(ArchConfig::reduced(16, 6, 6, 3), &mut rng).unwrap();
        let err = big.load_named_tensors(&small.to_named_tensors()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn former_mode_names_round_trip() {
        for m in [FormerMode::SpatialRows, FormerMode::SingleStep] {
            assert_eq!(FormerMode::from_str(m.as_str()).unwrap(), m);
        }
        assert!(FormerMode::from_str("diagonal").is_err());
    }
}
