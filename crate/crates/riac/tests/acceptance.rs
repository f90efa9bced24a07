//! The acceptance gate: one test per criterion, each printing a pass/fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! lines; the test outcome mirrors them either way.

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riac::cass::{read_ppm, render_cass, write_ppm, AugmentationSpec, RenderConfig};
use riac::eval::{
    accuracy, confusion_matrix, evaluate_split, fuse, predict_part, render_part_images, roc_auc,
    search_weights, FusionWeights, PartPredictions, PipelineConfig, TrainingConfig,
};
use riac::net::{
    adrb_forward, attention_gate, lstm_layer, ArchConfig, LstmP, LstmSpec, ModelParams,
};
use riac::skeleton::{
    make_splits, resample, ActionSequence, DatasetManifest, Joint3D, ManifestEntry, PartLabel,
    PartTrajectory, PartitionScheme, SkeletonFrame, MSR_SUBSETS,
};
use riac::synthetic::{split_synthetic, synthetic_corpus, SYNTHETIC_CLASSES};
use riac::tensor::{Tape, Tensor, Var};
use riac::verify::{gradcheck_suite, COMPOSED_THRESHOLD, PRIMITIVE_THRESHOLD};

/// Runs one criterion body, prints its pass/fail line, and re-raises any
/// failure so the test outcome matches the printed verdict.
fn criterion(number: usize, name: &str, body: impl FnOnce()) {
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("criterion {number} ({name}): pass"),
        Err(_) => println!("criterion {number} ({name}): fail"),
    }
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

#[test]
fn criterion_01_gradient_suite() {
    criterion(1, "gradient suite", || {
        let start = Instant::now();
        let results = gradcheck_suite(None, 42).expect("suite must complete");
        assert!(results.len() >= 23, "expected every primitive and composed check to run");
        for r in &results {
            let bound = if r.name.ends_with("-28") { COMPOSED_THRESHOLD } else { PRIMITIVE_THRESHOLD };
            assert!(
                r.passed() && r.threshold == bound,
                "{}: max rel err {:.3e} vs {:.3e}",
                r.name,
                r.max_rel_err,
                r.threshold
            );
        }
        assert!(start.elapsed().as_secs() < 300, "suite took {:?}", start.elapsed());
    });
}

#[test]
fn criterion_02_table1_shapes() {
    criterion(2, "Table-1 conformance", || {
        let start = Instant::now();
        let arch = ArchConfig::reference(10);
        assert_eq!(arch.image_size, 224);
        for shape in arch.branch_output_shapes() {
            assert_eq!(shape, [112, 112, 64]);
        }
        assert_eq!(arch.fused_shape(), [112, 112, 256]);
        assert!(start.elapsed().as_secs() < 1);
    });
}

fn random_image(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..size * size * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new(vec![size, size, 3], data).unwrap()
}

#[test]
fn criterion_03_attention_invariants() {
    criterion(3, "attention invariants", || {
        let arch = ArchConfig::reduced(12, 4, 6, 3);
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::init(&arch, &mut rng);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let x = tape.leaf(random_image(12, &mut rng), false);
            let (out, amap) = adrb_forward(&mut tape, &bound, x).unwrap();
            assert!(tape.value(amap).data().iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(tape.value(out).data().iter().all(|&v| v >= 0.0));
        }
        // Zero parameters zero the pre-sigmoid activations, so A == 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let zeros =
            ModelParams::init(&arch, &mut rng).map(&mut |t: &Tensor| Tensor::zeros(t.shape()));
        let mut tape = Tape::new();
        let bound = zeros.bind(&mut tape, false);
        let x = tape.leaf(random_image(12, &mut rng), false);
        let (_, amap) = attention_gate(&mut tape, &bound, x).unwrap();
        assert!(tape.value(amap).data().iter().all(|&v| v == 0.5));
    });
}

#[test]
fn criterion_04_lstm_invariants() {
    criterion(4, "LSTM invariants", || {
        let (input, hidden) = (3usize, 4usize);

        // Zero parameters: every gate is constant, the candidate is zero,
        // so the hidden state never leaves zero.
        let mut tape = Tape::new();
        let zero = LstmP {
            spec: LstmSpec { input, hidden },
            w: tape.leaf(Tensor::zeros(&[4 * hidden, hidden + input]), false),
            b: tape.leaf(Tensor::zeros(&[4 * hidden]), false),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Tensor> = (0..5)
            .map(|_| Tensor::from_vec((0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let steps: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        for h in lstm_layer(&mut tape, &zero, &steps).unwrap() {
            assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        }

        // Forcing f = 0 and i = 1 via saturated biases makes C_t = C~_t
        // exactly; with o = 1 the hidden state is tanh(C~_t).
        let n = 4 * hidden * (hidden + input);
        let w_data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let mut b_data = vec![0.0; 4 * hidden];
        for r in 0..hidden {
            b_data[r] = 100.0;
            b_data[hidden + r] = -100.0;
            b_data[3 * hidden + r] = 100.0;
        }
        let mut tape = Tape::new();
        let forced = LstmP {
            spec: LstmSpec { input, hidden },
            w: tape.leaf(
                Tensor::new(vec![4 * hidden, hidden + input], w_data.clone()).unwrap(),
                false,
            ),
            b: tape.leaf(Tensor::from_vec(b_data.clone()), false),
        };
        let steps: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let hs = lstm_layer(&mut tape, &forced, &steps).unwrap();
        let mut h = vec![0.0; hidden];
        for (t, x) in xs.iter().enumerate() {
            let z: Vec<f64> = h.iter().chain(x.data()).copied().collect();
            let candidate: Vec<f64> = (0..hidden)
                .map(|r| {
                    let row = &w_data[(2 * hidden + r) * (hidden + input)..][..hidden + input];
                    // Same accumulation order as the tape: bias first,
                    // then products left to right.
                    let mut s = b_data[2 * hidden + r];
                    for (a, b) in row.iter().zip(&z) {
                        s += a * b;
                    }
                    s.tanh()
                })
                .collect();
            h = candidate.iter().map(|&c| c.tanh()).collect();
            assert_eq!(tape.value(hs[t]).data(), h.as_slice(), "step {t}");
            assert!(h.iter().all(|&v| v.abs() < 1.0));
        }
    });
}

/// The criterion-5 fixture: two joints drifting right over four frames.
fn golden_trajectory() -> PartTrajectory {
    let j = |x: f64, y: f64| Joint3D { x, y, z: 1.0 };
    PartTrajectory {
        part: PartLabel::Lh,
        joints: vec![
            vec![j(0.0, 0.0), j(1.0, 0.0), j(2.0, 0.0), j(3.0, 0.0)],
            vec![j(0.0, 1.0), j(1.0, 1.0), j(2.0, 1.0), j(3.0, 1.0)],
        ],
    }
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/cass_2joint_4frame.ppm")
}

#[test]
fn criterion_05_cass_golden() {
    criterion(5, "CASS golden render", || {
        let cfg = RenderConfig { size: 32, ..RenderConfig::default() };
        let img = render_cass(&golden_trajectory(), &cfg, "golden").unwrap();
        assert_eq!(render_cass(&golden_trajectory(), &cfg, "golden").unwrap(), img);

        let colors: Vec<[u8; 3]> = img
            .pixels
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .filter(|c| c != &[0, 0, 0])
            .collect();
        assert!(colors.contains(&[0, 0, 255]), "first frame must render pure blue");
        assert!(colors.contains(&[255, 0, 0]), "last frame must render pure red");

        let golden = read_ppm(&golden_path(), PartLabel::Lh, "golden")
            .expect("golden fixture must exist; regenerate with the ignored test");
        assert_eq!(img.pixels, golden.pixels, "render drifted from the stored golden bytes");
    });
}

/// Maintenance helper: `cargo test --test acceptance regenerate_golden -- --ignored`.
#[test]
#[ignore]
fn regenerate_golden() {
    let cfg = RenderConfig { size: 32, ..RenderConfig::default() };
    let img = render_cass(&golden_trajectory(), &cfg, "golden").unwrap();
    write_ppm(&golden_path(), &img).unwrap();
}

#[test]
fn criterion_06_resampling() {
    criterion(6, "temporal resampling", || {
        let ramp = |n: usize| -> ActionSequence {
            ActionSequence {
                dataset: "test".into(),
                id: "ramp".into(),
                label: 0,
                subject: 1,
                trial: 1,
                frames: (0..n)
                    .map(|t| SkeletonFrame {
                        joints: vec![Joint3D { x: t as f64 / (n - 1) as f64, y: 0.0, z: 1.0 }],
                    })
                    .collect(),
                subsets: Vec::new(),
            }
        };
        for n in [120usize, 5] {
            let out = resample(&ramp(n), 60).unwrap();
            assert_eq!(out.frames.len(), 60);
            assert_eq!(out.frames[0], ramp(n).frames[0]);
            assert_eq!(out.frames[59], ramp(n).frames[n - 1]);
        }
        assert_eq!(resample(&ramp(60), 60).unwrap(), ramp(60));
        let two = resample(&ramp(2), 60).unwrap();
        assert!((two.frames[30].joints[0].x - 30.0 / 59.0).abs() < 1e-15);
    });
}

fn random_parts(seed: u64, n: usize, classes: usize) -> [PartPredictions; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    PartLabel::PARTS.map(|part| {
        let probs = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|v| v / z).collect()
            })
            .collect();
        PartPredictions { part, ids: ids.clone(), probs, labels: labels.clone() }
    })
}

#[test]
fn criterion_07_fusion_oracle() {
    criterion(7, "fusion-weight oracle", || {
        let start = Instant::now();
        for seed in 0..5u64 {
            let parts = random_parts(seed, 20, 4);
            let (got_w, got_acc) = search_weights(&parts).unwrap();

            // Independent exhaustive search, written from Eq. 10 directly.
            let mut best: Option<([u32; 5], f64)> = None;
            for a in 1..=5u32 {
                for b in 1..=5u32 {
                    for c in 1..=5u32 {
                        for d in 1..=5u32 {
                            for e in 1..=5u32 {
                                let w = [a, b, c, d, e];
                                let mut correct = 0usize;
                                for s in 0..20 {
                                    let mut score = vec![0.0; 4];
                                    for (pi, part) in parts.iter().enumerate() {
                                        for (k, v) in score.iter_mut().enumerate() {
                                            *v += w[pi] as f64 * part.probs[s][k];
                                        }
                                    }
                                    let mut arg = 0;
                                    for (k, &v) in score.iter().enumerate().skip(1) {
                                        if v > score[arg] {
                                            arg = k;
                                        }
                                    }
                                    if arg == parts[0].labels[s] {
                                        correct += 1;
                                    }
                                }
                                let acc = correct as f64 / 20.0;
                                if best.map_or(true, |(_, b)| acc > b) {
                                    best = Some((w, acc));
                                }
                            }
                        }
                    }
                }
            }
            let (want_w, want_acc) = best.unwrap();
            assert_eq!(got_w, FusionWeights(want_w), "seed {seed}");
            assert_eq!(got_acc, want_acc, "seed {seed}");
        }
        assert!(start.elapsed().as_secs() < 10, "oracle took {:?}", start.elapsed());
    });
}

#[test]
fn criterion_08_metric_identities() {
    criterion(8, "metric identities", || {
        // A perfect classifier: scores put all mass on the true class.
        let n = 60usize;
        let classes = 4usize;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..classes).map(|k| if k == l { 0.97 } else { 0.01 }).collect())
            .collect();
        let predicted = labels.clone();
        let cm = confusion_matrix(&predicted, &labels, classes).unwrap();
        for (t, row) in cm.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                assert_eq!(v, if t == p { n / classes } else { 0 });
            }
        }
        assert_eq!(roc_auc(&scores, &labels, classes).unwrap().macro_auc, 1.0);

        // Seeded random scores: chance-level AUC.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..2)).collect();
        let scores: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let p: f64 = rng.gen();
                vec![p, 1.0 - p]
            })
            .collect();
        let auc = roc_auc(&scores, &labels, 2).unwrap().macro_auc;
        assert!((auc - 0.5).abs() < 0.05, "random AUC {auc}");
    });
}

/// One desk-scale end-to-end run; shared by criteria 9 and 11.
struct E2eRun {
    /// Mean eval-mode train accuracy per part, over the un-augmented
    /// training renders.
    train_accuracy: BTreeMap<PartLabel, f64>,
    fused_test_accuracy: f64,
    /// Full textual report plus fused scores, for bit-identity checks.
    fingerprint: String,
}

fn e2e_config() -> PipelineConfig {
    PipelineConfig {
        arch: ArchConfig::reduced(56, 4, 12, 3),
        training: TrainingConfig {
            batch_size: 32,
            lr: 0.002,
            lr_multiplier: 0.98,
            lr_every: 20,
            max_epochs: 200,
            patience: 60,
            weight_noise: 0.005,
            // No held-out slice: 21 sequences are too few for a stable
            // validation loss, so patience tracks the train loss instead.
            val_fraction: 0.0,
            bn_freeze_epoch: 10,
            seed: 42,
        },
        render: RenderConfig { size: 56, line_width: 2, ..RenderConfig::default() },
        frames: 60,
        augment: AugmentationSpec::none(),
        fusion_mode: "test".into(),
        seed: 42,
    }
}

fn run_e2e() -> E2eRun {
    let corpus = synthetic_corpus(10, 45, 7);
    let (train, test) = split_synthetic(&corpus, 3);
    assert_eq!((train.len(), test.len()), (21, 9));
    let classes: Vec<String> = SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect();
    let cfg = e2e_config();

    let artifacts =
        evaluate_split(&train, &test, &classes, &cfg, "synthetic", "fixed-split").unwrap();

    let scheme = PartitionScheme::kinect20();
    let train_images =
        render_part_images(&train, &scheme, &cfg.render, cfg.frames, &PartLabel::ALL, None)
            .unwrap();
    let mut train_accuracy = BTreeMap::new();
    for (part, model, _, _) in &artifacts.parts {
        let preds = predict_part(model, &train_images[part], *part).unwrap();
        let predicted: Vec<usize> = preds.probs.iter().map(|r| riac::eval::argmax(r)).collect();
        train_accuracy.insert(*part, accuracy(&predicted, &preds.labels));
    }

    let mut fingerprint = artifacts.report.to_text();
    fingerprint.push_str("\n[fused scores]\n");
    for (id, row) in artifacts.fused.ids.iter().zip(&artifacts.fused.scores) {
        fingerprint.push_str(&format!("{id} {row:?}\n"));
    }
    for (part, acc) in &train_accuracy {
        fingerprint.push_str(&format!("train_{part} {acc}\n"));
    }

    E2eRun {
        train_accuracy,
        fused_test_accuracy: artifacts.report.fused_accuracy,
        fingerprint,
    }
}

static FIRST_E2E: OnceLock<E2eRun> = OnceLock::new();

#[test]
fn criterion_09_desk_scale_end_to_end() {
    criterion(9, "desk-scale end-to-end", || {
        let start = Instant::now();
        let run = FIRST_E2E.get_or_init(run_e2e);
        // HS is excluded: wave-arms and march-legs keep the head-to-spine
        // chain equally still, so that branch cannot separate them.
        for part in [PartLabel::Fs, PartLabel::Ll, PartLabel::Rl, PartLabel::Lh, PartLabel::Rh] {
            assert_eq!(
                run.train_accuracy[&part], 1.0,
                "part {part} train accuracy {}",
                run.train_accuracy[&part]
            );
        }
        assert!(
            run.fused_test_accuracy >= 0.9,
            "fused test accuracy {}",
            run.fused_test_accuracy
        );
        assert!(start.elapsed().as_secs() < 1800, "e2e took {:?}", start.elapsed());
    });
}

#[test]
fn criterion_10_protocol_plumbing() {
    criterion(10, "protocol plumbing", || {
        // MSR cross-subject: odd subjects train, even subjects test.
        let entries: Vec<ManifestEntry> = (1..=10u32)
            .flat_map(|s| {
                (1..=2u32).map(move |t| ManifestEntry {
                    id: format!("a01_s{s:02}_e{t:02}"),
                    label: 0,
                    subject: s,
                    trial: t,
                    path: None,
                    subsets: Vec::new(),
                })
            })
            .collect();
        let manifest = DatasetManifest {
            dataset: "msr".into(),
            class_names: vec!["a".into()],
            joint_count: 20,
            entries,
        };
        let spec = make_splits(&manifest, "cross-subject").unwrap();
        assert_eq!(spec.folds.len(), 1);
        let subject = |id: &str| id[5..7].parse::<u32>().unwrap();
        let mut train: Vec<u32> = spec.folds[0].train.iter().map(|i| subject(i)).collect();
        let mut test: Vec<u32> = spec.folds[0].test.iter().map(|i| subject(i)).collect();
        train.sort_unstable();
        train.dedup();
        test.sort_unstable();
        test.dedup();
        assert_eq!(train, vec![1, 3, 5, 7, 9]);
        assert_eq!(test, vec![2, 4, 6, 8, 10]);

        // UT Kinect: 10 subjects x 2 trials x 10 actions = 200 LOOCV folds.
        let entries: Vec<ManifestEntry> = (0..200usize)
            .map(|i| ManifestEntry {
                id: format!("s{:02}_e{:02}_a{}", i / 20 + 1, i / 10 % 2 + 1, i % 10),
                label: i % 10,
                subject: (i / 20 + 1) as u32,
                trial: (i / 10 % 2 + 1) as u32,
                path: None,
                subsets: Vec::new(),
            })
            .collect();
        let manifest = DatasetManifest {
            dataset: "utkinect".into(),
            class_names: (0..10).map(|c| format!("c{c}")).collect(),
            joint_count: 20,
            entries,
        };
        let spec = make_splits(&manifest, "loocv-sequence").unwrap();
        assert_eq!(spec.folds.len(), 200);
        assert!(spec.folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 199));

        // Table-2 subsets: exactly eight distinct actions each.
        for (name, actions) in MSR_SUBSETS {
            let mut unique = actions.to_vec();
            unique.sort_unstable();
            unique.dedup();
            assert_eq!(unique.len(), 8, "{name}");
        }
    });
}

#[test]
fn criterion_11_determinism() {
    criterion(11, "bit-identical reruns", || {
        let first = FIRST_E2E.get_or_init(run_e2e);
        let second = run_e2e();
        assert_eq!(first.fingerprint, second.fingerprint, "reports differ between runs");
    });
}

#[test]
fn fusion_weight_grid_is_complete() {
    // Support check for criterion 7: the grid the search walks is exactly
    // {1..5}^5 in lexicographic order.
    let grid = FusionWeights::grid();
    assert_eq!(grid.len(), 3125);
    let mut sorted = grid.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted, grid);
    // Fusing with unit weights averages the parts.
    let parts = random_parts(3, 4, 3);
    let fused = fuse(FusionWeights([1; 5]), &parts).unwrap();
    for (s, row) in fused.scores.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let want: f64 = parts.iter().map(|p| p.probs[s][k]).sum();
            assert!((v - want).abs() < 1e-12);
        }
    }
}
