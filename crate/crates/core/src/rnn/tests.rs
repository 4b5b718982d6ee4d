use super::*;
use crate::baselines::{nbc_score, nbc_train, TrainDoc};
use crate::embedding::{embed_static, EmbeddingSource, OovPolicy, StaticTable};
use proptest::prelude::*;

fn seq(id: u64, rows: usize, cols: usize, rng: &mut SeededStream) -> HeadlineEmbedding {
    let data = (0..rows * cols).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect();
    HeadlineEmbedding::new(id, EmbeddingSource::Static, 0, rows, cols, data).unwrap()
}

fn small_config(cell: CellKind) -> RnnConfig {
    RnnConfig {
        cell,
        layer_widths: vec![5, 3],
        dropout: 0.0,
        seed: 11,
        ..RnnConfig::default()
    }
}

#[test]
fn zero_parameters_give_even_odds() {
    let mut rng = SeededStream::new(1);
    for cell in CellKind::ALL {
        let m = RnnModel::zeros(small_config(cell), 4).unwrap();
        assert_eq!(m.predict(&seq(0, 6, 4, &mut rng)).unwrap(), 0.5);
    }
}

#[test]
fn inference_is_repeatable() {
    let mut rng = SeededStream::new(2);
    let x = seq(0, 5, 4, &mut rng);
    let m = RnnModel::new(RnnConfig { dropout: 0.5, ..small_config(CellKind::Gru) }, 4).unwrap();
    assert_eq!(m.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
}

#[test]
fn hand_set_lstm_step() {
    let cfg = RnnConfig { layer_widths: vec![1], ..small_config(CellKind::Lstm) };
    let mut m = RnnModel::zeros(cfg, 1).unwrap();
    m.block_mut("layer0.w").unwrap().copy_from_slice(&[0.5, -0.3, 0.8, 1.2]);
    m.block_mut("layer0.u").unwrap().copy_from_slice(&[9.0, 9.0, 9.0, 9.0]);
    m.block_mut("layer0.b").unwrap().copy_from_slice(&[0.1, 0.2, -0.1, 0.0]);
    m.block_mut("head.w").unwrap().copy_from_slice(&[0.0, 1.0]);
    let x = HeadlineEmbedding::new(0, EmbeddingSource::Static, 0, 1, 1, vec![1.0]).unwrap();
    // h = o * tanh(i * g), evaluated independently; P+ = sigmoid(h)
    let expected = 0.5709042016265703;
    assert!((m.predict(&x).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn loss_values() {
    let mut rng = SeededStream::new(3);
    let x = seq(0, 3, 2, &mut rng);
    let mut m = RnnModel::zeros(small_config(CellKind::Vanilla), 2).unwrap();
    assert!((m.loss(&[(&x, true), (&x, false)]).unwrap() - 2f64.ln()).abs() < 1e-15);

    m.block_mut("head.b").unwrap().copy_from_slice(&[3f64.ln(), 0.0]);
    assert!((m.predict(&x).unwrap() - 0.25).abs() < 1e-15);
    assert!((m.loss(&[(&x, true)]).unwrap() - 4f64.ln()).abs() < 1e-12);

    m.block_mut("head.b").unwrap().copy_from_slice(&[-100.0, 100.0]);
    let l = m.loss(&[(&x, true)]).unwrap();
    assert!((0.0..=1.0001e-12).contains(&l));
    assert!(matches!(m.loss(&[]), Err(RnnError::EmptyBatch)));
}

#[test]
fn shape_mismatch_is_reported() {
    let mut rng = SeededStream::new(4);
    let m = RnnModel::new(small_config(CellKind::Lstm), 4).unwrap();
    assert!(matches!(m.predict(&seq(0, 2, 3, &mut rng)), Err(RnnError::Shape(_))));
}

#[test]
fn config_validation() {
    let base = small_config(CellKind::Lstm);
    for bad in [
        RnnConfig { layer_widths: vec![], ..base.clone() },
        RnnConfig { layer_widths: vec![4, 8], ..base.clone() },
        RnnConfig { dropout: 1.0, ..base.clone() },
        RnnConfig { learning_rate: -0.1, ..base.clone() },
        RnnConfig { batch_size: 0, ..base.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(RnnError::InvalidConfig(_))));
    }
    assert_eq!("gru".parse::<CellKind>().unwrap(), CellKind::Gru);
    assert!("transformer".parse::<CellKind>().is_err());
}

fn random_batch(seed: u64, n: usize, cols: usize) -> Vec<(HeadlineEmbedding, bool)> {
    let mut rng = SeededStream::new(seed);
    (0..n)
        .map(|i| {
            let rows = 1 + rng.below(5);
            (seq(i as u64, rows, cols, &mut rng), i % 2 == 0)
        })
        .collect()
}

fn refs(b: &[(HeadlineEmbedding, bool)]) -> Vec<(&HeadlineEmbedding, bool)> {
    b.iter().map(|(x, y)| (x, *y)).collect()
}

#[test]
fn gradients_match_finite_differences() {
    for cell in CellKind::ALL {
        for seed in 0..3 {
            let m = RnnModel::new(RnnConfig { seed, ..small_config(cell) }, 4).unwrap();
            assert!(m.num_params() <= 1000);
            let batch = random_batch(100 + seed, 4, 4);
            let err = gradient_check(&m, &refs(&batch), 1e-4).unwrap();
            assert!(err < 1e-4, "{cell} seed {seed}: {err}");
        }
    }
}

#[test]
fn symmetric_batch_has_zero_bias_gradient() {
    let mut rng = SeededStream::new(5);
    let x = seq(0, 4, 3, &mut rng);
    for cell in CellKind::ALL {
        let m = RnnModel::zeros(small_config(cell), 3).unwrap();
        let (_, g) = m.gradient(&[(&x, true), (&x, false)]).unwrap();
        let (_, _, _, off) = m.blocks().into_iter().find(|b| b.0 == "head.b").unwrap();
        assert_eq!(&g[off..off + 2], &[0.0, 0.0]);
    }
}

#[test]
fn small_step_does_not_increase_loss() {
    for cell in CellKind::ALL {
        let mut m = RnnModel::new(small_config(cell), 4).unwrap();
        let batch = random_batch(9, 6, 4);
        let b = refs(&batch);
        let (before, g) = m.gradient(&b).unwrap();
        for (p, d) in m.params_mut().iter_mut().zip(&g) {
            *p -= 1e-5 * d;
        }
        assert!(m.loss(&b).unwrap() <= before);
    }
}

// Ten headlines whose label is fixed by a signal word among noise words.
fn separable_set() -> (Vec<(HeadlineEmbedding, bool)>, Vec<Vec<String>>) {
    let mut rng = SeededStream::new(77);
    let mut table = StaticTable::new(6);
    for w in ["up", "down", "a", "b", "c", "d"] {
        let v: Vec<f32> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect();
        table.insert(w, &v).unwrap();
    }
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    for i in 0..10u64 {
        let label = i % 2 == 0;
        let mut t: Vec<String> = (0..3).map(|_| ["a", "b", "c", "d"][rng.below(4)].to_string()).collect();
        let at = rng.below(4);
        t.insert(at, if label { "up" } else { "down" }.to_string());
        out.push((embed_static(i, &t, &table, OovPolicy::Zero).unwrap(), label));
        tokens.push(t);
    }
    (out, tokens)
}

#[test]
fn learns_a_separable_set() {
    let (data, tokens) = separable_set();
    // oracle: the word-count classifier separates the set perfectly
    let docs: Vec<TrainDoc<'_>> = tokens
        .iter()
        .zip(&data)
        .map(|(t, (_, y))| TrainDoc { tokens: t, label: *y, ret: 0.0 })
        .collect();
    let nbc = nbc_train(&docs, 1.0).unwrap();
    assert!(tokens.iter().zip(&data).all(|(t, (_, y))| (nbc_score(&nbc, t) > 0.5) == *y));

    for (cell, learning_rate) in [(CellKind::Vanilla, 0.1), (CellKind::Lstm, 1.0), (CellKind::Gru, 0.5)] {
        let cfg = RnnConfig {
            cell,
            layer_widths: vec![8, 4],
            dropout: 0.0,
            learning_rate,
            batch_size: 1,
            max_epochs: 50,
            patience: 50,
            seed: 3,
            ..RnnConfig::default()
        };
        let b = refs(&data);
        let m = train(cfg, &b, &[]).unwrap();
        let correct = b.iter().filter(|(x, y)| (m.predict(x).unwrap() > 0.5) == *y).count();
        assert_eq!(correct, 10, "{cell}");
    }
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let (data, _) = separable_set();
    let b = refs(&data);
    let cfg = RnnConfig { learning_rate: 0.0, max_epochs: 4, patience: 10, ..small_config(CellKind::Lstm) };
    let out = train_with_history(cfg.clone(), &b[..6], &b[6..]).unwrap();
    assert_eq!(out.model.params(), RnnModel::new(cfg, 6).unwrap().params());
    let first = out.history[0].dev_loss;
    assert!(out.history.iter().all(|h| h.dev_loss == first));
    assert_eq!(out.history.len(), 5);
}

#[test]
fn early_stopping_keeps_best_snapshot() {
    let (data, _) = separable_set();
    let b = refs(&data);
    let cfg = RnnConfig { learning_rate: 0.0, max_epochs: 20, ..small_config(CellKind::Gru) };
    let out = train_with_history(cfg, &b[..6], &b[6..]).unwrap();
    // nothing improves on the first epoch, so three stale epochs stop it
    assert_eq!(out.history.len(), 5);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (data, _) = separable_set();
    let b = refs(&data);
    let cfg = RnnConfig { dropout: 0.3, max_epochs: 5, ..small_config(CellKind::Lstm) };
    let a = train(cfg.clone(), &b[..8], &b[8..]).unwrap();
    let c = train(cfg, &b[..8], &b[8..]).unwrap();
    let bits = |m: &RnnModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&c));
}

#[test]
fn single_class_training_is_rejected() {
    let (data, _) = separable_set();
    let pos: Vec<_> = data.iter().filter(|d| d.1).map(|(x, y)| (x, *y)).collect();
    assert!(matches!(train(small_config(CellKind::Lstm), &pos, &[]), Err(RnnError::DegenerateTraining)));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = SeededStream::new(8);
    let x = seq(0, 4, 4, &mut rng);
    for cell in CellKind::ALL {
        let m = RnnModel::new(RnnConfig { seed: 99, dropout: 0.25, ..small_config(cell) }, 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());

        let mut bad = buf.clone();
        bad[3] = b'2';
        assert!(read_checkpoint(&bad[..]).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), cell in 0usize..3, rows in 1usize..6) {
        let mut rng = SeededStream::new(seed);
        let m = RnnModel::new(RnnConfig { seed, ..small_config(CellKind::ALL[cell]) }, 3).unwrap();
        let p = m.forward(&seq(0, rows, 3, &mut rng), Mode::Inference).unwrap();
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inference_ignores_dropout_rate(seed in any::<u64>(), rate in 0.0f64..0.95, cell in 0usize..3) {
        let mut rng = SeededStream::new(seed);
        let x = seq(0, 4, 3, &mut rng);
        let a = RnnModel::new(RnnConfig { seed, dropout: 0.0, ..small_config(CellKind::ALL[cell]) }, 3).unwrap();
        let b = RnnModel::new(RnnConfig { seed, dropout: rate, ..small_config(CellKind::ALL[cell]) }, 3).unwrap();
        prop_assert_eq!(a.predict(&x).unwrap().to_bits(), b.predict(&x).unwrap().to_bits());
    }
}

