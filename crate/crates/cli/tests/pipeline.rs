use std::fs;
use std::path::{Path, PathBuf};

use newsflow_core::corpus::{parse_news, tokenize, NewsFormat};
use newsflow_core::embedding::{embed_static, load_static_table, write_embeddings, EmbeddingSource, OovPolicy};
use newsflow_core::HeadlineEmbedding;
use tempfile::TempDir;

fn newsflow(args: &[&str]) -> i32 {
    newsflow_cli::run(std::iter::once("newsflow").chain(args.iter().copied()))
}

fn synth(dir: &Path) -> PathBuf {
    let out = dir.display().to_string();
    let code = newsflow(&[
        "synth", "--out", &out, "--set", "n_stocks=20", "--set", "n_days=60", "--set", "headlines_per_day=20",
    ]);
    assert_eq!(code, 0);
    dir.join("config.toml")
}

struct Run {
    _dir: TempDir,
    root: PathBuf,
    config: String,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        let config = synth(&root).display().to_string();
        Self { _dir: dir, root, config }
    }

    fn stage(&self, stage: &str, extra: &[&str]) -> i32 {
        let mut args = vec![stage, "--config", &self.config, "--set", "models.kinds=[\"nbc\",\"rnn-static\"]"];
        args.extend_from_slice(extra);
        newsflow(&args)
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.root.join("run").join(rel)
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let run = Run::new();
    for stage in ["label", "train", "score", "eval", "backtest"] {
        assert_eq!(run.stage(stage, &[]), 0, "{stage}");
        assert!(run.out(&format!("manifests/{stage}.json")).exists());
    }
    assert!(run.out("models/nbc/window_000.csv").exists());
    assert!(run.out("models/rnn-static/window_001.rnn").exists());
    assert!(run.out("scores/rnn-static/window_000.csv").exists());
    let summary = fs::read_to_string(run.out("backtest/summary.csv")).unwrap();
    assert!(summary.starts_with('#'));
    // 2 models x 2 strategies x {gross, net} plus the index row
    assert_eq!(csv_rows(&run.out("backtest/summary.csv")).len(), 9);
}

#[test]
fn training_split_is_thirty_percent_labeled() {
    let run = Run::new();
    assert_eq!(run.stage("label", &[]), 0);
    let rows = csv_rows(&run.out("labels/window_000.csv"));
    let header = fs::read_to_string(run.out("labels/window_000.csv")).unwrap();
    let cols: Vec<&str> = header.lines().next().unwrap().split(',').collect();
    let split = cols.iter().position(|c| *c == "split").unwrap();
    let label = cols.iter().position(|c| *c == "label").unwrap();
    let train: Vec<_> = rows.iter().filter(|r| r[split] == "train").collect();
    let k = (0.15 * train.len() as f64).ceil() as usize;
    assert_eq!(train.iter().filter(|r| r[label] == "1").count(), k);
    assert_eq!(train.iter().filter(|r| r[label] == "0").count(), k);
    assert!(rows.iter().filter(|r| r[split] != "train").all(|r| r[label] != "excluded"));
}

#[test]
fn eval_grid_override_gives_one_row_per_level() {
    let run = Run::new();
    for stage in ["label", "train", "score"] {
        assert_eq!(run.stage(stage, &["--set", "models.kinds=[\"nbc\"]"]), 0);
    }
    assert_eq!(run.stage("eval", &["--set", "models.kinds=[\"nbc\"]", "--set", "eval.grid=[1,2,5,10]"]), 0);
    let rows = csv_rows(&run.out("eval.csv"));
    assert_eq!(rows.len(), 4);
    let sizes: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
    assert!(sizes[3] > 0);
}

#[test]
fn training_is_reproducible() {
    let a = Run::new();
    let b = Run::new();
    for run in [&a, &b] {
        assert_eq!(run.stage("label", &[]), 0);
        assert_eq!(run.stage("train", &[]), 0);
    }
    let ma = fs::read(a.out("manifests/train.json")).unwrap();
    let mb = fs::read(b.out("manifests/train.json")).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(
        fs::read(a.out("models/rnn-static/window_000.rnn")).unwrap(),
        fs::read(b.out("models/rnn-static/window_000.rnn")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let run = Run::new();
    // downstream before upstream
    assert_eq!(run.stage("train", &[]), 4);
    // config errors
    assert_eq!(run.stage("label", &["--set", "labeling.quantile=0.7"]), 2);
    assert_eq!(run.stage("label", &["--set", "labeling.nonsense=1"]), 2);
    assert_eq!(newsflow(&["label", "--config", "/definitely/not/here.toml"]), 2);
    assert_eq!(newsflow(&["frobnicate"]), 2);
    // data errors
    assert_eq!(run.stage("label", &["--set", "data.daily_prices=\"absent.csv\""]), 3);
    // tampered upstream artifact
    assert_eq!(run.stage("label", &[]), 0);
    let labels = run.out("labels/window_000.csv");
    let mut text = fs::read_to_string(&labels).unwrap();
    text.push('\n');
    fs::write(&labels, text).unwrap();
    assert_eq!(run.stage("train", &[]), 4);
}

#[test]
fn changed_input_is_incompatible() {
    let run = Run::new();
    assert_eq!(run.stage("label", &[]), 0);
    let news = run.root.join("news.csv");
    let text = fs::read_to_string(&news).unwrap();
    fs::write(&news, text.replacen("w0", "w1", 1)).unwrap();
    assert_eq!(run.stage("train", &[]), 4);
}

fn write_layer(run: &Run, name: &str, source: EmbeddingSource, layer: u16, noise: f32) -> String {
    let news = parse_news(fs::File::open(run.root.join("news.csv")).unwrap(), NewsFormat::Csv).unwrap();
    let table = load_static_table(std::io::BufReader::new(
        fs::File::open(run.root.join("static_table.txt")).unwrap(),
    ))
    .unwrap();
    let records: Vec<HeadlineEmbedding> = news
        .iter()
        .map(|n| {
            let e = embed_static(n.id, &tokenize(&n.headline), &table, OovPolicy::Zero).unwrap();
            let data = e
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| v + noise * (((i as u64 * 2_654_435_761 + n.id) % 1000) as f32 / 1000.0 - 0.5))
                .collect();
            HeadlineEmbedding::new(n.id, source, layer, e.rows(), e.cols(), data).unwrap()
        })
        .collect();
    let path = run.root.join(name);
    write_embeddings(&records, fs::File::create(&path).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn ablate_layer() {
    let run = Run::new();
    assert_eq!(run.stage("label", &[]), 0);
    let l12 = write_layer(&run, "l12.emb", EmbeddingSource::Tuned, 12, 0.0);
    let l11 = write_layer(&run, "l11.emb", EmbeddingSource::Tuned, 11, 0.5);
    let l10 = write_layer(&run, "l10.emb", EmbeddingSource::Tuned, 10, 1.0);
    assert_eq!(run.stage("ablate-layer", &["--embeddings", &l10, &l12, &l11]), 0);
    let rows = csv_rows(&run.out("ablation.csv"));
    let layers: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(layers, ["12", "11", "10"]);

    let dup = write_layer(&run, "dup.emb", EmbeddingSource::Base, 11, 0.0);
    assert_eq!(run.stage("ablate-layer", &["--embeddings", &l12, &l11, &dup]), 4);
    let flat = write_layer(&run, "static.emb", EmbeddingSource::Static, 0, 0.0);
    assert_eq!(run.stage("ablate-layer", &["--embeddings", &l12, &l11, &flat]), 4);
    assert_eq!(run.stage("ablate-layer", &["--embeddings", &l12, &l11]), 2);
    let missing = run.root.join("nope.emb").display().to_string();
    assert_ne!(run.stage("ablate-layer", &["--embeddings", &l12, &l11, &missing]), 0);
}
