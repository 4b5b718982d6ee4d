use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;

use newsflow_core::backtest::{annualized_return, daily_books, sharpe, simulate, BacktestError, Ledger, Strategy};
use newsflow_core::corpus::{parse_news, NewsFormat};
use newsflow_core::embedding::{load_static_table, read_embeddings, EmbeddingSource};
use newsflow_core::evaluation::{extreme_confusions, write_report, EvalRow};
use newsflow_core::labeling::{read_labeled, write_labeled};
use newsflow_core::synthetic::{generate, SyntheticSpec};
use newsflow_core::workflow::{
    compute_returns, fit_model_with_history, label_window, rolling_windows, timed_scores, Embedder, Example, ModelKind,
    TrainedModel, Window, WorkflowError,
};
use newsflow_core::rnn::EpochStats;
use newsflow_core::{
    ConfusionMatrix, HeadlineEmbedding, LabeledExample, NewsItem, PriceBook, ScoredNews, Split, TradingCalendar,
};

use crate::config::{self, Resolved, RunConfig};
use crate::manifest::Manifest;
use crate::CliError;

/// Per-tail percentile of the headline extreme set (about 1% of test news).
pub const E1_PERCENTILE: f64 = 0.5;

const FILL_NOTE: &str = "positions fill at the close of the signal day";
const DEV_NOTE: &str = "dev split is the last 10% (rounded up) of each training window's trading days";

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn workflow(e: WorkflowError) -> CliError {
    match e {
        WorkflowError::InvalidWindows(_) => CliError::Config(e.to_string()),
        WorkflowError::NoEmbedder(_) => CliError::Config(e.to_string()),
        WorkflowError::MissingEmbedding(_) => CliError::Incompatible(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| data(format!("cannot read {}: {e}", path.display())))
}

fn window_file(i: usize) -> String {
    format!("window_{i:03}")
}

fn labels_rel(i: usize) -> PathBuf {
    Path::new("labels").join(format!("{}.csv", window_file(i)))
}

fn model_rel(kind: ModelKind, i: usize) -> PathBuf {
    Path::new("models")
        .join(kind.to_string())
        .join(format!("{}.{}", window_file(i), kind.artifact_extension()))
}

fn scores_rel(kind: ModelKind, i: usize) -> PathBuf {
    Path::new("scores").join(kind.to_string()).join(format!("{}.csv", window_file(i)))
}

/// Runs `f` over `items` on all cores, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let mut done: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(item) = items.get(i) else { break };
                        local.push((i, f(item)));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, r)| r).collect()
}

struct Corpus {
    news: Vec<NewsItem>,
    prices: PriceBook,
    calendar: TradingCalendar,
}

impl Corpus {
    fn trading_dates(&self, market: &str) -> Result<Vec<NaiveDate>, CliError> {
        let series = self
            .prices
            .get(market)
            .ok_or_else(|| data(format!("no price coverage: market series `{market}` is absent")))?;
        let dates: BTreeSet<NaiveDate> = series.daily_closes.iter().map(|&(d, _)| d).collect();
        Ok(dates.into_iter().collect())
    }
}

fn load_news(cfg: &Resolved, m: &mut Manifest) -> Result<Vec<NewsItem>, CliError> {
    let path = cfg.path(&cfg.raw.data.news);
    let news = parse_news(open(&path)?, NewsFormat::from_path(&path)).map_err(data)?;
    m.input(&cfg.raw.data.news, &path)?;
    Ok(news)
}

fn load_calendar(cfg: &Resolved, m: &mut Manifest) -> Result<TradingCalendar, CliError> {
    match &cfg.raw.data.calendar {
        None => Ok(TradingCalendar::european()),
        Some(rel) => {
            let path = cfg.path(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
            m.input(rel, &path)?;
            TradingCalendar::parse(&text).map_err(data)
        }
    }
}

fn load_prices(cfg: &Resolved, m: &mut Manifest) -> Result<PriceBook, CliError> {
    let d = &cfg.raw.data;
    let daily_path = cfg.path(&d.daily_prices);
    let daily = File::open(&daily_path)
        .map_err(|e| data(format!("no price coverage: cannot read {}: {e}", daily_path.display())))?;
    m.input(&d.daily_prices, &daily_path)?;
    let minute = match &d.minute_prices {
        Some(rel) => {
            let path = cfg.path(rel);
            let f = File::open(&path)
                .map_err(|e| data(format!("no price coverage: cannot read {}: {e}", path.display())))?;
            m.input(rel, &path)?;
            Some(BufReader::new(f))
        }
        None => None,
    };
    PriceBook::from_csv(BufReader::new(daily), minute).map_err(data)
}

fn load_corpus(cfg: &Resolved, m: &mut Manifest) -> Result<Corpus, CliError> {
    Ok(Corpus {
        news: load_news(cfg, m)?,
        prices: load_prices(cfg, m)?,
        calendar: load_calendar(cfg, m)?,
    })
}

fn write_windows(path: &Path, windows: &[Window]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["window", "train_start", "dev_start", "test_start", "test_end"])
        .map_err(data)?;
    for win in windows {
        w.write_record([
            win.index.to_string(),
            win.train_start.to_string(),
            win.dev_start.to_string(),
            win.test_start.to_string(),
            win.test_end.to_string(),
        ])
        .map_err(data)?;
    }
    w.flush()?;
    Ok(())
}

fn read_windows(path: &Path) -> Result<Vec<Window>, CliError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(data)?;
        let date = |i: usize| -> Result<NaiveDate, CliError> {
            rec.get(i)
                .unwrap_or_default()
                .parse()
                .map_err(|e| data(format!("{}: {e}", path.display())))
        };
        out.push(Window {
            index: rec.get(0).unwrap_or_default().parse().map_err(data)?,
            train_start: date(1)?,
            dev_start: date(2)?,
            test_start: date(3)?,
            test_end: date(4)?,
        });
    }
    Ok(out)
}

struct LabeledRun {
    windows: Vec<Window>,
    labels: Vec<Vec<LabeledExample>>,
}

fn load_labels(out: &Path) -> Result<(Manifest, LabeledRun), CliError> {
    let m = Manifest::read_verified(out, "label")?;
    let windows = read_windows(&out.join("labels/windows.csv"))?;
    let labels = windows
        .iter()
        .map(|w| read_labeled(open(&out.join(labels_rel(w.index)))?).map_err(data))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((m, LabeledRun { windows, labels }))
}

/// `label`: forward returns, rolling windows and per-window label files.
pub fn cmd_label(cfg: &Resolved) -> Result<Manifest, CliError> {
    let out = cfg.out();
    let mut m = Manifest::new("label", &cfg.raw)?;
    let corpus = load_corpus(cfg, &mut m)?;
    let market = &cfg.raw.data.market;
    let dates = corpus.trading_dates(market)?;
    let windows = rolling_windows(&dates, &cfg.windows).map_err(workflow)?;
    let (returns, skipped) =
        compute_returns(&corpus.news, &corpus.prices, market, &corpus.calendar, &cfg.horizon).map_err(workflow)?;
    if returns.is_empty() {
        return Err(data("no price coverage for any headline"));
    }
    write_windows(&out.join("labels/windows.csv"), &windows)?;
    m.output(&out, Path::new("labels/windows.csv"))?;
    for w in &windows {
        let rows = label_window(w, &returns, cfg.quantile).map_err(workflow)?;
        let rel = labels_rel(w.index);
        let mut sink = create(&out.join(&rel))?;
        write_labeled(&rows, &mut sink).map_err(data)?;
        sink.flush()?;
        m.output(&out, &rel)?;
    }
    m.note("headlines", corpus.news.len());
    m.note("skipped_no_price_coverage", skipped);
    m.note("windows", windows.len());
    m.note("dev_split", DEV_NOTE);
    m.write(&out)?;
    Ok(m)
}

fn embedder_for(cfg: &Resolved, kind: ModelKind, m: &mut Manifest) -> Result<Option<Embedder>, CliError> {
    match kind {
        ModelKind::Nbc | ModelKind::Ssestm => Ok(None),
        ModelKind::RnnStatic => {
            let rel = cfg
                .raw
                .data
                .static_table
                .as_ref()
                .ok_or_else(|| CliError::Config("rnn-static needs data.static_table".into()))?;
            let path = cfg.path(rel);
            let table = load_static_table(open(&path)?).map_err(data)?;
            m.input(rel, &path)?;
            Ok(Some(Embedder::Static { table, oov: cfg.oov }))
        }
        ModelKind::RnnContextual => {
            let rel = cfg
                .raw
                .data
                .embeddings
                .as_ref()
                .ok_or_else(|| CliError::Config("rnn-contextual needs data.embeddings".into()))?;
            let path = cfg.path(rel);
            let e = load_contextual(&path)?;
            m.input(rel, &path)?;
            Ok(Some(e.1))
        }
    }
}

fn load_contextual(path: &Path) -> Result<(u16, Embedder), CliError> {
    let (header, records) = read_embeddings(open(path)?).map_err(data)?;
    if header.source == EmbeddingSource::Static {
        return Err(CliError::Incompatible(format!(
            "{} holds static embeddings; contextual ones are required",
            path.display()
        )));
    }
    let map: HashMap<u64, HeadlineEmbedding> = records.into_iter().map(|r| (r.news_id, r)).collect();
    Ok((header.layer, Embedder::Precomputed(map)))
}

fn examples<'a>(
    rows: &'a [LabeledExample],
    by_id: &HashMap<u64, &'a NewsItem>,
    split: Split,
) -> Result<Vec<Example<'a>>, CliError> {
    rows.iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let item = by_id
                .get(&r.news_id)
                .ok_or_else(|| CliError::Incompatible(format!("labeled news {} is not in the corpus", r.news_id)))?;
            Ok(Example { item, label: r })
        })
        .collect()
}

fn fit_window(
    cfg: &Resolved,
    kind: ModelKind,
    rows: &[LabeledExample],
    by_id: &HashMap<u64, &NewsItem>,
    embedder: Option<&Embedder>,
) -> Result<(TrainedModel, Vec<EpochStats>), CliError> {
    let train = examples(rows, by_id, Split::Train)?;
    let dev = examples(rows, by_id, Split::Dev)?;
    fit_model_with_history(kind, &cfg.params, &train, &dev, embedder).map_err(workflow)
}

fn write_history(path: &Path, history: &[EpochStats]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["epoch", "train_loss", "dev_loss"]).map_err(data)?;
    for h in history {
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), h.dev_loss.to_string()])
            .map_err(data)?;
    }
    w.flush()?;
    Ok(())
}

/// `train`: one model per (kind, window).
pub fn cmd_train(cfg: &Resolved) -> Result<Manifest, CliError> {
    let out = cfg.out();
    let (upstream, run) = load_labels(&out)?;
    let mut m = Manifest::new("train", &cfg.raw)?;
    let news = load_news(cfg, &mut m)?;
    let by_id: HashMap<u64, &NewsItem> = news.iter().map(|n| (n.id, n)).collect();
    let mut embedders = BTreeMap::new();
    for &kind in &cfg.models {
        embedders.insert(kind, embedder_for(cfg, kind, &mut m)?);
    }
    m.check_inputs_against(&upstream)?;
    let jobs: Vec<(ModelKind, usize)> = cfg
        .models
        .iter()
        .flat_map(|&k| (0..run.windows.len()).map(move |w| (k, w)))
        .collect();
    let fitted = parallel_map(&jobs, |&(kind, w)| {
        fit_window(cfg, kind, &run.labels[w], &by_id, embedders[&kind].as_ref())
    });
    for (&(kind, w), model) in jobs.iter().zip(fitted) {
        let rel = model_rel(kind, run.windows[w].index);
        let (model, history) = model?;
        let mut sink = create(&out.join(&rel))?;
        model.write(&mut sink).map_err(workflow)?;
        sink.flush()?;
        m.output(&out, &rel)?;
        if !history.is_empty() {
            let rel = rel.with_extension("history.csv");
            write_history(&out.join(&rel), &history)?;
            m.output(&out, &rel)?;
        }
    }
    m.write(&out)?;
    Ok(m)
}

fn write_scores(path: &Path, rows: &[(u64, Split, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["news_id", "split", "p_plus", "score"]).map_err(data)?;
    for &(id, split, p) in rows {
        let s = ScoredNews::new(id, p).map_err(data)?;
        w.write_record([id.to_string(), split.to_string(), p.to_string(), s.score.to_string()])
            .map_err(data)?;
    }
    w.flush()?;
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<(Split, ScoredNews)>, CliError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    if r.headers().map_err(data)?.iter().ne(["news_id", "split", "p_plus", "score"]) {
        return Err(CliError::Incompatible(format!("{}: unexpected score header", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(data)?;
        let bad = |e: String| data(format!("{}: {e}", path.display()));
        let id: u64 = rec[0].parse().map_err(|e| bad(format!("{e}")))?;
        let split: Split = rec[1].parse().map_err(|e: String| bad(e))?;
        let p: f64 = rec[2].parse().map_err(|e| bad(format!("{e}")))?;
        out.push((split, ScoredNews::new(id, p).map_err(data)?));
    }
    Ok(out)
}

/// `score`: scores every labeled headline of each window with its model.
pub fn cmd_score(cfg: &Resolved) -> Result<Manifest, CliError> {
    let out = cfg.out();
    let (_, run) = load_labels(&out)?;
    let trained = Manifest::read_verified(&out, "train")?;
    let mut m = Manifest::new("score", &cfg.raw)?;
    let news = load_news(cfg, &mut m)?;
    let by_id: HashMap<u64, &NewsItem> = news.iter().map(|n| (n.id, n)).collect();
    let mut embedders = BTreeMap::new();
    for &kind in &cfg.models {
        embedders.insert(kind, embedder_for(cfg, kind, &mut m)?);
    }
    m.check_inputs_against(&trained)?;
    let jobs: Vec<(ModelKind, usize)> = cfg
        .models
        .iter()
        .flat_map(|&k| (0..run.windows.len()).map(move |w| (k, w)))
        .collect();
    let scored = parallel_map(&jobs, |&(kind, w)| -> Result<Vec<(u64, Split, f64)>, CliError> {
        let rel = model_rel(kind, run.windows[w].index);
        if !trained.outputs.iter().any(|f| Path::new(&f.path) == rel) {
            return Err(CliError::Incompatible(format!("no trained {kind} model for window {w}")));
        }
        let model = TrainedModel::read(kind, open(&out.join(&rel))?).map_err(|e| CliError::Incompatible(e.to_string()))?;
        run.labels[w]
            .iter()
            .map(|r| {
                let item = by_id
                    .get(&r.news_id)
                    .ok_or_else(|| CliError::Incompatible(format!("labeled news {} is not in the corpus", r.news_id)))?;
                let p = model.p_plus(item, embedders[&kind].as_ref()).map_err(workflow)?;
                Ok((r.news_id, r.split, p))
            })
            .collect()
    });
    for (&(kind, w), rows) in jobs.iter().zip(scored) {
        let rel = scores_rel(kind, run.windows[w].index);
        write_scores(&out.join(&rel), &rows?)?;
        m.output(&out, &rel)?;
    }
    m.write(&out)?;
    Ok(m)
}

/// Test-set confusion matrices per grid percentile for one model and
/// window; thresholds come from the window's train and dev scores.
fn window_confusions(
    scores: &[(Split, ScoredNews)],
    labels: &[LabeledExample],
    grid: &[f64],
) -> Result<Vec<(f64, ConfusionMatrix)>, CliError> {
    let truth: HashMap<u64, bool> = labels
        .iter()
        .filter(|r| r.split == Split::Test)
        .filter_map(|r| r.label.is_positive().map(|y| (r.news_id, y)))
        .collect();
    let train: Vec<f64> = scores
        .iter()
        .filter(|(s, _)| *s != Split::Test)
        .map(|(_, p)| p.score)
        .collect();
    let mut test = Vec::new();
    let mut y = Vec::new();
    for (split, p) in scores {
        if *split == Split::Test {
            let label = truth
                .get(&p.news_id)
                .ok_or_else(|| CliError::Incompatible(format!("scored news {} has no test label", p.news_id)))?;
            test.push(*p);
            y.push((p.news_id, *label));
        }
    }
    extreme_confusions(&train, &test, &y, grid).map_err(data)
}

fn load_scores(out: &Path, kind: ModelKind, w: &Window, scored: &Manifest) -> Result<Vec<(Split, ScoredNews)>, CliError> {
    let rel = scores_rel(kind, w.index);
    if !scored.outputs.iter().any(|f| Path::new(&f.path) == rel) {
        return Err(CliError::Incompatible(format!("no {kind} scores for window {}", w.index)));
    }
    read_scores(&out.join(rel))
}

/// `eval`: extreme-set accuracy and MCC per model, pooled over windows.
pub fn cmd_eval(cfg: &Resolved) -> Result<Manifest, CliError> {
    let out = cfg.out();
    let (_, run) = load_labels(&out)?;
    let scored = Manifest::read_verified(&out, "score")?;
    let mut m = Manifest::new("eval", &cfg.raw)?;
    let mut pooled_rows = Vec::new();
    let mut per_window = csv::Writer::from_writer(create(&out.join("eval_windows.csv"))?);
    per_window
        .write_record(["window", "model", "n", "set_size", "accuracy", "mcc"])
        .map_err(data)?;
    for &kind in &cfg.models {
        let mut pooled = vec![ConfusionMatrix::default(); cfg.grid.len()];
        for (w, labels) in run.windows.iter().zip(&run.labels) {
            let scores = load_scores(&out, kind, w, &scored)?;
            for (i, (n, cm)) in window_confusions(&scores, labels, &cfg.grid)?.iter().enumerate() {
                pooled[i].merge(cm);
                let row = EvalRow::from_confusion(&kind.to_string(), *n, cm);
                per_window
                    .write_record([
                        w.index.to_string(),
                        row.model,
                        row.n.to_string(),
                        row.set_size.to_string(),
                        row.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                        row.mcc.to_string(),
                    ])
                    .map_err(data)?;
            }
        }
        for (n, cm) in cfg.grid.iter().zip(&pooled) {
            pooled_rows.push(EvalRow::from_confusion(&kind.to_string(), *n, cm));
        }
    }
    per_window.flush()?;
    drop(per_window);
    let mut sink = create(&out.join("eval.csv"))?;
    write_report(&pooled_rows, &mut sink)?;
    sink.flush()?;
    m.output(&out, Path::new("eval.csv"))?;
    m.output(&out, Path::new("eval_windows.csv"))?;
    m.write(&out)?;
    Ok(m)
}

fn ledger_rel(kind: ModelKind, s: Strategy, suffix: &str) -> PathBuf {
    Path::new("backtest").join(format!("{kind}_{s}_{suffix}.csv"))
}

fn fmt_metric(r: Result<f64, BacktestError>) -> String {
    r.map(|v| v.to_string()).unwrap_or_default()
}

/// `backtest`: S1/S2 ledgers on the test-period scores, with and without
/// costs, and a summary table.
pub fn cmd_backtest(cfg: &Resolved) -> Result<Manifest, CliError> {
    let out = cfg.out();
    let (_, run) = load_labels(&out)?;
    let scored = Manifest::read_verified(&out, "score")?;
    let mut m = Manifest::new("backtest", &cfg.raw)?;
    let corpus = load_corpus(cfg, &mut m)?;
    let market = &cfg.raw.data.market;
    let all_dates = corpus.trading_dates(market)?;
    let dates: Vec<NaiveDate> = all_dates
        .iter()
        .copied()
        .filter(|&d| run.windows.iter().any(|w| w.test_start <= d && d <= w.test_end))
        .collect();
    if dates.is_empty() {
        return Err(data("no test-period trading days"));
    }
    let mut summary = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(create(&out.join("backtest/summary.csv"))?);
    summary.write_record([format!("# {FILL_NOTE}")]).map_err(data)?;
    summary
        .write_record(["model", "strategy", "costs", "annualized_return", "sharpe"])
        .map_err(data)?;
    let d = cfg.strategy.trading_days;
    for &kind in &cfg.models {
        // a later window's score supersedes an earlier one for the same headline
        let mut latest: BTreeMap<u64, f64> = BTreeMap::new();
        for w in &run.windows {
            for (split, s) in load_scores(&out, kind, w, &scored)? {
                if split == Split::Test {
                    latest.insert(s.news_id, s.score);
                }
            }
        }
        let flat: Vec<(u64, f64)> = latest.into_iter().collect();
        let timed = timed_scores(&corpus.news, &flat);
        for &strategy in &cfg.strategies {
            let books = daily_books(&timed, &dates, &corpus.calendar, &cfg.strategy, strategy);
            let net = simulate(&books, &corpus.prices, &cfg.strategy, true).map_err(data)?;
            let gross = simulate(&books, &corpus.prices, &cfg.strategy, false).map_err(data)?;
            for (ledger, suffix, costs) in [(&net, "ledger", "yes"), (&gross, "ledger_gross", "no")] {
                let rel = ledger_rel(kind, strategy, suffix);
                write_ledger(&out.join(&rel), ledger, false)?;
                m.output(&out, &rel)?;
                let r = ledger.returns();
                summary
                    .write_record([
                        kind.to_string(),
                        strategy.to_string(),
                        costs.to_string(),
                        fmt_metric(annualized_return(&r, d)),
                        fmt_metric(sharpe(&r, d)),
                    ])
                    .map_err(data)?;
            }
            let rel = ledger_rel(kind, strategy, "cumulative");
            write_ledger(&out.join(&rel), &net, true)?;
            m.output(&out, &rel)?;
        }
    }
    // buy-and-hold index over the same days, for reference
    let index = corpus.prices.get(market).expect("checked by trading_dates");
    let closes: Vec<f64> = dates.iter().filter_map(|&d| index.close_on(d)).collect();
    let index_returns: Vec<f64> = closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    summary
        .write_record([
            "index".to_string(),
            market.clone(),
            "no".to_string(),
            fmt_metric(annualized_return(&index_returns, d)),
            fmt_metric(sharpe(&index_returns, d)),
        ])
        .map_err(data)?;
    summary.flush()?;
    drop(summary);
    m.output(&out, Path::new("backtest/summary.csv"))?;
    m.note("fill", FILL_NOTE);
    m.write(&out)?;
    Ok(m)
}

fn write_ledger(path: &Path, ledger: &Ledger, cumulative: bool) -> Result<(), CliError> {
    let mut sink = create(path)?;
    if cumulative {
        ledger.write_cumulative_csv(&mut sink)?;
    } else {
        ledger.write_csv(&mut sink)?;
    }
    sink.flush()?;
    Ok(())
}

/// One row of the layer-ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub layer: u16,
    pub set_size: u64,
    pub accuracy: Option<f64>,
}

/// `ablate-layer`: one contextual RNN per embedding file, compared on the
/// pooled E_1 accuracy.
pub fn cmd_ablate_layer(cfg: &Resolved, files: &[PathBuf]) -> Result<(Manifest, Vec<AblationRow>), CliError> {
    if files.len() != 3 {
        return Err(CliError::Config(format!(
            "ablate-layer takes three embedding files, got {}",
            files.len()
        )));
    }
    let out = cfg.out();
    let (upstream, run) = load_labels(&out)?;
    let mut m = Manifest::new("ablate-layer", &cfg.raw)?;
    let news = load_news(cfg, &mut m)?;
    m.check_inputs_against(&upstream)?;
    let by_id: HashMap<u64, &NewsItem> = news.iter().map(|n| (n.id, n)).collect();
    let mut sources = Vec::new();
    for f in files {
        let (layer, embedder) = load_contextual(f)?;
        if sources.iter().any(|(l, _)| *l == layer) {
            return Err(CliError::Incompatible(format!("layer tag {layer} appears twice")));
        }
        m.input(f, f)?;
        sources.push((layer, embedder));
    }
    let jobs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..run.windows.len()).map(move |w| (s, w)))
        .collect();
    let results = parallel_map(&jobs, |&(s, w)| -> Result<ConfusionMatrix, CliError> {
        let embedder = &sources[s].1;
        let rows = &run.labels[w];
        let (model, _) = fit_window(cfg, ModelKind::RnnContextual, rows, &by_id, Some(embedder))?;
        let mut scores = Vec::with_capacity(rows.len());
        for r in rows {
            let item = by_id[&r.news_id];
            let p = model.p_plus(item, Some(embedder)).map_err(workflow)?;
            scores.push((r.split, ScoredNews::new(r.news_id, p).map_err(data)?));
        }
        Ok(window_confusions(&scores, rows, &[E1_PERCENTILE])?[0].1)
    });
    let mut pooled = vec![ConfusionMatrix::default(); sources.len()];
    for (&(s, _), cm) in jobs.iter().zip(results) {
        pooled[s].merge(&cm?);
    }
    let mut table: Vec<AblationRow> = sources
        .iter()
        .zip(&pooled)
        .map(|((layer, _), cm)| AblationRow {
            layer: *layer,
            set_size: cm.total(),
            accuracy: newsflow_core::evaluation::accuracy(cm).ok(),
        })
        .collect();
    table.sort_by_key(|r| std::cmp::Reverse(r.layer));
    let mut w = csv::Writer::from_writer(create(&out.join("ablation.csv"))?);
    w.write_record(["layer", "set_size", "accuracy"]).map_err(data)?;
    for row in &table {
        w.write_record([
            row.layer.to_string(),
            row.set_size.to_string(),
            row.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ])
        .map_err(data)?;
    }
    w.flush()?;
    drop(w);
    m.output(&out, Path::new("ablation.csv"))?;
    m.write(&out)?;
    Ok((m, table))
}

/// Window spec that splits `n_days` into two rolling windows.
fn synthetic_windows(n_days: usize) -> (usize, usize) {
    let test = (n_days / 5).max(1);
    (n_days.saturating_sub(2 * test).max(2), test)
}

pub fn load_spec(path: Option<&Path>, overrides: &[String]) -> Result<SyntheticSpec, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        config::apply_override(&mut table, o)?;
    }
    let spec: SyntheticSpec = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// `synth`: writes a planted-signal corpus and a run config for it.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<Manifest, CliError> {
    let corpus = generate(spec).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    let mut m = Manifest::new("synth", spec)?;
    let mut write = |name: &str, f: &mut dyn FnMut(&mut BufWriter<File>) -> Result<(), CliError>| {
        let mut sink = create(&out.join(name))?;
        f(&mut sink)?;
        sink.flush()?;
        m.output(out, Path::new(name))
    };
    write("news.csv", &mut |s| {
        newsflow_core::corpus::write_news(&corpus.news, s, NewsFormat::Csv).map_err(data)
    })?;
    write("daily.csv", &mut |s| {
        newsflow_core::corpus::write_daily_closes(&corpus.prices, s).map_err(data)
    })?;
    write("minute.csv", &mut |s| {
        newsflow_core::corpus::write_minute_bars(&corpus.prices, s).map_err(data)
    })?;
    write("calendar.txt", &mut |s| Ok(s.write_all(corpus.calendar.to_text().as_bytes())?))?;
    write("static_table.txt", &mut |s| {
        newsflow_core::embedding::write_static_table(&corpus.table, s).map_err(data)
    })?;
    write("spec.toml", &mut |s| {
        let text = toml::to_string(spec).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s.write_all(text.as_bytes())?)
    })?;
    let mut run = RunConfig::default();
    run.data.news = "news.csv".into();
    run.data.daily_prices = "daily.csv".into();
    run.data.minute_prices = Some("minute.csv".into());
    run.data.calendar = Some("calendar.txt".into());
    run.data.static_table = Some("static_table.txt".into());
    run.data.market = spec.market.clone();
    let (train, test) = synthetic_windows(spec.n_days);
    run.windows.train_days = train;
    run.windows.test_days = test;
    run.windows.step_days = test;
    write("config.toml", &mut |s| {
        let text = toml::to_string(&run).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s.write_all(text.as_bytes())?)
    })?;
    m.note("headlines", corpus.news.len());
    m.write(out)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..97).collect();
        assert_eq!(parallel_map(&items, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(parallel_map(&Vec::<u8>::new(), |x| *x).is_empty());
    }

    #[test]
    fn synthetic_windows_fit() {
        for n in [2, 5, 10, 60, 520] {
            let (train, test) = synthetic_windows(n);
            assert!(train >= 2 && test >= 1);
            assert!(n < 5 || train + 2 * test == n, "{n}");
        }
    }
}
