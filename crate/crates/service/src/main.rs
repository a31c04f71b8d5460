use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::UNIX_EPOCH;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use formula_scout::eval::{pr_svg, run_eval, split_corpus, write_cases_csv, write_pr_csv, PrPoint, Report, SplitMode};
use formula_scout::grid::{load_workbook, parse_a1, Workbook};
use formula_scout::ooxml::import_ooxml;
use formula_scout::recommend::{index_corpus, predict, Library, PredictContext};
use formula_scout::synth::{synthetic_corpus, SynthConfig};
use formula_scout::training::{train, train_on_corpus};
use formula_scout::weaksup::{augment_pairs, generate_region_pairs, generate_sheet_pairs, SheetNameStats};
use formula_scout_service::artifacts::{
    load_corpus, load_index, load_pairs, read_json, save_index, save_pairs, save_workbooks, write_json, ModelBundle,
    PairManifest,
};
use formula_scout_service::config::ServiceConfig;
use formula_scout_service::http::serve;
use formula_scout_service::state::{PredictResponse, ServiceState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "formula-scout", version, about = "Formula recommendation from similar spreadsheets")]
struct Cli {
    /// Config file; defaults to $FORMULA_SCOUT_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Timestamp,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Converts .xlsx files or dumps into canonical dumps.
    Import {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes the synthetic template-family corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        families: usize,
        #[arg(long, default_value_t = 8)]
        variants: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generates and augments weakly-labelled sheet and region pairs.
    Weaksup {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the coarse and fine models on a pairs directory.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        /// Overrides the corpus recorded in the pairs manifest.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embeds a corpus into sheet and region indexes.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints ranked predictions for one cell as JSON.
    Predict {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        workbook: PathBuf,
        #[arg(long)]
        sheet: String,
        #[arg(long)]
        cell: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Runs the evaluation harness; without --models, trains on the
    /// reference side of the split first.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Comma-separated thresholds for the precision/recall sweep.
        #[arg(long, value_delimiter = ',')]
        theta_grid: Option<Vec<f64>>,
        /// Writes report.json, cases.csv, pr.csv and pr.svg here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Renders the precision/recall curve of a saved report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serves the HTTP API.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn mtime(path: &Path) -> i64 {
    std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs() as i64)
}

fn import_one(path: &Path) -> Result<Workbook> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ext = path.extension().map(|e| e.to_ascii_lowercase());
    let mut wb = match ext.as_ref().and_then(|e| e.to_str()) {
        Some("xlsx" | "xlsm") => import_ooxml(&bytes, &file_stem(path)),
        Some("json") => {
            let mut wb = load_workbook(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            if wb.id.is_empty() {
                wb.id = file_stem(path);
            }
            Ok(wb)
        }
        _ => bail!("{}: expected an .xlsx file or a .json dump", path.display()),
    }
    .with_context(|| format!("importing {}", path.display()))?;
    if wb.last_modified == 0 {
        wb.last_modified = mtime(path);
    }
    Ok(wb)
}

fn import(paths: &[PathBuf], out: &Path) -> Result<()> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    let mut workbooks = Vec::with_capacity(files.len());
    for f in &files {
        workbooks.push(import_one(f)?);
    }
    let mut ids: Vec<&str> = workbooks.iter().map(|w| w.id.as_str()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!("two inputs share the workbook id {:?}", w[0]);
    }
    let n = save_workbooks(out, &workbooks)?;
    print_json(&serde_json::json!({"imported": n, "out": out}))
}

fn weaksup(cfg: &ServiceConfig, corpus_dir: &Path, alpha: Option<f64>, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let alpha = alpha.unwrap_or(cfg.pairs.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {alpha}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pairs.seed);
    let stats = SheetNameStats::from_corpus(&corpus);
    let (mut sp, sheet_counts) = generate_sheet_pairs(&corpus, &stats, alpha, &mut rng)?;
    let (mut rp, region_counts) = generate_region_pairs(&sp, &corpus)?;
    let window = (cfg.model.n_r, cfg.model.n_c);
    augment_pairs(&mut sp, &mut rp, &corpus, window, &cfg.pairs.augment, &mut rng)?;
    let manifest = PairManifest {
        corpus: std::fs::canonicalize(corpus_dir).unwrap_or_else(|_| corpus_dir.to_path_buf()),
        alpha,
        sheet_counts,
        region_counts,
        sheet_pairs: sp.len(),
        region_pairs: rp.len(),
    };
    save_pairs(out, &sp, &rp, &manifest)?;
    print_json(&manifest)
}

fn train_cmd(cfg: &ServiceConfig, pairs: &Path, corpus: Option<&Path>, out: &Path) -> Result<()> {
    let (sp, rp, manifest) = load_pairs(pairs)?;
    let corpus = load_corpus(corpus.unwrap_or(&manifest.corpus))?;
    let fz = cfg.featurizer.build()?;
    let (coarse, fine, log) = train(&corpus, &sp, &rp, &fz, &cfg.model)?;
    let last = log.episodes.last().cloned();
    ModelBundle {
        coarse,
        fine,
        featurizer: cfg.featurizer.clone(),
    }
    .save(out, Some(&log))?;
    print_json(&serde_json::json!({"episodes": log.episodes.len(), "last": last, "out": out}))
}

fn index_cmd(corpus: &Path, models: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let enc = ModelBundle::load(models)?.encoder()?;
    let (indexes, stats) = index_corpus(&corpus, &enc)?;
    save_index(out, &indexes, &Library::new(corpus), &stats)?;
    print_json(&stats)
}

#[allow(clippy::too_many_arguments)]
fn predict_cmd(
    cfg: &ServiceConfig,
    index: &Path,
    models: &Path,
    workbook: &Path,
    sheet: &str,
    cell: &str,
    overrides: (Option<usize>, Option<usize>, Option<f64>, Option<usize>),
) -> Result<()> {
    let enc = ModelBundle::load(models)?.encoder()?;
    let (indexes, library) = load_index(index)?;
    let bytes = std::fs::read(workbook).with_context(|| format!("reading {}", workbook.display()))?;
    let wb = load_workbook(&bytes).with_context(|| format!("parsing {}", workbook.display()))?;
    let target = wb
        .sheet(sheet)
        .with_context(|| format!("workbook {:?} has no sheet {sheet:?}", wb.id))?;
    let addr = parse_a1(cell).with_context(|| format!("bad cell address {cell:?}"))?;
    let mut rc = cfg.recommender.clone();
    let (k, d, theta, top_n) = overrides;
    rc.k = k.unwrap_or(rc.k);
    rc.d = d.unwrap_or(rc.d);
    rc.theta = theta.unwrap_or(rc.theta);
    rc.top_n = top_n.unwrap_or(rc.top_n);
    let ctx = PredictContext {
        indexes: &indexes,
        library: &library,
        encoder: &enc,
        config: &rc,
    };
    let own = Some(wb.id.as_str()).filter(|id| !id.is_empty());
    let predictions = predict(&ctx, target, own, addr)?;
    print_json(&PredictResponse { predictions })
}

fn write_plot(points: &[PrPoint], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut csv = Vec::new();
    write_pr_csv(points, &mut csv)?;
    std::fs::write(out.join("pr.csv"), csv)?;
    std::fs::write(out.join("pr.svg"), pr_svg(points))?;
    Ok(())
}

fn eval_cmd(
    cfg: &ServiceConfig,
    corpus: &Path,
    split: Option<SplitArg>,
    models: Option<&Path>,
    grid: Option<Vec<f64>>,
    out: Option<&Path>,
) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let mut split_cfg = cfg.eval.clone();
    if let Some(s) = split {
        split_cfg.mode = match s {
            SplitArg::Timestamp => SplitMode::Timestamp,
            SplitArg::Random => SplitMode::Random,
        };
    }
    let enc = match models {
        Some(dir) => ModelBundle::load(dir)?.encoder()?,
        None => {
            let reference = split_corpus(&corpus, &split_cfg)?.reference;
            let fz = cfg.featurizer.build()?;
            let t = train_on_corpus(&reference, &fz, &cfg.model, &cfg.pairs)?;
            ModelBundle {
                coarse: t.coarse,
                fine: t.fine,
                featurizer: cfg.featurizer.clone(),
            }
            .encoder()?
        }
    };
    let grid = grid.unwrap_or_else(|| cfg.theta_grid.clone());
    let (report, result) = run_eval(&corpus, &enc, &split_cfg, &cfg.recommender, &grid)?;
    if let Some(out) = out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_json(&out.join("report.json"), &report)?;
        let mut csv = Vec::new();
        write_cases_csv(&result.records, &mut csv)?;
        std::fs::write(out.join("cases.csv"), csv)?;
        write_plot(&report.pr, out)?;
    }
    print_json(&report)
}

async fn serve_cmd(cfg: &ServiceConfig, index: &Path, models: &Path, host: Option<String>, port: Option<u16>) -> Result<()> {
    let enc = ModelBundle::load(models)?.encoder()?;
    let (indexes, library) = load_index(index)?;
    let state = Arc::new(ServiceState::new(indexes, library, Arc::new(enc), cfg.recommender.clone()));
    let addr = format!(
        "{}:{}",
        host.unwrap_or_else(|| cfg.server.host.clone()),
        port.unwrap_or(cfg.server.port)
    );
    serve(state, &addr).await.with_context(|| format!("serving on {addr}"))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ServiceConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Import { paths, out } => import(&paths, &out),
        Command::Synth {
            out,
            families,
            variants,
            seed,
        } => {
            let corpus = synthetic_corpus(&SynthConfig {
                families,
                variants,
                seed,
                ..SynthConfig::default()
            });
            let n = save_workbooks(&out, &corpus)?;
            print_json(&serde_json::json!({"workbooks": n, "out": out}))
        }
        Command::Weaksup { corpus, alpha, out } => weaksup(&cfg, &corpus, alpha, &out),
        Command::Train { pairs, corpus, out } => train_cmd(&cfg, &pairs, corpus.as_deref(), &out),
        Command::Index { corpus, models, out } => index_cmd(&corpus, &models, &out),
        Command::Predict {
            index,
            models,
            workbook,
            sheet,
            cell,
            k,
            d,
            theta,
            top_n,
        } => predict_cmd(&cfg, &index, &models, &workbook, &sheet, &cell, (k, d, theta, top_n)),
        Command::Eval {
            corpus,
            split,
            models,
            theta_grid,
            out,
        } => eval_cmd(&cfg, &corpus, split, models.as_deref(), theta_grid, out.as_deref()),
        Command::Plot { report, out } => {
            let report: Report = read_json(&report)?;
            write_plot(&report.pr, &out)
        }
        Command::Serve {
            index,
            models,
            host,
            port,
        } => tokio::runtime::Runtime::new()?.block_on(serve_cmd(&cfg, &index, &models, host, port)),
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "formula_scout=info,warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
        eprintln!("{}", serde_json::json!({"error": e.to_string(), "causes": causes}));
        std::process::exit(1);
    }
}
