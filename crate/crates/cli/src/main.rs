use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aurascreen::chem::{parse_smiles, read_library, Descriptors};
use aurascreen::cluster::write_prior_index;
use aurascreen::fingerprint::{ecfp, read_cache, write_cache, DEFAULT_RADIUS, DEFAULT_WIDTH};
use aurascreen::harness::{
    generate_world, run_enrichment_to, run_head_experiment_to, EnrichmentConfig, HeadExperimentConfig, Manifest,
    WorldConfig,
};
use aurascreen::metrics::evaluate;
use aurascreen::screening::{
    cluster_library, index_from_clusters, prepare_compounds, rank_scores, run_with_inputs, stage1_scores, write_report,
    CampaignConfig, CampaignInputs, ScreenReport,
};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

/// Hierarchical virtual screening at desk scale.
#[derive(Parser)]
#[command(name = "aurascreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full screen: student triage, teacher rescoring, filters, report.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a library and print descriptors as CSV.
    Parse {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fingerprint a library into an AFP1 cache.
    Fp {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WIDTH)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: usize,
    },
    /// Cluster the campaign library and build its prior index.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the student on a synthetic world and evaluate it on the held-out part.
    TrainStudent {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune the teacher's affinity head on a synthetic world.
    TrainHead {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Student scores for the whole campaign library, best first.
    Screen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enrichment, AUPR and AUROC of a score file against labels.
    Eval {
        /// CSV with `id` and `score` columns.
        #[arg(long)]
        scores: PathBuf,
        /// CSV with `id` and `active` (or `label`) columns holding 0/1 or true/false.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05")]
        fractions: Vec<f64>,
    },
    /// Re-render shortlist and distribution CSVs from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shortlist rows to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write a synthetic library, protein embedding, labels and campaign config.
    World {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        size: usize,
        #[arg(long, default_value_t = 0.01)]
        active_fraction: f64,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Campaign { config, out } => campaign(&config, out),
        Command::Parse { library, out } => parse(&library, out.as_deref()),
        Command::Fp { library, out, width, radius } => fingerprints(&library, &out, width, radius),
        Command::Cluster { config, out } => cluster(&config, &out),
        Command::TrainStudent { config, out } => {
            let cfg: EnrichmentConfig = read_json_or_default(config.as_deref())?;
            let r = run_enrichment_to(&cfg, &out)?;
            emit(format_args!(
                "held-out {}: EF1% {:.2}, AUPR {:.4}, AUROC {:.4}; final loss {:.4}",
                r.n_heldout,
                r.ef1,
                r.aupr,
                r.auroc,
                r.curve.last().copied().unwrap_or(f64::NAN)
            ))?;
            Ok(())
        }
        Command::TrainHead { config, out } => {
            let cfg: HeadExperimentConfig = read_json_or_default(config.as_deref())?;
            let r = run_head_experiment_to(&cfg, &out)?;
            emit(format_args!(
                "{:?}: metric {:.4} -> {:.4} over {} epochs",
                r.objective,
                r.initial_metric,
                r.final_metric,
                r.curve.len() - 1
            ))?;
            Ok(())
        }
        Command::Screen { config, out } => screen(&config, &out),
        Command::Eval { scores, labels, fractions } => eval(&scores, &labels, &fractions),
        Command::Report { input, out, top } => report(&input, out.as_deref(), top),
        Command::World { out, seed, size, active_fraction } => world(&out, seed, size, active_fraction),
    }
}

/// Writes a line to stdout. A closed pipe (e.g. `| head`) ends output quietly.
fn emit(line: std::fmt::Arguments) -> Result<()> {
    match writeln!(io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_library(path: &Path) -> Result<Vec<aurascreen::chem::LibraryRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_library(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Manifest whose hash matches the one in the report, so worker count and
/// output location do not change it.
fn campaign_manifest(command: &str, config: &CampaignConfig) -> Result<Manifest> {
    let mut m = Manifest::new(command, config.seed, config)?;
    m.config_hash = config.hash();
    Ok(m)
}

fn campaign(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let config = CampaignConfig::from_path(config_path)?;
    let dir = out.or_else(|| config.output_dir.clone()).context("no --out given and no output_dir in the config")?;
    let inputs = CampaignInputs::load(&config)?;
    let (report, timings) = run_with_inputs(&config, &inputs)?;
    write_report(&dir, &report, &timings)?;
    let mut manifest = campaign_manifest("campaign", &config)?;
    for name in ["report.json", "shortlist.csv", "score_distribution.csv"] {
        manifest.add_output(&dir, name)?;
    }
    manifest.write(&dir)?;
    let m = &report.metadata;
    emit(format_args!(
        "{}: {} compounds scored ({} skipped), {} after stage 2, {} shortlisted; stage 1 at {:.0} compounds/s",
        m.target_id,
        m.scored,
        m.skipped,
        report.stage2.len(),
        report.shortlist.len(),
        timings.stage1_compounds_per_s
    ))?;
    emit(format_args!("report written to {}", dir.display()))?;
    Ok(())
}

fn parse(library: &Path, out: Option<&Path>) -> Result<()> {
    let records = load_library(library)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "id",
        "smiles",
        "heavy_atoms",
        "mw",
        "clogp",
        "hbd",
        "hba",
        "rotatable_bonds",
        "rings",
        "esol_logs",
        "fragments",
        "valence_ok",
    ])?;
    let mut failed = 0;
    for r in &records {
        let mol = match parse_smiles(&r.smiles) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("{}: {e}", r.id);
                failed += 1;
                continue;
            }
        };
        let d = Descriptors::compute(&mol);
        w.write_record([
            r.id.clone(),
            r.smiles.clone(),
            d.heavy_atoms.to_string(),
            format!("{:.3}", d.molecular_weight),
            format!("{:.3}", d.clogp),
            d.hbd.to_string(),
            d.hba.to_string(),
            d.rotatable_bonds.to_string(),
            d.rings.to_string(),
            format!("{:.3}", d.esol_logs),
            d.fragments.to_string(),
            mol.is_valid().to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!("{} parsed, {failed} failed", records.len() - failed);
    Ok(())
}

fn fingerprints(library: &Path, out: &Path, width: usize, radius: usize) -> Result<()> {
    let records = load_library(library)?;
    let mut cache = Vec::with_capacity(records.len());
    for r in &records {
        let fp = parse_smiles(&r.smiles).map_err(anyhow::Error::from).and_then(|m| Ok(ecfp(&m, radius, width)?));
        match fp {
            Ok(fp) => cache.push((r.id.clone(), fp)),
            Err(e) => eprintln!("{}: {e}", r.id),
        }
    }
    let mut w = create(out)?;
    write_cache(&mut w, &cache)?;
    w.flush()?;
    // Reading back catches truncated writes early.
    let n = read_cache(BufReader::new(File::open(out)?))?.len();
    emit(format_args!("{n} fingerprints ({width} bits, radius {radius}) written to {}", out.display()))?;
    Ok(())
}

fn cluster(config_path: &Path, out: &Path) -> Result<()> {
    let config = CampaignConfig::from_path(config_path)?;
    let inputs = CampaignInputs::load(&config)?;
    let (compounds, skipped) = prepare_compounds(&inputs.library, inputs.student.config.fp_width, config.worker_count);
    let clusters = cluster_library(&compounds, &config)?;
    let index = index_from_clusters(&compounds, &clusters, &inputs.teacher, &inputs.protein, &config)?;
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("clusters.tsv"))?;
    writeln!(w, "# centroid\tsize\tmembers")?;
    for c in &clusters {
        writeln!(w, "{}\t{}\t{}", c.centroid_id, c.len(), c.member_ids.join(","))?;
    }
    w.flush()?;
    let mut w = create(&out.join("prior.idx"))?;
    write_prior_index(&mut w, &index)?;
    w.flush()?;
    let mut manifest = campaign_manifest("cluster", &config)?;
    manifest.add_output(out, "clusters.tsv")?;
    manifest.add_output(out, "prior.idx")?;
    manifest.write(out)?;
    emit(format_args!(
        "{} compounds ({} skipped) in {} clusters; {} centroids in the prior index",
        compounds.len(),
        skipped.len(),
        clusters.len(),
        index.centroids.len()
    ))?;
    Ok(())
}

fn screen(config_path: &Path, out: &Path) -> Result<()> {
    let config = CampaignConfig::from_path(config_path)?;
    let inputs = CampaignInputs::load(&config)?;
    let (compounds, skipped) = prepare_compounds(&inputs.library, inputs.student.config.fp_width, config.worker_count);
    let index = match &inputs.prior_index {
        Some(ix) => ix.clone(),
        None => index_from_clusters(
            &compounds,
            &cluster_library(&compounds, &config)?,
            &inputs.teacher,
            &inputs.protein,
            &config,
        )?,
    };
    let scores = stage1_scores(&compounds, &inputs.student, &inputs.protein, &index, config.worker_count)?;
    let mut scored = Vec::with_capacity(compounds.len());
    for (c, s) in compounds.iter().zip(scores) {
        match s {
            Ok(v) => scored.push((c.id.clone(), v)),
            Err(e) => eprintln!("{}: {e}", c.id),
        }
    }
    for s in &skipped {
        eprintln!("{}: {}", s.id, s.reason);
    }
    let ranked = rank_scores(scored, usize::MAX);
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(create(&out.join("stage1_scores.csv"))?);
    w.write_record(["rank", "id", "score"])?;
    for r in &ranked {
        w.write_record([r.rank.to_string(), r.id.clone(), r.score.to_string()])?;
    }
    w.flush()?;
    drop(w);
    let mut manifest = campaign_manifest("screen", &config)?;
    manifest.add_output(out, "stage1_scores.csv")?;
    manifest.write(out)?;
    emit(format_args!("{} compounds scored, {} skipped", ranked.len(), skipped.len()))?;
    Ok(())
}

fn column(headers: &csv::StringRecord, names: &[&str], path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| names.contains(&h.trim()))
        .with_context(|| format!("{}: no {} column", path.display(), names.join("/")))
}

fn read_column(path: &Path, value_names: &[&str]) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let id = column(&headers, &["id"], path)?;
    let val = column(&headers, value_names, path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((rec[id].trim().to_string(), rec[val].trim().to_string()));
    }
    Ok(out)
}

fn eval(scores: &Path, labels: &Path, fractions: &[f64]) -> Result<()> {
    let labels: HashMap<String, bool> = read_column(labels, &["active", "label"])?
        .into_iter()
        .map(|(id, v)| {
            let b = match v.to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => bail!("label for {id} is {v:?}, expected 0/1 or true/false"),
            };
            Ok((id, b))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for (id, v) in read_column(scores, &["score"])? {
        let s: f64 = v.parse().with_context(|| format!("score for {id} is {v:?}"))?;
        let &active = labels.get(&id).with_context(|| format!("{id} has a score but no label"))?;
        entries.push((s, active));
    }
    if entries.len() != labels.len() {
        bail!("{} labels but {} scores", labels.len(), entries.len());
    }
    let report = evaluate(&entries, fractions)?;
    emit(format_args!("{}", serde_json::to_string_pretty(&report)?))?;
    Ok(())
}

fn report(input: &Path, out: Option<&Path>, top: usize) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report = ScreenReport::from_json(&text)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("shortlist.csv"), report.shortlist_csv()?)?;
        fs::write(dir.join("score_distribution.csv"), report.distribution_csv()?)?;
    }
    let m = &report.metadata;
    emit(format_args!(
        "target {}  library {}  scored {}  config {}",
        m.target_id,
        m.library_size,
        m.scored,
        &m.config_hash[..12]
    ))?;
    let failed = report.verdicts.iter().filter(|v| !v.passed).count();
    emit(format_args!("stage 2 kept {}, {failed} rejected by filters", report.stage2.len()))?;
    emit(format_args!(
        "{:>4}  {:<16} {:>9} {:>9} {:>7} {:>6}  smiles",
        "rank", "id", "stage1", "stage2", "mw", "clogp"
    ))?;
    for e in report.shortlist.iter().take(top) {
        emit(format_args!(
            "{:>4}  {:<16} {:>9.4} {:>9.4} {:>7.1} {:>6.2}  {}",
            e.rank, e.id, e.stage1_score, e.stage2_score, e.descriptors.molecular_weight, e.descriptors.clogp, e.smiles
        ))?;
    }
    Ok(())
}

fn world(out: &Path, seed: u64, size: usize, active_fraction: f64) -> Result<()> {
    let cfg = WorldConfig { seed, size, active_fraction, ..WorldConfig::default() };
    let w = generate_world(cfg);
    w.write_files(out)?;
    let mut labels = csv::Writer::from_writer(create(&out.join("labels.csv"))?);
    labels.write_record(["id", "active", "label"])?;
    for i in 0..w.len() {
        labels.write_record([w.records[i].id.clone(), u8::from(w.actives[i]).to_string(), w.labels[i].to_string()])?;
    }
    labels.flush()?;
    let mut campaign = CampaignConfig::new(&w.target_id, "protein.emb".into(), "library.tsv".into());
    campaign.known_actives_path = Some("actives.tsv".into());
    campaign.stage1_keep = (size / 10).max(1);
    campaign.stage2_keep = (size / 100).max(1);
    campaign.shortlist_size = campaign.stage2_keep.min(20);
    campaign.student.d_protein = cfg.d_protein;
    campaign.output_dir = Some("report".into());
    fs::write(out.join("campaign.json"), serde_json::to_string_pretty(&campaign)? + "\n")?;
    emit(format_args!(
        "{} compounds, {} planted actives, written to {}",
        w.len(),
        w.actives.iter().filter(|&&a| a).count(),
        out.display()
    ))?;
    Ok(())
}
