use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbsn_core::coverage::{dedup_venues, extend_coverage, BrandIndex};
use lbsn_core::integrity::{classify_venue, BindLabel};
use lbsn_core::labeling::{estimate_venue_location, label_floorplan, labeling_accuracy};
use lbsn_core::{infer_venue, CheckInObservation, Floorplan, Location, RankerWeights, VenueId, VenueStore};
use lbsn_sim::metrics::ratio;
use lbsn_sim::{generate_mall, replay, Format, GroundTruth, ReplayInput, SimConfig, SimError, SimResult, Trace};

/// Like `println!`, but a closed stdout (as with `| head`) is not an error:
/// the remaining output is dropped and the command still finishes.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                panic!("writing to stdout: {e}");
            }
        }
    }};
}

/// Synthetic mall generation, check-in simulation and venue inference.
#[derive(Debug, Parser)]
#[command(name = "lbsn", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Files {
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    floorplan: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    brands: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ObservationArg {
    /// JSON file holding one check-in observation.
    #[arg(long, conflicts_with = "checkin")]
    observation: Option<PathBuf>,
    /// Take the observation of this check-in from the trace instead.
    #[arg(long)]
    checkin: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a mall: truth.json, floorplan.json, store.json, brands.txt.
    Generate,
    /// Simulate check-ins into trace.jsonl.
    Simulate {
        #[command(flatten)]
        files: Files,
    },
    /// Replay a trace and write metrics.
    Replay {
        #[command(flatten)]
        files: Files,
    },
    /// Print the ranked candidate venues of one observation.
    Rank {
        #[command(flatten)]
        files: Files,
        #[command(flatten)]
        obs: ObservationArg,
    },
    /// Label the logged check-ins of every venue as correct or fake.
    DetectFakes {
        #[command(flatten)]
        files: Files,
    },
    /// Label the floorplan from the correct check-ins of every venue.
    Label {
        #[command(flatten)]
        files: Files,
    },
    /// Create a venue for an observation missing from the store.
    ExtendCoverage {
        #[command(flatten)]
        files: Files,
        #[command(flatten)]
        obs: ObservationArg,
    },
    /// Merge duplicate venues and snap names to brands.
    Dedup {
        #[command(flatten)]
        files: Files,
    },
}

struct Ctx {
    cfg: SimConfig,
    out: PathBuf,
    format: Format,
}

impl Ctx {
    fn path(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(default))
    }

    fn ensure_out(&self) -> SimResult<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> SimResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_store(path: &Path) -> SimResult<VenueStore> {
    Ok(VenueStore::load(path)?)
}

fn load_observation(ctx: &Ctx, files: &Files, arg: &ObservationArg) -> SimResult<CheckInObservation> {
    if let Some(p) = &arg.observation {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        return serde_json::from_str(&text).map_err(|e| SimError::Parse {
            what: p.display().to_string(),
            message: e.to_string(),
        });
    }
    let Some(id) = arg.checkin else {
        return Err(SimError::Config("give --observation or --checkin".into()));
    };
    let trace = Trace::load(ctx.path(&files.trace, "trace.jsonl"))?;
    trace
        .records
        .into_iter()
        .find(|r| r.checkin_id == id)
        .map(|r| r.observation)
        .ok_or_else(|| SimError::Config(format!("no check-in {id} in trace")))
}

fn generate(ctx: &Ctx) -> SimResult<()> {
    ctx.ensure_out()?;
    let mall = generate_mall(&ctx.cfg)?;
    mall.truth.save(ctx.out.join("truth.json"))?;
    mall.floorplan.save(ctx.out.join("floorplan.json"))?;
    mall.store()?.save(ctx.out.join("store.json"))?;
    let mut brands = mall.truth.brands.join("\n");
    brands.push('\n');
    write(&ctx.out.join("brands.txt"), &brands)?;
    out!(
        "generated {} venues ({} in store), {} access points, {} brands",
        mall.truth.venues.len(),
        mall.catalog.catalog.len(),
        mall.truth.aps.len(),
        mall.truth.brands.len()
    );
    Ok(())
}

fn simulate(ctx: &Ctx, files: &Files) -> SimResult<()> {
    let truth = GroundTruth::load(ctx.path(&files.truth, "truth.json"))?;
    let trace = lbsn_sim::simulate_checkins(&truth, &ctx.cfg)?;
    ctx.ensure_out()?;
    let path = ctx.path(&files.trace, "trace.jsonl");
    trace.save(&path)?;
    out!(
        "simulated {} check-ins ({} fake) into {}",
        trace.len(),
        trace.fake_count(),
        path.display()
    );
    Ok(())
}

fn run_replay(ctx: &Ctx, files: &Files) -> SimResult<()> {
    let input = ReplayInput {
        truth: GroundTruth::load(ctx.path(&files.truth, "truth.json"))?,
        floorplan: Floorplan::load(ctx.path(&files.floorplan, "floorplan.json"))?,
        store: load_store(&ctx.path(&files.store, "store.json"))?,
        brands: BrandIndex::load_list(ctx.path(&files.brands, "brands.txt"))?
            .brands
            .into_values()
            .map(|b| b.name)
            .collect(),
    };
    let trace = Trace::load(ctx.path(&files.trace, "trace.jsonl"))?;
    let out = replay(&input, &trace, &ctx.cfg)?;
    let metrics_dir = ctx.out.join("metrics");
    out.report.write(&metrics_dir, ctx.format)?;
    out.store.save(ctx.out.join("store.final.json"))?;
    out.floorplan.save(ctx.out.join("floorplan.labeled.json"))?;
    let mut w = serde_json::to_string_pretty(&out.weights).expect("weights serialize");
    w.push('\n');
    write(&ctx.out.join("weights.json"), &w)?;
    for (k, v) in out.report.summary() {
        out!("{k}\t{v}");
    }
    Ok(())
}

fn rank(ctx: &Ctx, files: &Files, arg: &ObservationArg) -> SimResult<()> {
    let obs = load_observation(ctx, files, arg)?;
    let store = load_store(&ctx.path(&files.store, "store.json"))?;
    let plan = Floorplan::load(ctx.path(&files.floorplan, "floorplan.json"))?;
    let weights = RankerWeights::equal(ctx.cfg.engine.pipeline.enabled_rankers.iter().copied());
    let list = infer_venue(&obs, &store, Some(&plan), &weights, &ctx.cfg.engine)?;
    if list.new_venue {
        out!("new venue");
        return Ok(());
    }
    for (i, (id, score)) in list.entries.iter().enumerate() {
        let name = store.get_venue(id)?.canonical_name();
        out!("{}\t{}\t{:.6}\t{}", i + 1, id, score, name);
    }
    Ok(())
}

fn detect_fakes(ctx: &Ctx, files: &Files) -> SimResult<()> {
    let store_path = ctx.path(&files.store, "store.json");
    let mut store = load_store(&store_path)?;
    let plan = Floorplan::load(ctx.path(&files.floorplan, "floorplan.json"))?;
    let trace = match &files.trace {
        Some(p) => Some(Trace::load(p)?),
        None => None,
    };
    let ids: Vec<VenueId> = store.ids().cloned().collect();
    let snap = ctx.cfg.engine.pipeline.snap_radius_m;
    let mut labels = Vec::new();
    for id in &ids {
        if store.get_venue(id)?.checkin_log.is_empty() {
            continue;
        }
        let res = classify_venue(&mut store, Some(&plan), id, snap, &ctx.cfg.engine.integrity)?;
        for (c, l) in res.labels {
            labels.push((c, id.clone(), l));
        }
    }
    labels.sort_by_key(|l| l.0);
    for (c, v, l) in &labels {
        let l = if *l == BindLabel::Correct { "correct" } else { "fake" };
        out!("{c}\t{v}\t{l}");
    }
    if let Some(trace) = trace {
        let fake: std::collections::BTreeMap<u64, bool> =
            trace.records.iter().map(|r| (r.checkin_id, r.fake)).collect();
        let (mut tp, mut fakes, mut fa, mut honest) = (0, 0, 0, 0);
        for (c, _, l) in &labels {
            let flagged = *l == BindLabel::Fake;
            if fake.get(c).copied().unwrap_or(false) {
                fakes += 1;
                tp += usize::from(flagged);
            } else {
                honest += 1;
                fa += usize::from(flagged);
            }
        }
        out!("detection_prob\t{}", ratio(tp, fakes));
        out!("false_alarm_prob\t{}", ratio(fa, honest));
    }
    store.save(&store_path)?;
    Ok(())
}

fn label(ctx: &Ctx, files: &Files) -> SimResult<()> {
    let store = load_store(&ctx.path(&files.store, "store.json"))?;
    let mut plan = Floorplan::load(ctx.path(&files.floorplan, "floorplan.json"))?;
    for rec in store.venues() {
        let points: Vec<_> = rec
            .checkin_log
            .iter()
            .filter(|b| b.label == Some(BindLabel::Correct))
            .map(|b| b.bind.location.point)
            .collect();
        if let Ok(p) = estimate_venue_location(&points) {
            let loc = Location {
                point: p,
                floor: rec.claimed_location.floor,
            };
            let poly = label_floorplan(&rec.id, &loc, &mut plan)?;
            out!("{poly}\t{}", rec.id);
        }
    }
    if !plan.ground_truth.is_empty() {
        out!("accuracy\t{}", labeling_accuracy(&plan, &plan.ground_truth));
    }
    ctx.ensure_out()?;
    plan.save(ctx.out.join("floorplan.labeled.json"))?;
    Ok(())
}

fn run_extend_coverage(ctx: &Ctx, files: &Files, arg: &ObservationArg) -> SimResult<()> {
    let obs = load_observation(ctx, files, arg)?;
    let store_path = ctx.path(&files.store, "store.json");
    let mut store = load_store(&store_path)?;
    let mut brands = BrandIndex::load_list(ctx.path(&files.brands, "brands.txt"))?;
    brands.add_store(&store);
    let weights = RankerWeights::equal(ctx.cfg.engine.pipeline.enabled_rankers.iter().copied());
    let out = extend_coverage(&obs, &mut store, &brands, &weights, &ctx.cfg.engine)?;
    let by = serde_json::to_value(out.named_by).expect("serializes");
    out!(
        "{}\t{}\t{}",
        out.record.id,
        out.record.canonical_name(),
        by.as_str().unwrap_or("")
    );
    store.save(&store_path)?;
    Ok(())
}

fn dedup(ctx: &Ctx, files: &Files) -> SimResult<()> {
    let store_path = ctx.path(&files.store, "store.json");
    let mut store = load_store(&store_path)?;
    let brands = match &files.brands {
        Some(p) => BrandIndex::load_list(p)?,
        None => {
            let p = ctx.out.join("brands.txt");
            if p.exists() {
                BrandIndex::load_list(p)?
            } else {
                BrandIndex::new()
            }
        }
    };
    let c = &ctx.cfg.engine;
    let report = dedup_venues(
        &mut store,
        &brands,
        c.coverage.brand_snap_edit,
        c.coverage.dup_cluster_edit,
        &c.fingerprint,
    )?;
    for (id, old, new) in &report.renamed {
        out!("renamed\t{id}\t{old}\t{new}");
    }
    for (keep, gone) in &report.merged {
        out!("merged\t{keep}\t{gone}");
    }
    store.save(&store_path)?;
    Ok(())
}

fn run(cli: Cli) -> SimResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        out: cli.out,
        format: cli.format,
    };
    match &cli.command {
        Command::Generate => generate(&ctx),
        Command::Simulate { files } => simulate(&ctx, files),
        Command::Replay { files } => run_replay(&ctx, files),
        Command::Rank { files, obs } => rank(&ctx, files, obs),
        Command::DetectFakes { files } => detect_fakes(&ctx, files),
        Command::Label { files } => label(&ctx, files),
        Command::ExtendCoverage { files, obs } => run_extend_coverage(&ctx, files, obs),
        Command::Dedup { files } => dedup(&ctx, files),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
