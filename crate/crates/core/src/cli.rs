//! Command-line surface: argument types, command runners and report
//! rendering. The binary is a thin wrapper around [`main_with_args`].
//!
//! Every report starts with a provenance header (tool version, scenario
//! digest, seed, factors digest) so a figure can be reproduced from the
//! header and the scenario file alone.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accounting::{
    account, compare, to_csv, AccountingError, ComparisonReport, EmissionReport, CATEGORIES,
};
use crate::emission_model::EmissionFactors;
use crate::fl_sim::{self, Mode, SimError, SyntheticDataset};
use crate::registry::{FileRegistry, Match, RegistryError, TfCosine, DEFAULT_THRESHOLD};
use crate::scenario::{bundled, DatasetScale, Scenario, ScenarioError};

pub const TOOL_VERSION: &str = concat!("fedcarbon ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Registry(_) => 4,
            CliError::Output { .. } => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fedcarbon",
    version,
    about = "Energy, CO2e, cost and wall clock of federated vs centralized training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one pipeline and report its emissions and cost.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Run both pipelines on one scenario and compare them.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare both pipelines at several dataset scales.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated scale names.
        #[arg(long, value_delimiter = ',', default_value = "small,medium,large")]
        scales: Vec<DatasetScale>,
    },
    /// Data-access request workflow.
    Registry {
        /// Append-only request log.
        #[arg(long, default_value = "requests.log")]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or `bundled:small|medium|large`. Repeatable for sweep.
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<String>,
    /// Seed for data generation and partitioning; defaults to the plan seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the scenario's emission factors with this file.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RegistryAction {
    Submit {
        #[arg(long)]
        description: String,
        #[arg(long = "dataset")]
        dataset_ids: Vec<String>,
        #[arg(long)]
        owner: String,
    },
    /// Rank approved requests similar to request `id`.
    Check {
        #[arg(long)]
        id: u64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    Approve {
        #[arg(long)]
        id: u64,
        /// Requested data volume; selects the cluster tier.
        #[arg(long)]
        size_gb: f64,
    },
    Reject {
        #[arg(long)]
        id: u64,
    },
    Duplicate {
        #[arg(long)]
        id: u64,
        #[arg(long = "of")]
        of_id: u64,
    },
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Federated,
    Centralized,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Federated => Mode::Federated,
            ModeArg::Centralized => Mode::Centralized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub factors_digest: String,
}

impl Provenance {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            scenario_digest: sha256(&scenario.to_toml_string()),
            seed: scenario.plan.seed,
            factors_digest: sha256(&scenario.factors.to_toml_string()),
        }
    }

    fn comment_lines(&self) -> String {
        format!(
            "# tool_version: {}\n# scenario_digest: {}\n# seed: {}\n# factors_digest: {}\n",
            self.tool_version, self.scenario_digest, self.seed, self.factors_digest
        )
    }
}

fn sha256(text: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelQuality {
    pub training_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateOutput {
    pub provenance: Provenance,
    pub report: EmissionReport,
    pub model: ModelQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOutput {
    pub provenance: Provenance,
    pub comparison: ComparisonReport,
    pub fl_model: ModelQuality,
    pub cl_model: ModelQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub scale: String,
    #[serde(flatten)]
    pub output: CompareOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub entries: Vec<SweepEntry>,
}

/// Loads a scenario file or a `bundled:` name.
pub fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    let scenario = match spec.strip_prefix("bundled:") {
        Some("small") => bundled::small()?,
        Some("medium") => bundled::medium()?,
        Some("large") => bundled::large()?,
        Some(other) => {
            return Err(CliError::Validation(format!(
                "unknown bundled scenario `{other}` (expected small, medium or large)"
            )))
        }
        None => Scenario::from_file(spec)?,
    };
    Ok(scenario)
}

/// Applies the seed and factors overrides and revalidates.
pub fn prepare(
    mut scenario: Scenario,
    seed: Option<u64>,
    factors: Option<&Path>,
) -> Result<Scenario, CliError> {
    if let Some(seed) = seed {
        scenario.plan.seed = seed;
    }
    if let Some(path) = factors {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        scenario.factors = EmissionFactors::from_toml_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
    }
    Ok(scenario)
}

fn quality(trace: &fl_sim::TraceLog) -> ModelQuality {
    ModelQuality {
        training_loss: trace.final_model.training_loss,
        eval_loss: trace.final_model.eval_loss,
    }
}

pub fn cmd_estimate(scenario: &Scenario, mode: Mode) -> Result<EstimateOutput, CliError> {
    let data = SyntheticDataset::standard(scenario.plan.seed);
    let trace = fl_sim::run(mode, scenario, &data)?;
    Ok(EstimateOutput {
        provenance: Provenance::of(scenario),
        report: account(&trace, scenario)?,
        model: quality(&trace),
    })
}

pub fn cmd_compare(scenario: &Scenario) -> Result<CompareOutput, CliError> {
    let data = SyntheticDataset::standard(scenario.plan.seed);
    let fl = fl_sim::run_federated(scenario, &data)?;
    let cl = fl_sim::run_centralized(scenario, &data)?;
    Ok(CompareOutput {
        provenance: Provenance::of(scenario),
        comparison: compare(&account(&fl, scenario)?, &account(&cl, scenario)?),
        fl_model: quality(&fl),
        cl_model: quality(&cl),
    })
}

/// One comparison per (scenario, scale), in argument order.
pub fn cmd_sweep(
    scenarios: &[(String, Scenario)],
    scales: &[DatasetScale],
) -> Result<SweepOutput, CliError> {
    if scales.is_empty() {
        return Err(CliError::Validation(
            "sweep needs at least one scale".into(),
        ));
    }
    let mut entries = Vec::new();
    for (label, base) in scenarios {
        for &scale in scales {
            let scenario = base.at_scale(scale)?;
            let tag = if scenarios.len() == 1 {
                scale.name().to_string()
            } else {
                format!("{label}:{}", scale.name())
            };
            entries.push(SweepEntry {
                scale: tag,
                output: cmd_compare(&scenario)?,
            });
        }
    }
    Ok(SweepOutput { entries })
}

fn structured<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn report_table(out: &mut String, r: &EmissionReport, q: &ModelQuality) {
    let e = r.energy_kwh.by_category();
    let c = r.emissions_g.by_category();
    writeln!(out, "mode: {}", r.mode).unwrap();
    writeln!(
        out,
        "{:<10} {:>24} {:>24}",
        "category", "energy_kwh", "emissions_g"
    )
    .unwrap();
    for (i, cat) in CATEGORIES.iter().enumerate() {
        writeln!(out, "{:<10} {:>24} {:>24}", cat, e[i], c[i]).unwrap();
    }
    writeln!(out, "{:<10} {:>24}", "total", r.energy_kwh.total).unwrap();
    writeln!(out, "c_train_g: {}", r.c_train_g).unwrap();
    writeln!(out, "c_total_g: {}", r.c_total_g).unwrap();
    writeln!(
        out,
        "cost: compute {} storage {} egress {} total {}",
        r.cost.compute, r.cost.storage, r.cost.egress, r.cost.total
    )
    .unwrap();
    writeln!(out, "wall_clock_hours: {}", r.wall_clock_hours).unwrap();
    if let Some(sci) = r.sci_g_per_unit {
        writeln!(out, "sci_g_per_unit: {sci}").unwrap();
    }
    writeln!(
        out,
        "training_loss: {}  eval_loss: {}",
        q.training_loss, q.eval_loss
    )
    .unwrap();
}

fn comparison_table(out: &mut String, o: &CompareOutput) {
    let c = &o.comparison;
    writeln!(
        out,
        "{:<18} {:>24} {:>24} {:>24} {:>22}",
        "metric", "federated", "centralized", "delta", "ratio"
    )
    .unwrap();
    for m in &c.metrics {
        let ratio = m.ratio.map_or_else(|| "n/a".to_string(), |r| r.to_string());
        writeln!(
            out,
            "{:<18} {:>24} {:>24} {:>24} {:>22}",
            m.metric, m.fl, m.cl, m.delta, ratio
        )
        .unwrap();
    }
    writeln!(
        out,
        "eval_loss: federated {} centralized {}",
        o.fl_model.eval_loss, o.cl_model.eval_loss
    )
    .unwrap();
    writeln!(
        out,
        "verdict: cl_total_exceeds_fl={} fl_train_exceeds_cl_train={} fl_faster={}",
        c.verdict.cl_total_exceeds_fl, c.verdict.fl_train_exceeds_cl_train, c.verdict.fl_faster
    )
    .unwrap();
}

pub fn render_estimate(o: &EstimateOutput, format: Format) -> String {
    match format {
        Format::Structured => structured(o),
        Format::Csv => o.provenance.comment_lines() + &to_csv([(None, &o.report)]),
        Format::Table => {
            let mut s = o.provenance.comment_lines();
            report_table(&mut s, &o.report, &o.model);
            s
        }
    }
}

pub fn render_compare(o: &CompareOutput, format: Format) -> String {
    match format {
        Format::Structured => structured(o),
        Format::Csv => {
            o.provenance.comment_lines()
                + &to_csv([(None, &o.comparison.fl), (None, &o.comparison.cl)])
        }
        Format::Table => {
            let mut s = o.provenance.comment_lines();
            comparison_table(&mut s, o);
            s
        }
    }
}

pub fn render_sweep(o: &SweepOutput, format: Format) -> String {
    match format {
        Format::Structured => structured(o),
        Format::Csv => {
            let mut s = String::new();
            for e in &o.entries {
                s += &format!("# {}\n", e.scale);
                s += &e.output.provenance.comment_lines();
            }
            let rows = o.entries.iter().flat_map(|e| {
                let tag = Some(e.scale.as_str());
                [
                    (tag, &e.output.comparison.fl),
                    (tag, &e.output.comparison.cl),
                ]
            });
            s + &to_csv(rows)
        }
        Format::Table => {
            let mut s = String::new();
            for e in &o.entries {
                writeln!(s, "== {} ==", e.scale).unwrap();
                s += &e.output.provenance.comment_lines();
                comparison_table(&mut s, &e.output);
            }
            s
        }
    }
}

fn render_matches(hits: &[Match], format: Format) -> String {
    match format {
        Format::Structured => structured(&hits),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "owner", "score"])
                .expect("in-memory write");
            for m in hits {
                w.write_record([m.id.to_string(), m.owner.clone(), m.score.to_string()])
                    .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
        Format::Table => {
            if hits.is_empty() {
                return "no matches\n".into();
            }
            hits.iter()
                .map(|m| format!("{:>6}  {:<20} {}\n", m.id, m.owner, m.score))
                .collect()
        }
    }
}

fn render_requests<T: Serialize>(
    rows: &[T],
    table: impl Fn(&T) -> String,
    format: Format,
) -> String {
    match format {
        Format::Structured => structured(&rows),
        Format::Csv | Format::Table => rows.iter().map(table).collect(),
    }
}

fn registry_command(
    log: &Path,
    action: RegistryAction,
    format: Format,
) -> Result<String, CliError> {
    let mut reg = FileRegistry::open(log)?;
    let row = |r: &crate::registry::AccessRequest| {
        let tier = r.assigned_tier.map_or("-", |t| t.name());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.state,
            tier,
            r.owner,
            r.dataset_ids.join(";"),
            r.description
        )
    };
    Ok(match action {
        RegistryAction::Submit {
            description,
            dataset_ids,
            owner,
        } => render_requests(
            &[reg.submit(&description, &dataset_ids, &owner)?],
            row,
            format,
        ),
        RegistryAction::Approve { id, size_gb } => {
            render_requests(&[reg.approve(id, size_gb)?], row, format)
        }
        RegistryAction::Reject { id } => render_requests(&[reg.reject(id)?], row, format),
        RegistryAction::Duplicate { id, of_id } => {
            let (r, owner) = reg.mark_duplicate(id, of_id)?;
            let mut s = render_requests(&[r], row, format);
            if format != Format::Structured {
                s += &format!("contact owner of request {of_id}: {owner}\n");
            }
            s
        }
        RegistryAction::Check { id, threshold } => render_matches(
            &reg.registry().check(id, threshold, &TfCosine::default())?,
            format,
        ),
        RegistryAction::List => {
            let all: Vec<_> = reg.registry().requests().cloned().collect();
            render_requests(&all, row, format)
        }
    })
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Output {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn single_scenario(run: &RunArgs) -> Result<Scenario, CliError> {
    if run.scenarios.len() != 1 {
        return Err(CliError::Validation(
            "exactly one --scenario is required".into(),
        ));
    }
    prepare(
        load_scenario(&run.scenarios[0])?,
        run.seed,
        run.factors.as_deref(),
    )
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate { run, mode } => {
            let o = cmd_estimate(&single_scenario(&run)?, mode.into())?;
            emit(&render_estimate(&o, run.format), run.out.as_deref(), stdout)
        }
        Command::Compare { run } => {
            let o = cmd_compare(&single_scenario(&run)?)?;
            emit(&render_compare(&o, run.format), run.out.as_deref(), stdout)
        }
        Command::Sweep { run, scales } => {
            let scenarios = run
                .scenarios
                .iter()
                .map(|s| {
                    Ok((
                        s.clone(),
                        prepare(load_scenario(s)?, run.seed, run.factors.as_deref())?,
                    ))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let o = cmd_sweep(&scenarios, &scales)?;
            emit(&render_sweep(&o, run.format), run.out.as_deref(), stdout)
        }
        Command::Registry {
            log,
            format,
            out,
            action,
        } => {
            let text = registry_command(&log, action, format)?;
            emit(&text, out.as_deref(), stdout)
        }
    }
}

/// Parses `args`, runs, and returns the process exit code. Errors go to
/// `stderr`.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() {
                e.render().to_string()
            } else {
                e.to_string()
            };
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(
            std::iter::once("fedcarbon").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn estimate_reports_mode_and_default_seed() {
        let (code, out, _) = run_args(&[
            "estimate",
            "--scenario",
            "bundled:small",
            "--mode",
            "federated",
            "--format",
            "structured",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["report"]["mode"], "federated");
        assert_eq!(v["provenance"]["seed"], 42);
        assert!(v["provenance"]["scenario_digest"]
            .as_str()
            .unwrap()
            .starts_with("sha256:"));
    }

    #[test]
    fn table_is_a_projection_of_structured() {
        let s = bundled::small().unwrap();
        let o = cmd_estimate(&s, Mode::Centralized).unwrap();
        let table = render_estimate(&o, Format::Table);
        assert!(table.contains(&format!("c_total_g: {}", o.report.c_total_g)));
        assert!(table.contains(&o.provenance.scenario_digest));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            run_args(&[
                "estimate",
                "--scenario",
                "/nonexistent.scenario",
                "--mode",
                "federated"
            ])
            .0,
            2
        );
        assert_eq!(
            run_args(&[
                "estimate",
                "--scenario",
                "bundled:huge",
                "--mode",
                "federated"
            ])
            .0,
            2
        );
        assert_eq!(
            run_args(&["sweep", "--scenario", "bundled:small", "--scales", "tiny"]).0,
            2
        );
        assert_eq!(run_args(&["bogus"]).0, 2);
    }

    #[test]
    fn sweep_csv_row_count() {
        let (code, out, _) = run_args(&[
            "sweep",
            "--scenario",
            "bundled:small",
            "--scales",
            "small,large",
            "--format",
            "csv",
        ]);
        assert_eq!(code, 0);
        let data_rows = out.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 2 * 2 * 6);
    }
}
