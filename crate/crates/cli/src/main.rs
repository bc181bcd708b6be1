use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use schwarz_core::maps::{
    choi_reduction_map, depolarizing_map, identity_map, random_cp_map, tensored_choi_map,
    transpose_map, unitary_conjugation_map, MapRep,
};
use schwarz_core::monotone::{check_equivalence_ab, check_l1, check_l2, MonotoneFunction};
use schwarz_core::numerics::ToleranceConfig;
use schwarz_core::positivity::{
    check_cp, check_generalized_schwarz, check_kpositive_seesaw, sample_schwarz_block,
    search_identity_mon, search_operator_2pos,
};
use schwarz_core::random::{ginibre, random_pd, random_unitary, rng_for};
use schwarz_core::suite::{run_suite, SuiteConfig};
use schwarz_core::tracial::{
    check_f_monotone, check_tracial_schwarz, run_batch, violation_from_witness, TracialMode,
};
use schwarz_core::verdict::{Certificate, CheckVerdict};

const DEFAULT_SEED: u64 = 20_240_601;
const MONOTONE_STREAM: u64 = 0x4d4f_4e4f;
const UNITARY_STREAM: u64 = 0x554e_4954;
/// Relative threshold for a negative trace gap.
const TRACE_GAP_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "schwarz", version, about = "Positivity, Schwarz and monotonicity checks for linear maps between matrix algebras")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Root seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Restarts for search-based checks.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Sample count for ensemble runs (caps every count in `suite`).
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long = "tol-psd", global = true)]
    tol_psd: Option<f64>,
    #[arg(long = "tol-kernel", global = true)]
    tol_kernel: Option<f64>,
    /// Write the report (or the generated map) here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn tol(&self) -> Result<ToleranceConfig> {
        let mut tol = ToleranceConfig::default();
        if let Some(v) = self.tol_psd {
            tol.psd_tol = v;
        }
        if let Some(v) = self.tol_kernel {
            tol.kernel_tol = v;
        }
        tol.validate()?;
        Ok(tol)
    }

    fn restarts(&self, default: usize) -> usize {
        self.restarts.unwrap_or(default)
    }

    fn samples(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a map and write it as a .map.json file.
    Gen(GenArgs),
    /// Run positivity checks on a map.
    Check {
        map: PathBuf,
        /// Comma-separated subset of cp, kpos=K, gschwarz, schwarz-block, idmon, op2pos.
        #[arg(long, value_delimiter = ',', default_value = "cp,gschwarz")]
        checks: Vec<CheckSpec>,
    },
    /// Evaluate a tracial inequality over seeded pairs.
    Tracial {
        map: PathBuf,
        #[arg(long, default_value = "gs")]
        mode: String,
        /// Also search for a Schwarz-block witness and convert it into a pair.
        #[arg(long)]
        witness: bool,
    },
    /// Monotonicity of J_f and the power trace inequalities.
    Monotone {
        map: PathBuf,
        /// identity, power:R or loewner:BETA,GAMMA,T
        #[arg(long = "f")]
        f: String,
        /// Exponent for the trace inequalities; defaults to R for power:R, else 0.5.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Run the full acceptance suite.
    Suite {
        /// Additionally load and check this map file.
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Builder {
    Identity,
    Depolarizing,
    ChoiReduction,
    Transpose,
    TensoredChoi,
    RandomCp,
    Unitary,
}

#[derive(Args)]
struct GenArgs {
    builder: Builder,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 2)]
    kraus: usize,
    /// Replace φ by φ(1)^{-1/2} φ(·) φ(1)^{-1/2}.
    #[arg(long)]
    normalize: bool,
    /// Replace φ by id_K ⊗ φ.
    #[arg(long = "tensor-id")]
    tensor_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum CheckSpec {
    Cp,
    Kpos(usize),
    Gschwarz,
    SchwarzBlock,
    Idmon,
    Op2pos,
}

impl FromStr for CheckSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.trim() {
            "cp" => Self::Cp,
            "gschwarz" => Self::Gschwarz,
            "schwarz-block" => Self::SchwarzBlock,
            "idmon" => Self::Idmon,
            "op2pos" => Self::Op2pos,
            other => match other.strip_prefix("kpos=") {
                Some(k) => Self::Kpos(k.parse().map_err(|_| format!("invalid k in '{other}'"))?),
                None => return Err(format!("unknown check '{other}'")),
            },
        })
    }
}

/// JSON-lines report: records sorted by id, then one summary object.
struct Report {
    command: &'static str,
    records: Vec<(String, Value)>,
    violations: usize,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            records: Vec::new(),
            violations: 0,
        }
    }

    fn push(&mut self, id: impl Into<String>, body: impl Serialize, violation: bool) -> Result<()> {
        let id = id.into();
        let mut v = json!({ "id": id });
        v["result"] = serde_json::to_value(body)?;
        v["violation"] = violation.into();
        self.violations += usize::from(violation);
        self.records.push((id, v));
        Ok(())
    }

    fn exit_code(&self) -> u8 {
        u8::from(self.violations > 0)
    }

    fn emit(mut self, run: &RunArgs, extra: Value) -> Result<u8> {
        self.records.sort_by(|a, b| a.0.cmp(&b.0));
        let mut text = String::new();
        for (_, v) in &self.records {
            text.push_str(&serde_json::to_string(v)?);
            text.push('\n');
        }
        let code = self.exit_code();
        let mut summary = json!({
            "summary": {
                "command": self.command,
                "seed": run.seed,
                "records": self.records.len(),
                "violations": self.violations,
                "exit_code": code,
            }
        });
        if let Value::Object(extra) = extra {
            summary["summary"]
                .as_object_mut()
                .expect("summary is an object")
                .extend(extra);
        }
        text.push_str(&serde_json::to_string(&summary)?);
        text.push('\n');
        write_output(run.out.as_deref(), &text)?;
        Ok(code)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn load_map(path: &Path) -> Result<MapRep> {
    MapRep::load(path).with_context(|| format!("loading map file {}", path.display()))
}

fn need(v: Option<usize>, flag: &str) -> Result<usize> {
    v.with_context(|| format!("--{flag} is required for this builder"))
}

fn cmd_gen(args: &GenArgs, run: &RunArgs) -> Result<u8> {
    let tol = run.tol()?;
    let mut map = match args.builder {
        Builder::Identity => identity_map(need(args.n, "n")?)?,
        Builder::Depolarizing => {
            let n = need(args.n, "n")?;
            depolarizing_map(n, args.m.unwrap_or(n))?
        }
        Builder::ChoiReduction => {
            let t = args.t.context("--t is required for choi-reduction")?;
            choi_reduction_map(t, need(args.n, "n")?)?
        }
        Builder::Transpose => transpose_map(need(args.n, "n")?)?,
        Builder::TensoredChoi => tensored_choi_map()?,
        Builder::RandomCp => {
            let n = need(args.n, "n")?;
            random_cp_map(n, args.m.unwrap_or(n), args.kraus, run.seed)?
        }
        Builder::Unitary => {
            let n = need(args.n, "n")?;
            let u = random_unitary(&mut rng_for(run.seed, &[UNITARY_STREAM]), n);
            unitary_conjugation_map(&u, &tol)?
        }
    };
    if let Some(k) = args.tensor_id {
        map = map.tensor_with_identity(k)?;
    }
    if args.normalize {
        map = map.normalize_to_unital(&tol)?;
    }
    let mut text = map.to_json();
    text.push('\n');
    write_output(run.out.as_deref(), &text)?;
    Ok(0)
}

fn check_id(c: &CheckSpec) -> String {
    match c {
        CheckSpec::Cp => "cp".into(),
        CheckSpec::Kpos(k) => format!("kpos_{k}"),
        CheckSpec::Gschwarz => "gschwarz".into(),
        CheckSpec::SchwarzBlock => "schwarz_block".into(),
        CheckSpec::Idmon => "idmon".into(),
        CheckSpec::Op2pos => "op2pos".into(),
    }
}

fn cmd_check(path: &Path, checks: &[CheckSpec], run: &RunArgs) -> Result<u8> {
    let tol = run.tol()?;
    let map = load_map(path)?;
    let mut checks = checks.to_vec();
    checks.dedup();
    let mut report = Report::new("check");
    let restarts = run.restarts(20);
    let samples = run.samples(200);
    for c in &checks {
        let v: CheckVerdict = match c {
            CheckSpec::Cp => check_cp(&map, &tol)?,
            CheckSpec::Kpos(k) => check_kpositive_seesaw(&map, *k, restarts, run.seed, &tol)?,
            CheckSpec::Gschwarz => check_generalized_schwarz(&map, restarts, run.seed, &tol)?,
            CheckSpec::SchwarzBlock => sample_schwarz_block(&map, samples, run.seed, &tol)?,
            CheckSpec::Idmon => search_identity_mon(&map, samples, run.seed, &tol)?,
            CheckSpec::Op2pos => search_operator_2pos(&map, restarts, run.seed, &tol)?,
        };
        let bad = v.is_violation();
        report.push(check_id(c), &v, bad)?;
    }
    report.emit(run, json!({ "map": map.label }))
}

fn cmd_tracial(path: &Path, mode: &str, witness: bool, run: &RunArgs) -> Result<u8> {
    let tol = run.tol()?;
    let mode = TracialMode::from_str(mode)?;
    let map = load_map(path)?;
    let mut report = Report::new("tracial");
    let batch = run_batch(&map, mode, run.samples(200), run.seed, &tol)?;
    let bad = batch.has_violation();
    let min_gap = batch.min_gap;
    report.push("batch", &batch, bad)?;

    if witness {
        let search = check_generalized_schwarz(&map, run.restarts(20), run.seed, &tol)?;
        match &search.certificate {
            Some(Certificate::Schwarz(w)) if search.is_violation() => {
                let wp = violation_from_witness(&map, w, &tol)?;
                let (body, bad) = match mode {
                    TracialMode::Gs => (serde_json::to_value(&wp)?, wp.report.is_violation()),
                    TracialMode::Schwarz => {
                        let g = check_tracial_schwarz(&map, &wp.pair, &tol)?;
                        (json!({ "witness": &wp, "schwarz": g }), g.is_violation())
                    }
                    TracialMode::Fmono => {
                        let f = check_f_monotone(&map, &wp.pair, &tol)?;
                        (json!({ "witness": &wp, "fmono": f }), !f.holds)
                    }
                };
                report.push("witness", body, bad)?;
            }
            _ => report.push("witness", json!({ "search": search }), false)?,
        }
    }
    report.emit(run, json!({ "map": map.label, "min_gap": min_gap }))
}

#[derive(Default, Serialize)]
struct VerdictTally {
    instances: usize,
    violations: usize,
    min_value: f64,
    min_scaled_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst: Option<CheckVerdict>,
}

impl VerdictTally {
    fn add(&mut self, v: CheckVerdict) {
        if self.instances == 0 {
            self.min_value = f64::INFINITY;
            self.min_scaled_value = f64::INFINITY;
        }
        self.instances += 1;
        self.min_value = self.min_value.min(v.value);
        self.min_scaled_value = self.min_scaled_value.min(v.value / v.scale);
        let replace = match &self.worst {
            None => true,
            Some(w) => (v.is_violation(), -v.value) > (w.is_violation(), -w.value),
        };
        if v.is_violation() {
            self.violations += 1;
        }
        if replace {
            self.worst = Some(v);
        }
    }
}

#[derive(Serialize)]
struct GapTally {
    r: f64,
    instances: usize,
    violations: usize,
    min_gap: f64,
    min_scaled_gap: f64,
    max_abs_gap: f64,
}

impl GapTally {
    fn new(r: f64) -> Self {
        Self {
            r,
            instances: 0,
            violations: 0,
            min_gap: f64::INFINITY,
            min_scaled_gap: f64::INFINITY,
            max_abs_gap: 0.0,
        }
    }

    fn add(&mut self, g: schwarz_core::monotone::TraceGap) {
        self.instances += 1;
        self.min_gap = self.min_gap.min(g.gap);
        self.min_scaled_gap = self.min_scaled_gap.min(g.gap / g.scale);
        self.max_abs_gap = self.max_abs_gap.max(g.gap.abs());
        if g.gap < -TRACE_GAP_TOL * g.scale {
            self.violations += 1;
        }
    }
}

fn cmd_monotone(path: &Path, spec: &str, r: Option<f64>, run: &RunArgs) -> Result<u8> {
    let tol = run.tol()?;
    let f = MonotoneFunction::from_str(spec)?;
    let r = match (r, f) {
        (Some(r), _) => r,
        (None, MonotoneFunction::Power { r }) => r,
        _ => 0.5,
    };
    let map = load_map(path)?;
    let (n, m) = (map.input_dim(), map.output_dim());
    let mut hp_a = VerdictTally::default();
    let mut hp_b = VerdictTally::default();
    let mut l1 = GapTally::new(r);
    let mut l2 = GapTally::new(r);
    let (mut agree, mut disagree, mut skipped) = (0usize, 0usize, 0usize);
    for s in 0..run.samples(50) {
        let mut rng = rng_for(run.seed, &[MONOTONE_STREAM, s as u64]);
        let x = random_pd(&mut rng, m);
        let y = random_pd(&mut rng, m);
        let k1 = ginibre(&mut rng, n, n);
        let k2 = ginibre(&mut rng, m, m);
        match check_equivalence_ab(&map, &f, &x, &y, &tol) {
            Ok(e) => {
                if e.agree {
                    agree += 1;
                } else {
                    disagree += 1;
                }
                hp_a.add(e.a);
                hp_b.add(e.b);
            }
            // forms (a) and (b) are only compared where the images are invertible
            Err(schwarz_core::Error::NotPositiveDefinite(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
        l1.add(check_l1(&map, &x, &y, &k1, r, &tol)?);
        l2.add(check_l2(&map, &x, &y, &k2, r, &tol)?);
    }
    let mut report = Report::new("monotone");
    let equivalence = json!({ "agree": agree, "disagree": disagree, "skipped": skipped });
    report.push("equivalence", equivalence, disagree > 0)?;
    let bad = hp_a.violations > 0;
    report.push("hp_a", hp_a, bad)?;
    let bad = hp_b.violations > 0;
    report.push("hp_b", hp_b, bad)?;
    let bad = l1.violations > 0;
    report.push("l1", l1, bad)?;
    let bad = l2.violations > 0;
    report.push("l2", l2, bad)?;
    report.emit(run, json!({ "map": map.label, "f": f.to_string() }))
}

fn cmd_suite(map: Option<&Path>, run: &RunArgs) -> Result<u8> {
    let cfg = SuiteConfig {
        seed: run.seed,
        samples: run.samples,
        tol: run.tol()?,
    };
    let extra = map.map(load_map).transpose()?;
    let mut report = Report::new("suite");
    let results = run_suite(&cfg);
    for c in &results {
        eprintln!("{}", c.line());
        report.push(format!("criterion_{:02}", c.id), c, !c.passed)?;
    }
    if let Some(map) = &extra {
        // informational only; does not change the exit code
        let cp = check_cp(map, &cfg.tol)?;
        let gs = check_generalized_schwarz(map, run.restarts(20), run.seed, &cfg.tol)?;
        report.push("map_cp", &cp, false)?;
        report.push("map_gschwarz", &gs, false)?;
    }
    let passed = results.iter().filter(|c| c.passed).count();
    report.emit(
        run,
        json!({ "criteria": results.len(), "passed": passed, "quick": run.samples.is_some() }),
    )
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(args, &cli.run),
        Cmd::Check { map, checks } => cmd_check(map, checks, &cli.run),
        Cmd::Tracial { map, mode, witness } => cmd_tracial(map, mode, *witness, &cli.run),
        Cmd::Monotone { map, f, r } => cmd_monotone(map, f, *r, &cli.run),
        Cmd::Suite { map } => cmd_suite(map.as_deref(), &cli.run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
