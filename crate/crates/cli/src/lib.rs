//! The `petersson` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use petersson_core::analytic::{a2_printed, default_g, g_k, q_polynomial, t_cutoff, u_cutoff};
use petersson_core::arith::{kloosterman, kloosterman_bound, KloostermanCache};
use petersson_core::moments::{MomentEngine, MomentKind, MomentReport, NonvanishingBound};
use petersson_core::trace::{error_budget, phi_main};
use petersson_core::{Error, TraceFormula, TraceParams};

pub mod cache;
pub mod grid;
pub mod output;
pub mod verify;

use grid::{parse_float_list, parse_int_list, List};
use output::{Format, Record, Sink};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const THREADS_ENV: &str = "PETERSSON_THREADS";

fn parse_tol(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (1e-14..=1e-4).contains(&t) {
        Ok(t)
    } else {
        Err(format!("tolerance {s} outside [1e-14, 1e-4]"))
    }
}

fn parse_threads(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("thread count '{s}' must be a positive integer")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "petersson", version, about = "Petersson trace formula and central-value moments at prime-power level")]
pub struct Cli {
    /// Absolute tolerance passed to every series evaluation.
    #[arg(long, global = true, default_value = "1e-10", value_parser = parse_tol)]
    pub tol: f64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = THREADS_ENV, value_parser = parse_threads)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Kloosterman row cache file; read at start, rewritten at exit.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct LevelArgs {
    #[arg(long, value_parser = parse_int_list::<u32>)]
    pub k: List<u32>,
    #[arg(long, value_parser = parse_int_list::<u64>)]
    pub p: List<u64>,
    #[arg(long, value_parser = parse_int_list::<u32>)]
    pub nu: List<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact Kloosterman sums S(m, n; c).
    Kloosterman {
        #[arg(long, allow_hyphen_values = true, value_parser = parse_int_list::<i64>)]
        m: List<i64>,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_int_list::<i64>)]
        n: List<i64>,
        #[arg(long, value_parser = parse_int_list::<u64>)]
        c: List<u64>,
    },
    /// Full trace Delta over all forms of level p^j (j defaults to nu).
    Delta {
        #[command(flatten)]
        level: LevelArgs,
        /// Exponent j of the level p^j, at most nu.
        #[arg(long, value_parser = parse_int_list::<u32>)]
        level_exp: Option<List<u32>>,
        #[arg(long, default_value = "1", value_parser = parse_int_list::<u64>)]
        m: List<u64>,
        #[arg(long, default_value = "1", value_parser = parse_int_list::<u64>)]
        n: List<u64>,
    },
    /// Newform trace Delta* at level p^nu.
    DeltaStar {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long, default_value = "1", value_parser = parse_int_list::<u64>)]
        m: List<u64>,
        #[arg(long, default_value = "1", value_parser = parse_int_list::<u64>)]
        n: List<u64>,
    },
    /// Cutoff functions T(y) and U(y).
    Tu {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long, value_parser = parse_float_list)]
        y: List<f64>,
    },
    /// g_k, the coefficients of Q and the main-term density.
    Constants {
        #[command(flatten)]
        level: LevelArgs,
    },
    /// Twisted second moment M2(m).
    M2 {
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long, default_value = "1", value_parser = parse_int_list::<u64>)]
        m: List<u64>,
    },
    /// Third moment M3.
    M3 {
        #[command(flatten)]
        level: LevelArgs,
    },
    /// Lower bound for the harmonic proportion of non-vanishing central values.
    Bound {
        #[command(flatten)]
        level: LevelArgs,
    },
    /// Run the invariant suite; exits 1 on any failure.
    Verify {
        /// Smaller grids, a few seconds in total.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Serialize)]
struct KloostermanRow {
    m: i64,
    n: i64,
    c: u64,
    value: f64,
    tail: f64,
    weil_bound: f64,
}
impl Record for KloostermanRow {}

#[derive(Debug, Serialize)]
struct DeltaRow {
    k: u32,
    p: u64,
    nu: u32,
    level: u64,
    m: u64,
    n: u64,
    value: f64,
    tail: f64,
}
impl Record for DeltaRow {}

#[derive(Debug, Serialize)]
pub struct DeltaStarRow {
    pub k: u32,
    pub p: u64,
    pub nu: u32,
    pub m: u64,
    pub n: u64,
    pub value: f64,
    pub tail: f64,
    pub main_term: f64,
    pub budget: f64,
}
impl Record for DeltaStarRow {}

#[derive(Debug, Serialize)]
struct TuRow {
    k: u32,
    p: u64,
    nu: u32,
    y: f64,
    t: f64,
    u: f64,
}
impl Record for TuRow {}

#[derive(Debug, Serialize)]
struct ConstantsRow {
    k: u32,
    p: u64,
    nu: u32,
    q_hat: f64,
    g_k: f64,
    #[serde(rename = "A3")]
    a3: f64,
    #[serde(rename = "A2")]
    a2: f64,
    #[serde(rename = "A1")]
    a1: f64,
    #[serde(rename = "A0")]
    a0: f64,
    #[serde(rename = "A2_printed")]
    a2_printed: f64,
    phi_main: f64,
    q_at_log_q_hat: f64,
}
impl Record for ConstantsRow {}

#[derive(Debug, Serialize)]
struct MomentRow {
    k: u32,
    p: u64,
    nu: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    value: f64,
    tail: f64,
    predicted: f64,
    relative_gap: f64,
    diagonal: f64,
    off_diagonal: f64,
    #[serde(skip)]
    report: Option<MomentReport>,
}

impl Record for MomentRow {
    fn json(&self) -> Value {
        serde_json::to_value(self.report.as_ref().expect("report attached")).expect("reports serialize")
    }
}

impl From<MomentReport> for MomentRow {
    fn from(r: MomentReport) -> Self {
        MomentRow {
            k: r.params.k,
            p: r.params.p,
            nu: r.params.nu,
            m: match r.kind {
                MomentKind::M2 { m } => Some(m),
                MomentKind::M3 => None,
            },
            value: r.computed.value,
            tail: r.computed.tail,
            predicted: r.predicted,
            relative_gap: r.relative_gap,
            diagonal: r.diagonal,
            off_diagonal: r.off_diagonal,
            report: Some(r),
        }
    }
}

#[derive(Debug, Serialize)]
struct BoundRow {
    k: u32,
    p: u64,
    nu: u32,
    m2: f64,
    m2_tail: f64,
    m3: f64,
    m3_tail: f64,
    bound: f64,
    c_effective: f64,
    predicted_bound: f64,
    #[serde(skip)]
    full: Option<NonvanishingBound>,
}

impl Record for BoundRow {
    fn json(&self) -> Value {
        serde_json::to_value(self.full.as_ref().expect("bound attached")).expect("bounds serialize")
    }
}

fn levels(l: &LevelArgs) -> Result<Vec<TraceParams>, Error> {
    let mut out = Vec::new();
    for &k in l.k.values() {
        for &p in l.p.values() {
            for &nu in l.nu.values() {
                out.push(TraceParams::new(k, p, nu)?);
            }
        }
    }
    Ok(out)
}

fn pairs<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

fn as_f64(r: num_rational::Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Computes `f` over `inputs` in parallel tiles, writing results in input order.
fn emit<I, R, W>(sink: &mut Sink<W>, inputs: Vec<I>, tile: usize, f: impl Fn(I) -> Result<R, Error> + Sync) -> Result<(), Failure>
where
    I: Send,
    R: Record + Send,
    W: Write,
{
    let mut inputs = inputs.into_iter().peekable();
    while inputs.peek().is_some() {
        let chunk: Vec<I> = inputs.by_ref().take(tile.max(1)).collect();
        let results: Vec<Result<R, Error>> = chunk.into_par_iter().map(&f).collect();
        for r in results {
            sink.write(&r.map_err(Failure::Numeric)?).map_err(Failure::Io)?;
        }
    }
    Ok(())
}

#[derive(Debug)]
enum Failure {
    Numeric(Error),
    Io(std::io::Error),
    Verification(usize),
}

struct Context {
    trace: TraceFormula,
    engine: MomentEngine,
    tol: f64,
    tile: usize,
}

fn execute<W: Write>(cmd: &Command, ctx: &Context, out: W, format: Format) -> Result<(), Failure> {
    let mut sink = Sink::new(format, out);
    let tol = ctx.tol;
    let tile = ctx.tile;
    let lv = |l: &LevelArgs| levels(l).map_err(Failure::Numeric);
    match cmd {
        Command::Kloosterman { m, n, c } => {
            let mut inputs = Vec::new();
            for (m, n) in pairs(m.values(), n.values()) {
                for &c in c.values() {
                    if c == 0 {
                        return Err(Failure::Numeric(Error::Domain { function: "kloosterman", detail: "modulus 0".into() }));
                    }
                    inputs.push((m, n, c));
                }
            }
            emit(&mut sink, inputs, tile, |(m, n, c)| {
                Ok(KloostermanRow { m, n, c, value: kloosterman(m, n, c), tail: 0.0, weil_bound: kloosterman_bound(m, n, c) })
            })?;
        }
        Command::Delta { level, level_exp, m, n } => {
            let mut inputs = Vec::new();
            for params in lv(level)? {
                let exps = level_exp.as_ref().map(|e| e.values().to_vec()).unwrap_or_else(|| vec![params.nu]);
                for j in exps {
                    if j > params.nu {
                        return Err(Failure::Numeric(Error::Domain {
                            function: "delta",
                            detail: format!("level exponent {j} exceeds nu = {}", params.nu),
                        }));
                    }
                    for (m, n) in pairs(m.values(), n.values()) {
                        inputs.push((params, params.p.pow(j), m, n));
                    }
                }
            }
            emit(&mut sink, inputs, tile, |(t, level, m, n)| {
                let d = ctx.trace.delta_full(&t, level, m, n, tol)?;
                Ok(DeltaRow { k: t.k, p: t.p, nu: t.nu, level, m, n, value: d.value, tail: d.tail })
            })?;
        }
        Command::DeltaStar { level, m, n } => {
            let inputs: Vec<_> = lv(level)?
                .into_iter()
                .flat_map(|t| pairs(m.values(), n.values()).into_iter().map(move |(m, n)| (t, m, n)))
                .collect();
            emit(&mut sink, inputs, tile, |(t, m, n)| delta_star_row(&ctx.trace, &t, m, n, tol))?;
        }
        Command::Tu { level, y } => {
            let inputs: Vec<_> = lv(level)?
                .into_iter()
                .flat_map(|t| y.values().iter().map(move |&y| (t, y)))
                .collect();
            emit(&mut sink, inputs, tile, |(t, y)| {
                Ok(TuRow { k: t.k, p: t.p, nu: t.nu, y, t: t_cutoff(y, t.k)?, u: u_cutoff(y, t.k, t.p, t.nu)? })
            })?;
        }
        Command::Constants { level } => {
            emit(&mut sink, lv(level)?, tile, |t| {
                let q = q_polynomial(t.k, t.p, t.q_hat(), &default_g())?;
                Ok(ConstantsRow {
                    k: t.k,
                    p: t.p,
                    nu: t.nu,
                    q_hat: t.q_hat(),
                    g_k: g_k(t.k, t.p)?,
                    a3: q.a3,
                    a2: q.a2,
                    a1: q.a1,
                    a0: q.a0,
                    a2_printed: a2_printed(t.k, t.p)?,
                    phi_main: as_f64(phi_main(t.nu, t.p)),
                    q_at_log_q_hat: q.value,
                })
            })?;
        }
        // Each moment already runs in parallel internally, so tuples go one at a time.
        Command::M2 { level, m } => {
            let inputs: Vec<_> = lv(level)?
                .into_iter()
                .flat_map(|t| m.values().iter().map(move |&m| (t, m)))
                .collect();
            emit(&mut sink, inputs, 1, |(t, m)| ctx.engine.m2(m, &t, tol).map(MomentRow::from))?;
        }
        Command::M3 { level } => {
            emit(&mut sink, lv(level)?, 1, |t| ctx.engine.m3(&t, tol).map(MomentRow::from))?;
        }
        Command::Bound { level } => {
            emit(&mut sink, lv(level)?, 1, |t| {
                let b = ctx.engine.nonvanishing_bound(&t, tol)?;
                Ok(BoundRow {
                    k: t.k,
                    p: t.p,
                    nu: t.nu,
                    m2: b.m2.computed.value,
                    m2_tail: b.m2.computed.tail,
                    m3: b.m3.computed.value,
                    m3_tail: b.m3.computed.tail,
                    bound: b.bound,
                    c_effective: b.c_effective,
                    predicted_bound: b.predicted_bound,
                    full: Some(b),
                })
            })?;
        }
        Command::Verify { quick } => {
            drop(sink);
            return verify::run(*quick, &ctx.trace, &mut std::io::stdout().lock()).map_err(Failure::Io).and_then(|failed| {
                if failed == 0 {
                    Ok(())
                } else {
                    Err(Failure::Verification(failed))
                }
            });
        }
    }
    sink.flush().map_err(Failure::Io)
}

pub fn delta_star_row(trace: &TraceFormula, t: &TraceParams, m: u64, n: u64, tol: f64) -> Result<DeltaStarRow, Error> {
    let d = trace.delta_star(t, m, n, tol)?;
    let main_term = if m == n && m % t.p != 0 { as_f64(phi_main(t.nu, t.p)) } else { 0.0 };
    Ok(DeltaStarRow {
        k: t.k,
        p: t.p,
        nu: t.nu,
        m,
        n,
        value: d.value,
        tail: d.tail,
        main_term,
        budget: error_budget(m, n, t),
    })
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} threads: {e}");
            return EXIT_USAGE;
        }
    };

    let kcache = Arc::new(KloostermanCache::new());
    if let Some(path) = &cli.cache {
        match cache::load(path, &kcache) {
            Ok(cache::LoadOutcome::Discarded) => {
                eprintln!("warning: cache {} is corrupt or stale; ignoring it", path.display())
            }
            Ok(_) => {}
            Err(e) => eprintln!("warning: cannot read cache {}: {e}", path.display()),
        }
    }
    let trace = TraceFormula::new(kcache.clone());
    let ctx = Context {
        engine: MomentEngine::new(trace.clone()),
        trace,
        tol: cli.tol,
        tile: 4 * threads,
    };

    let stdout = std::io::stdout();
    let result = pool.install(|| execute(&cli.command, &ctx, stdout.lock(), cli.format));

    if let Some(path) = &cli.cache {
        if let Err(e) = cache::save(path, &kcache) {
            eprintln!("warning: cannot write cache {}: {e}", path.display());
        }
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            EXIT_NUMERIC
        }
        Err(Failure::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_NUMERIC
        }
        Err(Failure::Verification(n)) => {
            eprintln!("{n} verification check(s) failed");
            EXIT_VERIFY
        }
    }
}
