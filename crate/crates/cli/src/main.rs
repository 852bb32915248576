mod args;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use nugh::fitting::{fit_mle, ingest_series, FitOptions};
use nugh::gh::GhParams;
use nugh::inversion::{cdf_at, default_x_range, pdf_grid, quantile, tail_diagnostic};
use nugh::montecarlo::{par_sample, BaseLaw, BaseSampler, RandomSumSpec};
use nugh::nu_families::NuFamily;
use nugh::nu_transform::{cheb_gh_closed_form, geo_gh_closed_form, NuGhChar};
use nugh::suite::{run_check, CheckConfig};
use nugh::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use args::{BaseKind, Cli, Command, Format, Formula, GhArgs, Method};

const OUTPUT_DIR_VAR: &str = "NUGH_OUTPUT_DIR";

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

enum Outcome {
    Table(Table),
    Report(Value),
}

fn invalid(op: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain { op, msg: msg.into() }
}

fn gh_params(gh: &GhArgs) -> Result<GhParams> {
    GhParams::new(gh.lambda, gh.alpha, gh.beta, gh.delta, gh.mu)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn check_range(op: &'static str, lo: f64, hi: f64, points: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(op, format!("range ({lo}, {hi}) must be finite and increasing")));
    }
    if points < 2 {
        return Err(invalid(op, format!("points = {points} must be at least 2")));
    }
    Ok(())
}

fn grid_range(op: &'static str, cf: &NuGhChar, lo: Option<f64>, hi: Option<f64>) -> Result<(f64, f64)> {
    match (lo, hi) {
        (Some(a), Some(b)) => Ok((a, b)),
        (None, None) => default_x_range(cf),
        _ => Err(invalid(op, "give both --x-min and --x-max or neither")),
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Cf(a) => {
            const OP: &str = "cli::cf";
            let params = gh_params(&a.gh)?;
            let ts = match a.t {
                Some(t) => vec![t],
                None => {
                    check_range(OP, a.t_min, a.t_max, a.points)?;
                    linspace(a.t_min, a.t_max, a.points)
                }
            };
            let cf = NuGhChar::new(a.family, params)?;
            let rows = ts
                .iter()
                .map(|&t| {
                    let g = match (a.formula, a.family) {
                        (Formula::Composed, _) => cf.eval_at(t)?,
                        (Formula::Closed, NuFamily::Geometric) => geo_gh_closed_form(&params, t)?,
                        (Formula::Closed, NuFamily::Chebyshev) => cheb_gh_closed_form(&params, t)?,
                    };
                    Ok(vec![t, g.re, g.im])
                })
                .collect::<Result<_>>()?;
            Ok(Outcome::Table(Table { columns: vec!["t", "re", "im"], rows }))
        }
        Command::Pdf(a) => {
            const OP: &str = "cli::pdf";
            let cf = NuGhChar::new(a.family, gh_params(&a.gh)?)?;
            let (lo, hi) = grid_range(OP, &cf, a.x_min, a.x_max)?;
            check_range(OP, lo, hi, a.points)?;
            let mut grid = pdf_grid(&cf, (lo, hi), a.points, None)?;
            if !grid.unresolved.is_empty() {
                eprintln!("note: {} grid point(s) at the singularity are unresolved (NaN)", grid.unresolved.len());
                for &j in &grid.unresolved {
                    grid.pdf[j] = f64::NAN;
                }
            }
            let rows = grid.x.iter().zip(&grid.pdf).map(|(&x, &p)| vec![x, p]).collect();
            Ok(Outcome::Table(Table { columns: vec!["x", "pdf"], rows }))
        }
        Command::Cdf(a) => {
            const OP: &str = "cli::cdf";
            let params = gh_params(&a.gh)?;
            let xs = if a.x.is_empty() {
                check_range(OP, a.x_min, a.x_max, a.points)?;
                linspace(a.x_min, a.x_max, a.points)
            } else {
                a.x.clone()
            };
            if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
                return Err(invalid(OP, format!("x = {x} is not finite")));
            }
            let cf = NuGhChar::new(a.family, params)?;
            let rows = xs.iter().map(|&x| Ok(vec![x, cdf_at(&cf, x, None)?])).collect::<Result<_>>()?;
            Ok(Outcome::Table(Table { columns: vec!["x", "cdf"], rows }))
        }
        Command::Quantile(a) => {
            const OP: &str = "cli::quantile";
            let params = gh_params(&a.gh)?;
            if let Some(q) = a.q.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
                return Err(invalid(OP, format!("level {q} outside (0, 1)")));
            }
            let cf = NuGhChar::new(a.family, params)?;
            let rows = a.q.iter().map(|&q| Ok(vec![q, quantile(&cf, q, None)?])).collect::<Result<_>>()?;
            Ok(Outcome::Table(Table { columns: vec!["q", "x"], rows }))
        }
        Command::Sample(a) => {
            const OP: &str = "cli::sample";
            let params = gh_params(&a.gh)?;
            if a.n == 0 {
                return Err(invalid(OP, "n must be positive"));
            }
            let samples = match a.method {
                Method::Mixture => {
                    if a.p.is_some() {
                        return Err(invalid(OP, "--p applies to --method random-sum only"));
                    }
                    let sampler = BaseSampler::new(BaseLaw::NuGh { family: a.family, params })?;
                    par_sample(a.n, cli.seed, cli.stream, |r| sampler.sample(r))?
                }
                Method::RandomSum => {
                    let p = a.p.ok_or_else(|| invalid(OP, "--method random-sum needs --p"))?;
                    let spec = RandomSumSpec::new(a.family, p, a.index)?;
                    let law = match a.base {
                        BaseKind::Gaussian => BaseLaw::Gaussian { sigma: a.sigma },
                        BaseKind::Laplace => BaseLaw::Laplace,
                        BaseKind::Hsecant => BaseLaw::HSecant,
                        BaseKind::Linnik => BaseLaw::Linnik { alpha: a.linnik_alpha },
                        BaseKind::Nig => BaseLaw::Nig { params },
                        BaseKind::NuGh => BaseLaw::NuGh { family: a.family, params },
                    };
                    let sampler = BaseSampler::new(law)?;
                    par_sample(a.n, cli.seed, cli.stream, |r| spec.draw(&sampler, r))?
                }
            };
            let rows = samples.into_iter().map(|x| vec![x]).collect();
            Ok(Outcome::Table(Table { columns: vec!["x"], rows }))
        }
        Command::Check(a) => {
            if a.samples < 100 {
                return Err(invalid("cli::check", format!("samples = {} must be at least 100", a.samples)));
            }
            let families = a.family.map_or_else(|| NuFamily::ALL.to_vec(), |f| vec![f]);
            let report = run_check(&CheckConfig { families, seed: cli.seed, samples: a.samples });
            Ok(Outcome::Report(to_value(&report)))
        }
        Command::Tails(a) => {
            const OP: &str = "cli::tails";
            let cf = NuGhChar::new(a.family, gh_params(&a.gh)?)?;
            if !(0.5 <= a.q_low && a.q_low < a.q_high && a.q_high < 1.0) {
                return Err(invalid(
                    OP,
                    format!("window ({}, {}) must satisfy 0.5 <= low < high < 1", a.q_low, a.q_high),
                ));
            }
            let (lo, hi) = grid_range(OP, &cf, a.x_min, a.x_max)?;
            check_range(OP, lo, hi, a.points)?;
            let grid = pdf_grid(&cf, (lo, hi), a.points, None)?;
            let report = tail_diagnostic(&grid, a.side, (a.q_low, a.q_high))?;
            Ok(Outcome::Report(json!({ "tail": report, "xRange": [lo, hi], "points": a.points })))
        }
        Command::Fit(a) => {
            if a.starts == 0 {
                return Err(invalid("cli::fit", "starts must be positive"));
            }
            let data = ingest_series(&a.input, a.input_format)?;
            let opts = FitOptions {
                starts: a.starts,
                seed: cli.seed,
                free_lambda: a.free_lambda,
                max_iterations: a.max_iterations,
            };
            let fit = fit_mle(a.family, &data, &opts)?;
            Ok(Outcome::Report(json!({ "fit": fit, "observations": data.n(), "source": data.source() })))
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Cf(_) => "cf",
        Command::Pdf(_) => "pdf",
        Command::Cdf(_) => "cdf",
        Command::Quantile(_) => "quantile",
        Command::Sample(_) => "sample",
        Command::Check(_) => "check",
        Command::Tails(_) => "tails",
        Command::Fit(_) => "fit",
    }
}

fn is_table_command(c: &Command) -> bool {
    matches!(c, Command::Cf(_) | Command::Pdf(_) | Command::Cdf(_) | Command::Quantile(_) | Command::Sample(_))
}

fn render(cli: &Cli, outcome: &Outcome, format: Format) -> String {
    let envelope = |result: Value| {
        let doc = json!({
            "version": nugh::VERSION,
            "command": command_name(&cli.command),
            "config": to_value(cli),
            "result": result,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
        s.push('\n');
        s
    };
    match (outcome, format) {
        (Outcome::Table(t), Format::Csv) => t.csv(),
        (Outcome::Table(t), Format::Json) => envelope(json!({ "columns": t.columns, "rows": t.rows })),
        (Outcome::Report(v), _) => envelope(v.clone()),
    }
}

fn destination(cli: &Cli, format: Format) -> Option<PathBuf> {
    let dir = std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from);
    match (&cli.output, dir) {
        (Some(p), Some(d)) if p.is_relative() => Some(d.join(p)),
        (Some(p), _) => Some(p.clone()),
        (None, Some(d)) => {
            let ext = match format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            Some(d.join(format!("{}.{ext}", command_name(&cli.command))))
        }
        (None, None) => None,
    }
}

/// Writes through a sibling temporary file so a failed write leaves nothing behind.
fn write_output(path: Option<PathBuf>, text: &str) -> Result<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())?;
        return Ok(out.flush()?);
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.clone().into_os_string();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = fs::write(&tmp, text).and_then(|_| fs::rename(&tmp, &path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let format = match (cli.format, is_table_command(&cli.command)) {
        (Some(Format::Csv), false) => {
            let e = invalid("cli", format!("{} writes JSON only", command_name(&cli.command)));
            eprintln!("error: {e}");
            return exit_code(&e);
        }
        (Some(f), _) => f,
        (None, true) => Format::Csv,
        (None, false) => Format::Json,
    };
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_output(destination(&cli, format), &render(&cli, &outcome, format)) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    if let Outcome::Report(v) = &outcome {
        if v.get("pass") == Some(&Value::Bool(false)) {
            let failed = v.get("failed").and_then(Value::as_u64).unwrap_or(0);
            eprintln!("error: check suite: {failed} item(s) failed");
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
