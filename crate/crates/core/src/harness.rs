//! Seeded experiment runs and CSV output.
//!
//! Realizations run in parallel; rows are always merged in
//! `(sweep value, realization, scheme)` order so output files are
//! byte-identical across runs. Wall time is kept out of the result CSV
//! for the same reason and written separately by [`write_timings_csv`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::benchmarks::{solve_scheme, Scheme};
use crate::config::ExperimentSpec;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{generate_channels, ChannelSet};
use crate::solver::SolveTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    /// `NaN` when the experiment does not sweep.
    pub sweep_value: f64,
    pub realization: usize,
    pub seed: u64,
    pub sum_rate: f64,
    pub scheduled_users: Vec<usize>,
    pub bits: Vec<u32>,
    pub converged: bool,
    pub padded: bool,
    pub wall_time_ms: f64,
    /// Set when the scheme failed; the row then carries a zero sum rate.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub mean_sum_rate: f64,
    pub realizations: usize,
    pub converged: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub trace_files: Vec<PathBuf>,
}

/// Format with 9 significant digits, `%.9g` style.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn trace_name(scheme: Scheme, sweep_index: usize, realization: usize) -> String {
    format!("trace_{}_{sweep_index}_{realization}.csv", scheme.name().to_lowercase())
}

/// Run every `(sweep value, realization, scheme)` combination. When
/// `trace_dir` is given, one convergence file per solve is written there.
pub fn run_experiment_with(spec: &ExperimentSpec, trace_dir: Option<&Path>) -> Result<ExperimentOutput> {
    spec.validate()?;
    let points = spec.sweep_points();
    let n_real = spec.experiment.num_realizations;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..n_real).map(move |r| (i, r)))
        .collect();

    let per_job: Vec<Result<(Vec<ResultRow>, Vec<PathBuf>)>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let value = points[i];
            let sys = spec.system_at(value)?;
            let seed = spec.experiment.base_seed.wrapping_add(r as u64);
            let channels = generate_channels(&sys, seed)?;
            let mut rows = Vec::new();
            let mut files = Vec::new();
            for &scheme in &spec.experiment.schemes {
                let start = Instant::now();
                let outcome = solve_scheme(scheme, &channels, &sys, &spec.solver, &spec.benchmark, seed);
                let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
                let row = match outcome {
                    Ok(res) => {
                        if let Some(dir) = trace_dir {
                            let path = dir.join(trace_name(scheme, i, r));
                            emit_convergence(&res.trace, &path)?;
                            files.push(path);
                        }
                        ResultRow {
                            scheme,
                            sweep_value: value,
                            realization: r,
                            seed,
                            sum_rate: res.sum_rate,
                            scheduled_users: res.scheduled_users,
                            bits: res.d_integer,
                            converged: res.converged,
                            padded: res.padded,
                            wall_time_ms,
                            error: None,
                        }
                    }
                    Err(e) => ResultRow {
                        scheme,
                        sweep_value: value,
                        realization: r,
                        seed,
                        sum_rate: 0.0,
                        scheduled_users: Vec::new(),
                        bits: Vec::new(),
                        converged: false,
                        padded: false,
                        wall_time_ms,
                        error: Some(e.to_string()),
                    },
                };
                rows.push(row);
            }
            Ok((rows, files))
        })
        .collect();

    let mut out = ExperimentOutput::default();
    for job in per_job {
        let (rows, files) = job?;
        out.rows.extend(rows);
        out.trace_files.extend(files);
    }
    out.aggregates = aggregate(&out.rows, &points, &spec.experiment.schemes);
    Ok(out)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment_with(spec, None)
}

fn same_point(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Mean sum rate per `(sweep value, scheme)`, in sweep then scheme order.
pub fn aggregate(rows: &[ResultRow], points: &[f64], schemes: &[Scheme]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &value in points {
        for &scheme in schemes {
            let sel: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.scheme == scheme && same_point(r.sweep_value, value))
                .collect();
            if sel.is_empty() {
                continue;
            }
            out.push(AggregateRow {
                scheme,
                sweep_value: value,
                mean_sum_rate: sel.iter().map(|r| r.sum_rate).sum::<f64>() / sel.len() as f64,
                realizations: sel.len(),
                converged: sel.iter().filter(|r| r.converged).count(),
            });
        }
    }
    out
}

pub const RESULT_HEADER: [&str; 10] = [
    "scheme",
    "sweep_value",
    "realization",
    "seed",
    "sum_rate",
    "converged",
    "padded",
    "scheduled_users",
    "bits",
    "error",
];

fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[ResultRow]) -> csv::Result<()> {
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            fmt_sig9(r.sweep_value),
            r.realization.to_string(),
            r.seed.to_string(),
            fmt_sig9(r.sum_rate),
            r.converged.to_string(),
            r.padded.to_string(),
            join(&r.scheduled_users),
            join(&r.bits),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The result CSV as a string (the exact bytes [`write_rows_csv`] writes).
pub fn rows_to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    write_rows(&mut w, rows).map_err(csv_err(Path::new("<memory>")))?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_rows_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_rows(&mut w, rows).map_err(csv_err(path))
}

pub fn write_aggregate_csv(aggs: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["scheme", "sweep_value", "mean_sum_rate", "realizations", "converged"])?;
        for a in aggs {
            w.write_record([
                a.scheme.name().to_string(),
                fmt_sig9(a.sweep_value),
                fmt_sig9(a.mean_sum_rate),
                a.realizations.to_string(),
                a.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}

pub fn write_timings_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["scheme", "sweep_value", "realization", "wall_time_ms"])?;
        for r in rows {
            w.write_record([
                r.scheme.name().to_string(),
                fmt_sig9(r.sweep_value),
                r.realization.to_string(),
                format!("{:.3}", r.wall_time_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}

/// One row per inner iteration.
pub fn emit_convergence(trace: &SolveTrace, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["iter", "outer_iter", "lambda", "fp_objective", "sum_rate", "penalty_value"])?;
        for r in &trace.rows {
            w.write_record([
                r.iter.to_string(),
                r.outer.to_string(),
                fmt_sig9(r.lambda),
                fmt_sig9(r.fp_objective),
                fmt_sig9(r.sum_rate),
                fmt_sig9(r.penalty_value),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}

/// Header `M,K,seed`, then `row,col,re,im` per entry of `H` in row-major
/// order. Floats use the shortest representation that parses back exactly.
pub fn write_channels(channels: &ChannelSet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let h = &channels.h;
    let io = |e| Error::io(path, e);
    writeln!(w, "{},{},{}", h.nrows(), h.ncols(), channels.seed).map_err(io)?;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            let z = h[(i, j)];
            writeln!(w, "{i},{j},{},{}", z.re, z.im).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Parse a channel dump back into `(H, seed)`.
pub fn read_channels(path: &Path) -> Result<(CMat, u64)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |msg: &str| Error::invalid(format!("{}: {msg}", path.display()));
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let head: Vec<&str> = header.split(',').collect();
    if head.len() != 3 {
        return Err(bad("header must be M,K,seed"));
    }
    let m: usize = head[0].parse().map_err(|_| bad("bad M"))?;
    let k: usize = head[1].parse().map_err(|_| bad("bad K"))?;
    let seed: u64 = head[2].parse().map_err(|_| bad("bad seed"))?;
    let mut h = CMat::zeros(m, k);
    let mut count = 0;
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("entry lines need 4 fields"));
        }
        let i: usize = f[0].parse().map_err(|_| bad("bad row"))?;
        let j: usize = f[1].parse().map_err(|_| bad("bad col"))?;
        if i >= m || j >= k {
            return Err(bad("index out of range"));
        }
        let re: f64 = f[2].parse().map_err(|_| bad("bad re"))?;
        let im: f64 = f[3].parse().map_err(|_| bad("bad im"))?;
        h[(i, j)] = Complex64::new(re, im);
        count += 1;
    }
    if count != m * k {
        return Err(bad("entry count does not match M*K"));
    }
    Ok((h, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1234567891.0), "1.23456789e+09");
        assert_eq!(fmt_sig9(1e-3), "0.001");
        assert_eq!(fmt_sig9(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig9(f64::NAN), "nan");
    }

    #[test]
    fn aggregate_means() {
        let row = |scheme, v: f64, rate| ResultRow {
            scheme,
            sweep_value: v,
            realization: 0,
            seed: 0,
            sum_rate: rate,
            scheduled_users: vec![],
            bits: vec![],
            converged: true,
            padded: false,
            wall_time_ms: 0.0,
            error: None,
        };
        let rows = vec![
            row(Scheme::Pbsca, 0.0, 1.0),
            row(Scheme::Pbsca, 0.0, 3.0),
            row(Scheme::Rs, 0.0, 1.0),
        ];
        let a = aggregate(&rows, &[0.0, 5.0], &[Scheme::Pbsca, Scheme::Rs]);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].mean_sum_rate, 2.0);
        assert_eq!(a[0].realizations, 2);
        assert_eq!(a[1].mean_sum_rate, 1.0);
    }
}
