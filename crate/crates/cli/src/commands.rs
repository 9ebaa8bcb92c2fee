use std::fs;
use std::io::Write;
use std::path::Path;

use hdq_core::diffusion::{DiffusionParams, LimitLaw};
use hdq_core::heavy_traffic::{self, uniform_grid, Rounding, ScalingSequence};
use hdq_core::output::{csv, Cell};
use hdq_core::simulator::{simulate, SimConfig};
use hdq_core::validation::{self, Fault, ValidationConfig};
use hdq_core::{Error, Model, Region, StationaryDistribution};
use serde_json::{json, Map, Value};

use crate::args::{Command, Format, LimitArgs, ModelArgs, OutputArgs, RoundingArg, SequenceArgs};

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unstable { .. } | Error::InfeasibleN { .. } => 2,
            Error::SingularSystem(_) | Error::DivergentSum { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 1, message }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Exact { model, lmax, output } => exact(&model, lmax, &output),
        Command::Mgf { model, theta, output } => mgf(&model, &theta, &output),
        Command::Diffusion {
            limit,
            x,
            grid_end,
            grid_step,
            output,
        } => diffusion(&limit, x, grid_end, grid_step, &output),
        Command::Approx { seq, n, output } => approx(&seq, &n, &output),
        Command::Table1 { seq, n, output } => {
            let table = heavy_traffic::convergence_study(&sequence(&seq)?, &n)?;
            emit_table(&table, &output)
        }
        Command::SweepB1 {
            seq,
            b1_values,
            n,
            output,
        } => {
            let table = heavy_traffic::b1_sweep(&sequence(&seq)?, &b1_values, n)?;
            emit_table(&table, &output)
        }
        Command::Simulate {
            model,
            horizon,
            seed,
            warmup,
            batches,
            output,
        } => {
            let model = build_model(&model)?;
            let cfg = SimConfig {
                model: *model.params(),
                horizon,
                warmup_fraction: warmup,
                seed,
                batches,
            };
            let result = simulate(&cfg)?;
            match output.format {
                Format::Json => write_json(&json!({ "config": cfg, "result": result }), &output),
                Format::Csv => {
                    let rows = result
                        .state_occupancy
                        .iter()
                        .map(|s| vec![Cell::UInt(s.ell), Cell::UInt(s.k as u64), Cell::Num(s.fraction)]);
                    write_out(&csv(&["ell", "k", "fraction"], rows), &output)
                }
            }
        }
        Command::Validate {
            grid,
            seed,
            inject_fault,
            output,
        } => {
            let cfg = ValidationConfig {
                grid,
                seed,
                fault: inject_fault.then_some(Fault::PerturbTail),
            };
            let report = validation::run(&cfg)?;
            match output.format {
                Format::Json => write_json(&serde_json::to_value(&report).expect("serialisable"), &output)?,
                Format::Csv => {
                    let rows = report.checks.iter().map(|c| {
                        vec![
                            Cell::Text(c.name.to_string()),
                            Cell::Num(c.worst),
                            Cell::Num(c.threshold),
                            Cell::Text(if c.passed { "pass" } else { "fail" }.to_string()),
                        ]
                    });
                    write_out(&csv(&["check", "worst", "threshold", "status"], rows), &output)?
                }
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure {
                    code: 3,
                    message: format!("failed checks: {}", report.failing().join(", ")),
                })
            }
        }
    }
}

/// Merges the config file (if any) with the flags, flags taking precedence.
fn build_model(args: &ModelArgs) -> Result<Model, Failure> {
    let mut obj = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Error::Config("config must be a JSON object".into()).into()),
                Err(e) => return Err(Error::Config(e.to_string()).into()),
            }
        }
        None => Map::new(),
    };
    let floats = [
        ("lambda1", args.lambda1),
        ("mu1", args.mu1),
        ("lambda2", args.lambda2),
        ("mu2", args.mu2),
        ("rho1", args.rho1),
        ("rho2", args.rho2),
        ("rho12", args.rho12),
    ];
    for (key, v) in floats {
        if let Some(v) = v {
            obj.insert(key.into(), json!(v));
        }
    }
    for (key, v) in [("ell_d", args.ell_d), ("ell_u", args.ell_u)] {
        if let Some(v) = v {
            obj.insert(key.into(), json!(v));
        }
    }
    Ok(Model::from_json_object(&obj)?)
}

fn limit_params(a: &LimitArgs) -> Result<DiffusionParams, Failure> {
    Ok(DiffusionParams::new(a.b1, a.b2, a.ld, a.lu, a.rho12)?)
}

fn sequence(a: &SequenceArgs) -> Result<ScalingSequence, Failure> {
    let rounding = match a.rounding {
        RoundingArg::Nearest => Rounding::Nearest,
        RoundingArg::Floor => Rounding::Floor,
        RoundingArg::Ceil => Rounding::Ceil,
    };
    Ok(ScalingSequence {
        dp: limit_params(&a.limit)?,
        rho12_offset: a.rho12_offset,
        rounding,
    })
}

fn exact(args: &ModelArgs, lmax: Option<u64>, output: &OutputArgs) -> Result<(), Failure> {
    let model = build_model(args)?;
    let dist = StationaryDistribution::new(&model)?;
    let table = dist.distribution_table(lmax.unwrap_or(model.ell_u() + 10))?;
    match output.format {
        Format::Json => write_json(
            &json!({
                "model": model,
                "branch": dist.branch(),
                "pi0": dist.pi0(),
                "mean": dist.mean_queue_length(),
                "region_mass": Region::ALL.iter().map(|r| (r.name(), dist.region_mass(*r))).collect::<std::collections::BTreeMap<_, _>>(),
                "rows": table.rows,
                "tail": table.tail,
            }),
            output,
        ),
        Format::Csv => {
            let rows = table
                .rows
                .iter()
                .map(|r| vec![Cell::UInt(r.ell), Cell::UInt(r.k as u64), Cell::Num(r.prob)])
                .chain(std::iter::once(vec![
                    Cell::Text("tail".into()),
                    Cell::UInt(2),
                    Cell::Num(table.tail),
                ]));
            write_out(&csv(&["ell", "k", "prob"], rows), output)
        }
    }
}

fn mgf(args: &ModelArgs, thetas: &[f64], output: &OutputArgs) -> Result<(), Failure> {
    let model = build_model(args)?;
    let dist = StationaryDistribution::new(&model)?;
    let rows: Vec<Vec<f64>> = thetas
        .iter()
        .map(|&t| {
            let parts = Region::ALL.map(|r| dist.mgf_component(r, t));
            vec![t, parts[0], parts[1], parts[2], parts[3], parts.iter().sum()]
        })
        .collect();
    let header = ["theta", "psi11", "psi21", "psi12", "psi22", "psi"];
    numeric_output(&header, rows, output)
}

fn diffusion(
    a: &LimitArgs,
    x: Vec<f64>,
    grid_end: f64,
    grid_step: f64,
    output: &OutputArgs,
) -> Result<(), Failure> {
    let law = LimitLaw::new(limit_params(a)?)?;
    let grid = if x.is_empty() {
        if !(grid_step > 0.0 && grid_end >= 0.0) {
            return Err(usage("grid step must be positive and grid end non-negative".into()));
        }
        uniform_grid(grid_end, grid_step)
    } else {
        x
    };
    let rows = law.density_rows(&grid);
    match output.format {
        Format::Json => write_json(
            &json!({
                "params": law.params,
                "c0": law.c0,
                "mean": law.mean(),
                "limit_sqrtn_pi0": law.limit_sqrtn_pi0(),
                "rows": rows,
            }),
            output,
        ),
        Format::Csv => {
            let rows = rows
                .iter()
                .map(|r| vec![r.x, r.f11, r.f21, r.f12, r.f22, r.f, r.cdf])
                .collect();
            numeric_output(&["x", "f11", "f21", "f12", "f22", "f", "F"], rows, output)
        }
    }
}

fn approx(seq: &SequenceArgs, ns: &[u64], output: &OutputArgs) -> Result<(), Failure> {
    let seq = sequence(seq)?;
    let mean = LimitLaw::new(seq.dp)?.mean();
    let rows = ns
        .iter()
        .map(|&n| Ok(vec![n as f64, seq.approximate_mean(n)?, mean]))
        .collect::<Result<Vec<_>, Error>>()?;
    let table = csv_integral_first(&["n", "approx_mean", "diffusion_mean"], &rows);
    match output.format {
        Format::Csv => write_out(&table, output),
        Format::Json => write_json(&columns_json(&["n", "approx_mean", "diffusion_mean"], &rows), output),
    }
}

fn emit_table(table: &hdq_core::StudyTable, output: &OutputArgs) -> Result<(), Failure> {
    match output.format {
        Format::Csv => write_out(&table.to_csv(), output),
        Format::Json => write_json(&table.to_json(), output),
    }
}

fn numeric_output(header: &[&str], rows: Vec<Vec<f64>>, output: &OutputArgs) -> Result<(), Failure> {
    match output.format {
        Format::Csv => write_out(&csv(header, rows.into_iter().map(|r| r.into_iter().map(Cell::Num).collect())), output),
        Format::Json => write_json(&columns_json(header, &rows), output),
    }
}

fn csv_integral_first(header: &[&str], rows: &[Vec<f64>]) -> String {
    csv(
        header,
        rows.iter().map(|r| {
            let mut cells = vec![Cell::UInt(r[0] as u64)];
            cells.extend(r[1..].iter().map(|v| Cell::Num(*v)));
            cells
        }),
    )
}

fn columns_json(header: &[&str], rows: &[Vec<f64>]) -> Value {
    let mut cols = Map::new();
    for (i, name) in header.iter().enumerate() {
        cols.insert(name.to_string(), rows.iter().map(|r| json!(r[i])).collect());
    }
    json!({ "columns": cols })
}

/// Floats are written in their shortest round-tripping form.
fn write_json(value: &Value, output: &OutputArgs) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write_out(&text, output)
}

fn write_out(text: &str, output: &OutputArgs) -> Result<(), Failure> {
    match &output.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| usage(format!("cannot write output: {e}")))
        }
        Some(path) => atomic_write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
    }
}

/// Writes to a sibling temporary file, then renames it over `path`.
fn atomic_write(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
