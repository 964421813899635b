use std::fmt::Write as _;
use std::path::Path;

use levyou::density::{
    density_derivative, invariant_density, transition_density, transition_grid, DensityField, StationaryTransform,
};
use levyou::polyspec::{EigenSystem, MultiIndex};
use levyou::simulate::{export_samples, sample_transition, SampleMetadata, SamplerConfig};
use levyou::spectrum::{compactness_diagnostic, isospectrality_check, mehler_kernel, threshold_time};
use levyou::verify::{run_all, Status, VerifyContext};
use serde_json::{json, Value};

use crate::config::{ConfigError, Loaded};
use crate::output::{sig17, to_json_string, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Why a command did not succeed; selects the exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Compute(#[from] levyou::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            _ => 2,
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn bad_arg(path: &str, message: impl Into<String>) -> Failure {
    Failure::Config(ConfigError::Field { path: path.into(), message: message.into() })
}

/// Parses `"1,0"` into a multi-index of dimension `d`.
pub fn parse_index(text: &str, d: usize, flag: &str) -> Result<MultiIndex, Failure> {
    let parts: Result<Vec<u32>, _> = text.split(',').map(|s| s.trim().parse::<u32>()).collect();
    match parts {
        Ok(v) if v.len() == d => Ok(MultiIndex(v)),
        Ok(v) => Err(bad_arg(flag, format!("index {text} has {} entries, model dimension is {d}", v.len()))),
        Err(e) => Err(bad_arg(flag, format!("index {text}: {e}"))),
    }
}

/// Parses `"0.5,-1"` into a point of dimension `d`.
pub fn parse_point(text: &str, d: usize, flag: &str) -> Result<Vec<f64>, Failure> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parts {
        Ok(v) if v.len() == d => Ok(v),
        Ok(v) => Err(bad_arg(flag, format!("point {text} has {} entries, model dimension is {d}", v.len()))),
        Err(e) => Err(bad_arg(flag, format!("point {text}: {e}"))),
    }
}

fn write_field(field: &DensityField, out: &Path, format: Format) -> Outcome {
    match format {
        Format::Csv => field.save_csv(out)?,
        Format::Json => write_json(out, &field.to_json())?,
    }
    Ok(())
}

fn csv_row(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

pub fn spectrum(l: &Loaded, out: &Path, format: Format) -> Outcome {
    let report = isospectrality_check(&l.model, l.config.degree_cap)?;
    match format {
        Format::Json => {
            let mut doc = serde_json::to_value(&report).expect("serializable");
            // needs finite moments and a real diagonalizable drift
            doc["threshold_time"] = match threshold_time(&l.model, &l.grid(), l.config.degree_cap) {
                Ok(th) => serde_json::to_value(th).expect("serializable"),
                Err(_) => Value::Null,
            };
            write_json(out, &doc)?
        }
        Format::Csv => {
            let mut s = String::from("eigenvalue,lattice,drift_algebraic,drift_geometric,drift_index,generator_algebraic,generator_geometric,generator_index\n");
            for line in &report.lines {
                let gen = match line.generator {
                    Some(g) => [g.algebraic, g.geometric, g.index].map(|v| v.to_string()),
                    None => [(); 3].map(|_| String::new()),
                };
                let mut cells = vec![
                    sig17(line.eigenvalue),
                    line.lattice_multiplicity.to_string(),
                    line.drift.algebraic.to_string(),
                    line.drift.geometric.to_string(),
                    line.drift.index.to_string(),
                ];
                cells.extend(gen);
                s.push_str(&csv_row(&cells));
            }
            std::fs::write(out, s)?;
        }
    }
    Ok(())
}

pub fn eigen(l: &Loaded, indices: &[String], out: &Path, format: Format) -> Outcome {
    let d = l.model.dim();
    let ns: Vec<MultiIndex> = indices
        .iter()
        .flat_map(|s| s.split(';'))
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_index(s, d, "--n"))
        .collect::<Result<_, _>>()?;
    if ns.is_empty() {
        return Err(bad_arg("--n", "at least one index is required"));
    }
    let degree = ns.iter().map(|n| n.order()).max().unwrap_or(0).max(1);
    l.require_polynomial(degree)?;
    let es = EigenSystem::new(&l.model, degree)?;
    let tr = StationaryTransform::new(&l.model, &l.grid())?;
    let mut entries = Vec::new();
    let mut fields = Vec::new();
    for n in &ns {
        let h = es.eigenfunction(n)?;
        let g = es.coeigenfunction_on(n, &tr);
        entries.push(json!({
            "n": n.0,
            "eigenvalue": es.eigenvalue(n),
            "H": h.to_json(),
            "c_n": es.coordinate_constant(n),
        }));
        fields.push(g);
    }
    match format {
        Format::Json => {
            for (e, g) in entries.iter_mut().zip(&fields) {
                let values: Vec<Value> = g
                    .field
                    .values
                    .iter()
                    .zip(&g.mask)
                    .map(|(&v, &ok)| if ok { json!(v) } else { Value::Null })
                    .collect();
                e["G"] = json!({"halfwidth": g.field.grid.halfwidth, "n": g.field.grid.n, "values": values});
            }
            let doc = json!({"scale": es.scale(), "rates": es.rates(), "entries": entries});
            write_json(out, &doc)?;
        }
        Format::Csv => {
            let grid = &fields[0].field.grid;
            let mut head: Vec<String> = (0..d).map(|j| format!("axis{j}")).collect();
            head.extend(ns.iter().map(|n| format!("G_{n}")));
            let mut s = csv_row(&head);
            for k in 0..grid.len() {
                let mut cells: Vec<String> = grid.point(k).into_iter().map(sig17).collect();
                cells.extend(fields.iter().map(|g| if g.mask[k] { sig17(g.field.values[k]) } else { String::new() }));
                s.push_str(&csv_row(&cells));
            }
            std::fs::write(out, s)?;
            let mut side = out.as_os_str().to_owned();
            side.push(".json");
            write_json(Path::new(&side), &json!({"scale": es.scale(), "rates": es.rates(), "entries": entries}))?;
        }
    }
    Ok(())
}

pub fn density(l: &Loaded, deriv: Option<&str>, out: &Path, format: Format) -> Outcome {
    let grid = l.grid();
    let field = match deriv {
        None => invariant_density(&l.model, &grid)?,
        Some(m) => density_derivative(&l.model, &grid, &parse_index(m, l.model.dim(), "--deriv")?)?,
    };
    write_field(&field, out, format)
}

pub fn transition(l: &Loaded, t: f64, x: &str, out: &Path, format: Format) -> Outcome {
    if t.is_nan() || t <= 0.0 {
        return Err(bad_arg("--t", "time must be positive"));
    }
    let x = parse_point(x, l.model.dim(), "--x")?;
    let grid = match &l.config.grid {
        Some(_) => l.grid(),
        None => transition_grid(&l.model, t, &x, l.grid().n[0])?,
    };
    write_field(&transition_density(&l.model, t, &x, &grid)?, out, format)
}

pub fn mehler(l: &Loaded, t: f64, x: &str, y: &str, cutoff: usize, out: &Path, format: Format) -> Outcome {
    if !l.model.pi().is_null() {
        return Err(bad_arg("pi", "the Mehler kernel needs a Gaussian model (pi of type Null)"));
    }
    let d = l.model.dim();
    let (x, y) = (parse_point(x, d, "--x")?, parse_point(y, d, "--y")?);
    let es = EigenSystem::new(&l.model, cutoff)?;
    let v = mehler_kernel(&es, t, &x, &y, cutoff)?;
    match format {
        Format::Json => write_json(
            out,
            &json!({"t": t, "x": x, "y": y, "N": cutoff, "series": v.series, "closedForm": v.closed_form}),
        )?,
        Format::Csv => std::fs::write(
            out,
            format!("t,N,series,closedForm\n{},{cutoff},{},{}\n", sig17(t), sig17(v.series), sig17(v.closed_form)),
        )?,
    }
    Ok(())
}

pub fn simulate(l: &Loaded, t: f64, x: &str, n: usize, out: &Path, format: Format) -> Outcome {
    if t.is_nan() || t <= 0.0 {
        return Err(bad_arg("--t", "time must be positive"));
    }
    let x = parse_point(x, l.model.dim(), "--x")?;
    let cfg = SamplerConfig::new(l.config.seed, n);
    let samples = sample_transition(&l.model, &x, t, &cfg)?;
    let meta = SampleMetadata { seed: l.config.seed, n, t, model_hash: l.model_hash() };
    match format {
        Format::Csv => export_samples(&samples, &meta, out)?,
        Format::Json => {
            let rows: Vec<&[f64]> = samples.rows().collect();
            write_json(out, &json!({"metadata": meta, "samples": rows}))?;
        }
    }
    Ok(())
}

pub fn verify(l: &Loaded, out: &Path, format: Format) -> Outcome {
    let mut ctx = VerifyContext::new(&l.model, l.config.seed);
    ctx.grid = l.grid();
    ctx.degree = l.config.degree_cap;
    let results = run_all(&ctx);
    let mut table = String::new();
    for r in &results {
        let status = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let _ = writeln!(table, "{status:<4}  {:<9} {:<28} {} [{:.1}s]", r.module, r.id, r.detail, r.seconds);
    }
    print!("{table}");
    let failed = results.iter().filter(|r| r.status == Status::Fail).count();
    // timings stay on stdout so the written report is reproducible
    let rows: Vec<Value> = results
        .iter()
        .map(|r| json!({"id": r.id, "module": r.module, "description": r.description, "status": r.status, "detail": r.detail}))
        .collect();
    match format {
        Format::Json => write_json(out, &json!({"failed": failed, "checks": rows}))?,
        Format::Csv => {
            let mut s = String::from("id,module,status,detail\n");
            for r in &results {
                let status = serde_json::to_value(r.status).expect("serializable");
                let _ = writeln!(s, "{},{},{},\"{}\"", r.id, r.module, status.as_str().unwrap_or(""), r.detail.replace('"', "\"\""));
            }
            std::fs::write(out, s)?;
        }
    }
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        return Err(Failure::Verification(failed));
    }
    Ok(())
}

pub fn diagnose(l: &Loaded, out: &Path, format: Format) -> Outcome {
    let m = &l.model;
    let diag = m.diagnostics();
    let sd = m.spectral();
    let cap = l.config.degree_cap;
    let compactness = compactness_diagnostic(m, &l.grid(), cap)?;
    let poly_sup = if diag.poly_moment_sup.is_finite() { json!(diag.poly_moment_sup) } else { json!("inf") };
    let report = json!({
        "assumptions": {
            "(1)": {"holds": true, "kalman_index": m.kalman_index()},
            "(2)": {"holds": true, "spectral_abscissa": sd.abscissa, "log_moment": diag.log_moment},
            "polynomial": {"holds": diag.poly_moment(cap), "degree_cap": cap, "moment_order_supremum": poly_sup},
            "exponential": {"holds": diag.exp_moment},
        },
        "diagonalizable": sd.diagonalizable,
        "real_spectrum": sd.real_spectrum,
        "compactness": compactness,
    });
    match format {
        Format::Json => write_json(out, &report)?,
        Format::Csv => {
            let mut s = String::from("key,value\n");
            flatten("", &report, &mut s);
            std::fs::write(out, s)?;
        }
    }
    print!("{}", to_json_string(&report));
    Ok(())
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_u64() && !n.is_i64() => {
                let _ = writeln!(out, "{prefix},{}", sig17(f));
            }
            _ => {
                let _ = writeln!(out, "{prefix},{n}");
            }
        },
        Value::String(s) => {
            let _ = writeln!(out, "{prefix},{s}");
        }
        other => {
            let _ = writeln!(out, "{prefix},{other}");
        }
    }
}
