//! Loops and bulk curves from reports (or a generated loop) as CSV files.

use std::path::{Path, PathBuf};

use loopgeo_core::{DiscreteLoop, LoopRecord, MetricChart};
use serde_json::{json, Value};

use crate::source::build_loop;
use crate::{Context, Failure, Outcome, RunConfig, SCHEMA_VERSION};

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<String>) -> Result<(), Failure> {
    std::fs::write(dir.join(name), text).map_err(|e| Failure::Numerical(format!("cannot write {name}: {e}")))?;
    written.push(name.to_string());
    Ok(())
}

fn loop_csv(chart: &dyn MetricChart, rec: &Value) -> Result<String, Failure> {
    let rec: LoopRecord =
        serde_json::from_value(rec.clone()).map_err(|e| Failure::Config(format!("malformed loop record: {e}")))?;
    Ok(DiscreteLoop::from_record(chart, &rec)?.to_csv())
}

fn series_csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn export_report(doc: &Value, dir: &Path, written: &mut Vec<String>) -> Result<String, Failure> {
    if doc.get("schema").and_then(Value::as_u64) != Some(u64::from(SCHEMA_VERSION)) {
        return Err(Failure::Config(format!(
            "input is not a schema {SCHEMA_VERSION} report"
        )));
    }
    let cfg: RunConfig = serde_json::from_value(doc["config"].clone())
        .map_err(|e| Failure::Config(format!("report carries an unreadable config: {e}")))?;
    let chart = cfg.chart.build()?;
    let chart = chart.as_ref();
    let result = &doc["result"];
    let command = doc["command"].as_str().unwrap_or_default().to_string();
    match command.as_str() {
        "find" => {
            for (k, p) in result["points"].as_array().into_iter().flatten().enumerate() {
                write(
                    dir,
                    &format!("point_{k:03}.csv"),
                    &loop_csv(chart, &p["loop"])?,
                    written,
                )?;
            }
        }
        "sweep" => {
            write(dir, "argmax.csv", &loop_csv(chart, &result["loop"])?, written)?;
            for (k, m) in result["family"].as_array().into_iter().flatten().enumerate() {
                write(dir, &format!("member_{k:03}.csv"), &loop_csv(chart, m)?, written)?;
            }
            let values = result["values"].as_array().cloned().unwrap_or_default();
            let rows = values.iter().map(|v| format!("{},{}", v[0], v[1]));
            write(dir, "values.csv", &series_csv("alpha,value", rows), written)?;
            let history = result["history"].as_array().cloned().unwrap_or_default();
            let rows = history.iter().enumerate().map(|(i, v)| format!("{i},{v}"));
            write(dir, "history.csv", &series_csv("round,max_energy", rows), written)?;
            let energies = result["member_energies"].as_array().cloned().unwrap_or_default();
            let rows = energies.iter().enumerate().map(|(i, v)| format!("{i},{v}"));
            write(dir, "profile.csv", &series_csv("member,energy", rows), written)?;
        }
        "analyze" => {
            write(dir, "loop.csv", &loop_csv(chart, &result["loop"])?, written)?;
            let eigs = result
                .pointer("/report/inertia/eigenvalues")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            let rows = eigs.iter().enumerate().map(|(i, v)| format!("{i},{v}"));
            write(dir, "eigenvalues.csv", &series_csv("index,eigenvalue", rows), written)?;
        }
        other => return Err(Failure::Config(format!("cannot export `{other}` reports"))),
    }
    Ok(command)
}

pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, Failure> {
    let dir: PathBuf = ctx
        .out
        .clone()
        .ok_or_else(|| Failure::Config("export needs an output directory (--out DIR)".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let source = match &cfg.export.input {
        Some(path) => {
            let full = ctx.resolve(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", full.display())))?;
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", full.display())))?;
            export_report(&doc, &dir, &mut written)?
        }
        None => {
            let chart = cfg.chart.build()?;
            let lp = build_loop(chart.as_ref(), cfg.nodes, &cfg.analyze.source, ctx)?;
            write(&dir, "loop.csv", &lp.to_csv(), &mut written)?;
            "source".to_string()
        }
    };
    Ok(Outcome {
        summary: format!("export: {} files from {source} into {}", written.len(), dir.display()),
        result: json!({ "from": source, "files": written }),
        assertions: Vec::new(),
    })
}
