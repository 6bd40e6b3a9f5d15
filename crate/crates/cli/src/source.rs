//! Building the loop named by a [`LoopSource`].

use std::f64::consts::PI;

use loopgeo_core::loops::{circle_polygon, parallel_circle};
use loopgeo_core::{DiscreteLoop, LoopRecord, MetricChart};
use serde_json::Value;

use crate::config::LoopSource;
use crate::{Context, Failure};

/// Finds a loop record inside a JSON document: a bare record, or a report
/// whose `result` carries a `loop`.
pub fn record_from_json(doc: &Value) -> Option<LoopRecord> {
    let candidates = [Some(doc), doc.get("loop"), doc.pointer("/result/loop")];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| serde_json::from_value::<LoopRecord>(v.clone()).ok())
}

pub fn build_loop(
    chart: &dyn MetricChart,
    nodes: usize,
    src: &LoopSource,
    ctx: &Context,
) -> Result<DiscreteLoop, Failure> {
    match src {
        LoopSource::File { path } => {
            let full = ctx.resolve(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Failure::Config(format!("cannot read loop {}: {e}", full.display())))?;
            if full.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
                return Ok(DiscreteLoop::from_csv(chart, &text)?);
            }
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", full.display())))?;
            let rec = record_from_json(&doc)
                .ok_or_else(|| Failure::Config(format!("{} holds no loop record", full.display())))?;
            Ok(DiscreteLoop::from_record(chart, &rec)?)
        }
        LoopSource::GreatCircle => {
            if chart.recenter_radius().is_none() {
                return Err(Failure::Config("`great_circle` needs the sphere chart".into()));
            }
            // The regular polygon is exactly critical at this chart radius.
            let center = vec![0.0; chart.dim()];
            Ok(circle_polygon(chart, &center, 1.0 / (PI / nodes as f64).cos(), nodes)?)
        }
        LoopSource::Parallel { height, winding } => Ok(parallel_circle(chart, *height, *winding, nodes)?),
        LoopSource::Circle { center, radius } => Ok(circle_polygon(chart, center, *radius, nodes)?),
    }
}
