//! Plan, sweep and table writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use geot_core::{LocationSet, PlanEdge};
use geot_core::partial::DUMMY_ID;
use serde_json::json;

use crate::CliError;

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

pub fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

fn id(locs: &LocationSet, i: usize) -> &str {
    if i < locs.len() { &locs.get(i).id } else { DUMMY_ID }
}

pub const PLAN_HEADER: [&str; 5] = ["from_id", "to_id", "mass", "unit_cost", "contribution"];

/// `edges` should already be sorted; indices past the location set are the dummy.
pub fn write_plan(dir: &Path, locs: &LocationSet, edges: &[PlanEdge]) -> Result<(), CliError> {
    let mut w = csv_writer(dir, "plan.csv")?;
    w.write_record(PLAN_HEADER)?;
    for e in edges {
        w.write_record([
            id(locs, e.source),
            id(locs, e.target),
            &e.mass.to_string(),
            &e.unit_cost.to_string(),
            &e.contribution.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// LineString features for every edge between real locations; dummy edges
/// have no geometry and are left out.
pub fn write_plan_geojson(dir: &Path, locs: &LocationSet, edges: &[PlanEdge]) -> Result<(), CliError> {
    let n = locs.len();
    let features: Vec<_> = edges
        .iter()
        .filter(|e| e.source < n && e.target < n)
        .map(|e| {
            let (a, b) = (locs.get(e.source), locs.get(e.target));
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [a.coords, b.coords],
                },
                "properties": {
                    "from_id": a.id,
                    "to_id": b.id,
                    "mass": e.mass,
                    "unit_cost": e.unit_cost,
                    "contribution": e.contribution,
                },
            })
        })
        .collect();
    write_json(dir, "plan.geojson", &json!({ "type": "FeatureCollection", "features": features }))
}
