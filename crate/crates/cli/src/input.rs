//! Readers for the long-form CSV inputs.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use geot_core::{Location, LocationSet, SpatialSignature};

use crate::CliError;

fn open(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn at(path: &Path, line: u64, message: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}:{line}: {message}", path.display()))
}

fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, want: &[&str]) -> Result<(), CliError> {
    let header = rdr.headers().map_err(|e| at(path, 1, e))?;
    if header.iter().collect::<Vec<_>>() != want {
        return Err(at(path, 1, format!("expected header {}", want.join(","))));
    }
    Ok(())
}

fn records<'a>(
    rdr: &'a mut csv::Reader<File>,
    path: &'a Path,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), CliError>> + 'a {
    rdr.records().map(move |r| {
        let r = r.map_err(|e| at(path, e.position().map_or(0, |p| p.line()), e))?;
        Ok((r.position().map_or(0, |p| p.line()), r))
    })
}

fn number(path: &Path, line: u64, field: &str) -> Result<f64, CliError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(at(path, line, format!("invalid number {field:?}"))),
    }
}

/// `id,x,y` rows.
pub fn read_locations(path: &Path) -> Result<Arc<LocationSet>, CliError> {
    let mut rdr = open(path)?;
    expect_header(&mut rdr, path, &["id", "x", "y"])?;
    let mut locs = Vec::new();
    for rec in records(&mut rdr, path) {
        let (line, r) = rec?;
        locs.push(Location::xy(&r[0], number(path, line, &r[1])?, number(path, line, &r[2])?));
    }
    let set = LocationSet::new(locs).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(set))
}

/// Samples in order of first appearance, each a dense mass vector over
/// `locs`. Locations missing from a sample get mass 0.
pub fn read_samples(path: &Path, locs: &LocationSet) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut rdr = open(path)?;
    expect_header(&mut rdr, path, &["sample_id", "location_id", "value"])?;
    let mut samples: Vec<(String, Vec<f64>, Vec<bool>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in records(&mut rdr, path) {
        let (line, r) = rec?;
        let loc = locs
            .index_of(&r[1])
            .ok_or_else(|| at(path, line, format!("unknown location {:?}", &r[1])))?;
        let value = number(path, line, &r[2])?;
        if value < 0.0 {
            return Err(at(path, line, format!("negative value {value}")));
        }
        let s = *index.entry(r[0].to_string()).or_insert_with(|| {
            samples.push((r[0].to_string(), vec![0.0; locs.len()], vec![false; locs.len()]));
            samples.len() - 1
        });
        let (_, masses, seen) = &mut samples[s];
        if std::mem::replace(&mut seen[loc], true) {
            return Err(at(path, line, format!("duplicate value for sample {:?}, location {:?}", &r[0], &r[1])));
        }
        masses[loc] = value;
    }
    if samples.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", path.display())));
    }
    Ok(samples.into_iter().map(|(id, m, _)| (id, m)).collect())
}

/// Paired prediction/observation signatures, in prediction order.
pub type Sample = (String, SpatialSignature, SpatialSignature);

pub fn read_paired(
    locs: &Arc<LocationSet>,
    predictions: &Path,
    observations: &Path,
) -> Result<Vec<Sample>, CliError> {
    let pred = read_samples(predictions, locs)?;
    let mut obs: HashMap<String, Vec<f64>> = read_samples(observations, locs)?.into_iter().collect();
    let mut out = Vec::with_capacity(pred.len());
    for (id, p) in pred {
        let o = obs
            .remove(&id)
            .ok_or_else(|| CliError::Input(format!("sample {id:?} has predictions but no observations")))?;
        let sig = |m| SpatialSignature::new(locs.clone(), m).map_err(CliError::from);
        out.push((id, sig(p)?, sig(o)?));
    }
    if let Some(id) = obs.keys().min() {
        return Err(CliError::Input(format!("sample {id:?} has observations but no predictions")));
    }
    Ok(out)
}

pub fn pick_sample(samples: Vec<Sample>, id: Option<&str>) -> Result<Sample, CliError> {
    match id {
        None => Ok(samples.into_iter().next().expect("read_samples rejects empty input")),
        Some(id) => samples
            .into_iter()
            .find(|s| s.0 == id)
            .ok_or_else(|| CliError::Input(format!("no sample {id:?}"))),
    }
}
