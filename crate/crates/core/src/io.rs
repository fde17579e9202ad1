//! CSV interchange formats.
//!
//! | file           | header                            |
//! |----------------|-----------------------------------|
//! | OD vector      | `od_id,demand`                    |
//! | field counts   | `edge_id,count`                   |
//! | travel times   | `route_id,travel_time_seconds`    |
//! | replications   | `edge_id,replication,count`       |
//!
//! Values are written with Rust's shortest round-trip float formatting.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::route_choice::{TimeSource, TravelTimeTable};
use crate::simulator::SimulationResult;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn expect_headers(rdr: &mut csv::Reader<File>, path: &Path, want: &[&str]) -> Result<()> {
    let got = rdr.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::invalid(format!(
            "{}: expected header '{}', found '{}'",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct OdRow {
    od_id: u32,
    demand: f64,
}

/// Reads an OD vector; every id in `1..=num_ods` must appear exactly once.
pub fn read_od_vector(path: impl AsRef<Path>, num_ods: usize) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, path, &["od_id", "demand"])?;
    let mut out = vec![None; num_ods];
    for row in rdr.deserialize::<OdRow>() {
        let row = row?;
        let z = (row.od_id as usize)
            .checked_sub(1)
            .filter(|&z| z < num_ods)
            .ok_or_else(|| Error::invalid(format!("{}: unknown od_id {}", path.display(), row.od_id)))?;
        if !(row.demand >= 0.0 && row.demand.is_finite()) {
            return Err(Error::invalid(format!(
                "{}: demand of OD {} is {}",
                path.display(),
                row.od_id,
                row.demand
            )));
        }
        if out[z].replace(row.demand).is_some() {
            return Err(Error::invalid(format!("{}: od_id {} repeated", path.display(), row.od_id)));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(z, v)| v.ok_or_else(|| Error::invalid(format!("{}: od_id {} missing", path.display(), z + 1))))
        .collect()
}

pub fn write_od_vector(path: impl AsRef<Path>, demand: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["od_id", "demand"])?;
    for (z, d) in demand.iter().enumerate() {
        w.write_record([(z + 1).to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct CountRow {
    edge_id: u32,
    count: f64,
}

/// Reads field counts into measured-row order. Every measured edge must be
/// present exactly once and no other edge may appear.
pub fn read_counts(path: impl AsRef<Path>, network: &Network) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows: HashMap<u32, usize> = network
        .measured_edges()
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, path, &["edge_id", "count"])?;
    let mut out = vec![None; rows.len()];
    for row in rdr.deserialize::<CountRow>() {
        let row = row?;
        let i = *rows.get(&row.edge_id).ok_or_else(|| {
            Error::invalid(format!("{}: edge {} is not measured", path.display(), row.edge_id))
        })?;
        if !(row.count >= 0.0 && row.count.is_finite()) {
            return Err(Error::invalid(format!(
                "{}: count of edge {} is {}",
                path.display(),
                row.edge_id,
                row.count
            )));
        }
        if out[i].replace(row.count).is_some() {
            return Err(Error::invalid(format!("{}: edge {} repeated", path.display(), row.edge_id)));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                Error::invalid(format!(
                    "{}: no count for measured edge {}",
                    path.display(),
                    network.measured_edges()[i]
                ))
            })
        })
        .collect()
}

pub fn write_counts(path: impl AsRef<Path>, network: &Network, counts: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if counts.len() != network.num_measured() {
        return Err(Error::invalid("count vector does not match the measured edges"));
    }
    let mut w = writer(path)?;
    w.write_record(["edge_id", "count"])?;
    for (id, c) in network.measured_edges().iter().zip(counts) {
        w.write_record([id.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct TimeRow {
    route_id: u32,
    travel_time_seconds: f64,
}

/// Reads a travel-time table. Missing routes yield a coverage error listing
/// every gap.
pub fn read_travel_times(path: impl AsRef<Path>, network: &Network) -> Result<TravelTimeTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    expect_headers(&mut rdr, path, &["route_id", "travel_time_seconds"])?;
    let mut map = HashMap::new();
    for row in rdr.deserialize::<TimeRow>() {
        let row = row?;
        if map.insert(row.route_id, row.travel_time_seconds).is_some() {
            return Err(Error::invalid(format!("{}: route {} repeated", path.display(), row.route_id)));
        }
    }
    TravelTimeTable::from_route_map(network, &map, TimeSource::File)
}

pub fn write_travel_times(path: impl AsRef<Path>, network: &Network, table: &TravelTimeTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["route_id", "travel_time_seconds"])?;
    for (id, t) in table.entries(network) {
        w.write_record([id.to_string(), t.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dumps the per-replication measured counts of a simulation.
pub fn write_replication_counts(
    path: impl AsRef<Path>,
    network: &Network,
    result: &SimulationResult,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["edge_id", "replication", "count"])?;
    for (k, rep) in result.replications.iter().enumerate() {
        for (id, c) in network.measured_edges().iter().zip(&rep.measured_counts) {
            w.write_record([id.to_string(), k.to_string(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
