//! CSV and JSON files for worlds and run reports.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::{Broker, BrokerId, Request, RequestId, UtilityModel};
use crate::engine::{IntervalMetric, LedgerRow};
use crate::error::{Error, Result};
use crate::simgen::{self, GroundTruth, PairUtilities, World, WorldConfig};

pub const WORLD_CONFIG_FILE: &str = "world.json";
pub const BROKERS_FILE: &str = "brokers.csv";
pub const REQUESTS_FILE: &str = "requests.csv";
pub const UTILITIES_FILE: &str = "utilities.csv";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.csv";

pub const METRICS_HEADER: [&str; 6] = ["policy", "day", "interval", "batch_utility", "cumulative_utility", "wallclock_ms"];
pub const LEDGER_HEADER: [&str; 5] = ["broker_id", "day", "capacity", "workload", "day_utility"];

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))
}

fn schema(path: &Path, detail: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), detail: detail.into() }
}

/// Checks the header against `expected`, naming the first offending
/// column.
pub fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for (i, want) in expected.iter().enumerate() {
        match found.get(i) {
            Some(got) if got == *want => {}
            Some(got) => return Err(schema(path, format!("column {i} is `{got}`, expected `{want}`"))),
            None => return Err(schema(path, format!("missing column `{want}`"))),
        }
    }
    if found.len() > expected.len() {
        return Err(schema(path, format!("unexpected column `{}`", &found[expected.len()])));
    }
    Ok(())
}

pub fn write_brokers(path: &Path, brokers: &[Broker]) -> Result<()> {
    let dim = brokers.first().map_or(0, |b| b.features.len());
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for b in brokers {
        let mut row = vec![b.id.0.to_string()];
        row.extend(b.features.iter().map(|f| f.to_string()));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_brokers(path: &Path) -> Result<Vec<Broker>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected: Vec<String> = std::iter::once("id".to_string()).chain((1..header.len()).map(|i| format!("f{}", i - 1))).collect();
    check_header(path, &header, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| schema(path, format!("bad number `{}` in column {}", &rec[i], &header[i]))) };
        let id: u32 = rec[0].parse().map_err(|_| schema(path, format!("bad id `{}`", &rec[0])))?;
        let features = (1..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
        out.push(Broker::new(BrokerId(id), features));
    }
    Ok(out)
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<D: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<D>> {
    let mut r = reader(path)?;
    let found = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &found, header)?;
    r.deserialize().map(|rec| rec.map_err(|e| Error::csv(path, e))).collect()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RequestRow {
    id: u32,
    day: u32,
    interval: u32,
}

pub fn write_requests(path: &Path, requests: &[Request]) -> Result<()> {
    if requests.is_empty() {
        return fs::write(path, "id,day,interval\n").map_err(|e| Error::io(path, e));
    }
    write_rows(path, requests.iter().map(|r| RequestRow { id: r.id.0, day: r.day, interval: r.interval }))
}

pub fn read_requests(path: &Path) -> Result<Vec<Request>> {
    let rows: Vec<RequestRow> = read_rows(path, &["id", "day", "interval"])?;
    Ok(rows.into_iter().map(|r| Request { id: RequestId(r.id), day: r.day, interval: r.interval }).collect())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct UtilityRow {
    request_id: u32,
    broker_id: u32,
    u: f64,
}

pub fn write_utilities(path: &Path, world: &World) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["request_id", "broker_id", "u"]).map_err(|e| Error::csv(path, e))?;
    for r in &world.requests {
        for b in &world.brokers {
            if let Some(u) = world.utilities.utility(r.id, b.id) {
                w.write_record([r.id.0.to_string(), b.id.0.to_string(), u.to_string()]).map_err(|e| Error::csv(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_utilities(path: &Path) -> Result<HashMap<(RequestId, BrokerId), f64>> {
    let rows: Vec<UtilityRow> = read_rows(path, &["request_id", "broker_id", "u"])?;
    Ok(rows.into_iter().map(|r| ((RequestId(r.request_id), BrokerId(r.broker_id)), r.u)).collect())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TruthRow {
    broker_id: u32,
    kappa: u32,
    q: f64,
    rho: f64,
}

pub fn write_groundtruth(path: &Path, gt: &GroundTruth) -> Result<()> {
    if gt.is_empty() {
        return fs::write(path, "broker_id,kappa,q,rho\n").map_err(|e| Error::io(path, e));
    }
    write_rows(
        path,
        (0..gt.len()).map(|b| TruthRow { broker_id: b as u32, kappa: gt.kappa[b], q: gt.q[b], rho: gt.rho[b] }),
    )
}

/// Reads per-broker curves; floor and noise take the generator defaults.
pub fn read_groundtruth(path: &Path) -> Result<GroundTruth> {
    let rows: Vec<TruthRow> = read_rows(path, &["broker_id", "kappa", "q", "rho"])?;
    let mut gt = GroundTruth { kappa: vec![], q: vec![], rho: vec![], floor: simgen::SIGNUP_FLOOR, noise: simgen::SIGNUP_NOISE };
    for (i, r) in rows.into_iter().enumerate() {
        if r.broker_id as usize != i {
            return Err(schema(path, format!("expected broker_id {i}, found {}", r.broker_id)));
        }
        gt.kappa.push(r.kappa);
        gt.q.push(r.q);
        gt.rho.push(r.rho);
    }
    Ok(gt)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Writes `world.json` and the CSV files into `dir`, creating it.
/// `utilities.csv` holds one row per pair, so it is optional.
pub fn write_world(world: &World, dir: &Path, with_utilities: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(WORLD_CONFIG_FILE), &world.config)?;
    write_brokers(&dir.join(BROKERS_FILE), &world.brokers)?;
    write_requests(&dir.join(REQUESTS_FILE), &world.requests)?;
    write_groundtruth(&dir.join(GROUNDTRUTH_FILE), &world.truth)?;
    if with_utilities {
        write_utilities(&dir.join(UTILITIES_FILE), world)?;
    }
    Ok(())
}

/// Loads a world directory. The generator config is replayed for
/// whatever the files leave out; files that are present take precedence.
pub fn load_world(dir: &Path) -> Result<World> {
    let config: WorldConfig = read_json(&dir.join(WORLD_CONFIG_FILE))?;
    let mut world = simgen::generate_world(&config)?;
    let brokers = read_brokers(&dir.join(BROKERS_FILE))?;
    if brokers.len() != config.n_brokers {
        return Err(schema(&dir.join(BROKERS_FILE), format!("{} rows, world has {} brokers", brokers.len(), config.n_brokers)));
    }
    world.brokers = brokers;
    world.requests = read_requests(&dir.join(REQUESTS_FILE))?;
    world.requests.sort_by_key(|r| (r.day, r.interval, r.id));
    world.intervals_per_day = world.requests.iter().map(|r| r.interval + 1).max().unwrap_or(0).max(world.intervals_per_day);
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    if gt_path.exists() {
        world.truth = read_groundtruth(&gt_path)?;
    }
    let u_path = dir.join(UTILITIES_FILE);
    if u_path.exists() {
        world.utilities = PairUtilities::from_table(read_utilities(&u_path)?);
    }
    Ok(world)
}

pub fn write_metrics(path: &Path, metrics: &[IntervalMetric]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(METRICS_HEADER).map_err(|e| Error::csv(path, e))?;
    for m in metrics {
        w.write_record([
            m.policy.clone(),
            m.day.to_string(),
            m.interval.to_string(),
            m.batch_utility.to_string(),
            m.cumulative_utility.to_string(),
            m.wallclock_ms.map(|t| t.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<IntervalMetric>> {
    read_rows(path, &METRICS_HEADER)
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(LEDGER_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.broker_id.to_string(),
            r.day.to_string(),
            r.capacity.map(|c| c.to_string()).unwrap_or_default(),
            r.workload.to_string(),
            r.day_utility.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    read_rows(path, &LEDGER_HEADER)
}
