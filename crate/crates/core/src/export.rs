//! CSV tables. Floats are written with 17 significant digits so every value
//! round-trips exactly.

use std::fs::File;
use std::path::Path;

use crate::chain::ChainPath;
use crate::hedge::HedgeStrategy;
use crate::market::StockCurves;
use crate::mc::CheckRow;
use crate::rbsde::RbsdeSolution;
use crate::{Error, Result, StateGridFunction};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: ::csv::Error) -> Error {
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

fn writer(path: &Path, header: &[&str]) -> Result<::csv::Writer<File>> {
    let mut w = ::csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn finish(mut w: ::csv::Writer<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// `jump_index,time,state`; row 0 is the initial state at time 0.
pub fn write_path(path: &Path, chain_path: &ChainPath) -> Result<()> {
    let mut w = writer(path, &["jump_index", "time", "state"])?;
    for (k, t, s) in chain_path.csv_rows() {
        w.write_record([k.to_string(), fmt_f64(t), s.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

/// `time,state,<value_name>`.
pub fn write_state_grid(path: &Path, value_name: &str, f: &StateGridFunction) -> Result<()> {
    let mut w = writer(path, &["time", "state", value_name])?;
    for (k, t) in f.grid.times().enumerate() {
        for i in 0..f.n_states() {
            w.write_record([fmt_f64(t), i.to_string(), fmt_f64(f.at(k, i))]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `time,state,v,z,k,g`.
pub fn write_rbsde(path: &Path, solution: &RbsdeSolution, g: &StateGridFunction) -> Result<()> {
    let mut w = writer(path, &["time", "state", "v", "z", "k", "g"])?;
    for (k, t) in solution.grid().times().enumerate() {
        for i in 0..solution.v.n_states() {
            w.write_record([
                fmt_f64(t),
                i.to_string(),
                fmt_f64(solution.v.at(k, i)),
                fmt_f64(solution.z.at(k, i)),
                fmt_f64(solution.k.at(k, i)),
                fmt_f64(g.at(k, i)),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `n,sup_distance`.
pub fn write_trace(path: &Path, trace: &[(u64, f64)]) -> Result<()> {
    let mut w = writer(path, &["n", "sup_distance"])?;
    for &(n, d) in trace {
        w.write_record([n.to_string(), fmt_f64(d)]).map_err(csv_err)?;
    }
    finish(w)
}

/// `time,stock,state,price`.
pub fn write_stock_curves(path: &Path, curves: &StockCurves) -> Result<()> {
    let mut w = writer(path, &["time", "stock", "state", "price"])?;
    for (k, t) in curves.grid.times().enumerate() {
        for (j, s) in curves.s.iter().enumerate() {
            for i in 0..s.n_states() {
                w.write_record([fmt_f64(t), j.to_string(), i.to_string(), fmt_f64(s.at(k, i))]).map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// `time,state,V,K,h_1…h_n,h0`.
pub fn write_hedge(path: &Path, solution: &RbsdeSolution, strategy: &HedgeStrategy) -> Result<()> {
    let mut header = vec!["time".to_string(), "state".into(), "V".into(), "K".into()];
    header.extend((1..=strategy.h.len()).map(|j| format!("h_{j}")));
    header.push("h0".into());
    let mut w = ::csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for (k, t) in solution.grid().times().enumerate() {
        for i in 0..solution.v.n_states() {
            let mut row = vec![fmt_f64(t), i.to_string(), fmt_f64(solution.v.at(k, i)), fmt_f64(solution.k.at(k, i))];
            row.extend(strategy.h.iter().map(|h| fmt_f64(h.at(k, i))));
            row.push(fmt_f64(strategy.h0.at(k, i)));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `check_name,lhs,rhs,std_error,pass`.
pub fn write_checks(path: &Path, rows: &[CheckRow]) -> Result<()> {
    let mut w = writer(path, &["check_name", "lhs", "rhs", "std_error", "pass"])?;
    for r in rows {
        w.write_record([r.name.clone(), fmt_f64(r.lhs), fmt_f64(r.rhs), fmt_f64(r.std_error), r.pass.to_string()])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// `key,value`.
pub fn write_key_values(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = writer(path, &["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    finish(w)
}

/// Header and rows of a table written by this module.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = ::csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
