//! Time-indexed simulation record and its CSV form.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::{MotionMode, Priority};
use crate::spatial::{Pose, Twist, Wrench};

/// Controller diagnostics recorded with each tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Condition number of `J M⁻¹ Jᵀ` (impedance controller).
    pub lambda_condition: f64,
    /// Arm manipulability (inverse kinematics controller).
    pub manipulability: f64,
    /// Damping factor `k` (inverse kinematics controller).
    pub damping: f64,
    /// Relative task residual (inverse kinematics controller).
    pub residual: f64,
    /// Cartesian impedance wrench norm.
    pub wrench_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub x: Pose,
    pub x_d: Pose,
    pub dx_d: Twist,
    pub f_human: Wrench,
    pub f_ext: Wrench,
    /// Torque command `τ_c` or velocity command `q̇_d`.
    pub command: DVector<f64>,
    pub admittance: bool,
    pub motion: MotionMode,
    pub gripper: bool,
    pub priority: Priority,
    pub safety_stop: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub scenario: String,
    pub robot: String,
    pub dof: usize,
    /// Spacing of the records [s].
    pub dt: f64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub meta: LogMeta,
    pub records: Vec<Record>,
}

/// CSV column names for a robot with `n` joints, in export order.
pub fn columns(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend((0..n).map(|i| format!("q{i}")));
    c.extend((0..n).map(|i| format!("dq{i}")));
    for prefix in ["x", "xd"] {
        c.extend(["px", "py", "pz", "qw", "qx", "qy", "qz"].iter().map(|s| format!("{prefix}_{s}")));
    }
    c.extend(["fx", "fy", "fz", "tx", "ty", "tz"].iter().map(|s| format!("fh_{s}")));
    c.extend(["x", "y", "z", "tx", "ty", "tz"].iter().map(|s| format!("f_ext_{s}")));
    c.extend((0..n).map(|i| format!("cmd{i}")));
    c.extend(["admittance", "motion", "gripper", "priority", "safety_stop"].map(String::from));
    c
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

impl Record {
    fn csv_row(&self) -> Vec<String> {
        let mut row = Vec::with_capacity(8 + 3 * self.q.len() + 26);
        row.push(self.t.to_string());
        row.extend(self.q.iter().map(f64::to_string));
        row.extend(self.dq.iter().map(f64::to_string));
        row.extend(self.x.to_array().iter().map(f64::to_string));
        row.extend(self.x_d.to_array().iter().map(f64::to_string));
        row.extend(self.f_human.to_array().iter().map(f64::to_string));
        row.extend(self.f_ext.to_array().iter().map(f64::to_string));
        row.extend(self.command.iter().map(f64::to_string));
        row.push(flag(self.admittance));
        row.push(flag(self.motion == MotionMode::RotoTranslation));
        row.push(flag(self.gripper));
        row.push(flag(self.priority == Priority::Locomotion));
        row.push(flag(self.safety_stop));
        row
    }
}

impl SimLog {
    pub fn new(meta: LogMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(columns(self.meta.dof)).map_err(io)?;
        for r in &self.records {
            w.write_record(r.csv_row()).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// A CSV log read back as named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(input: R) -> Result<Table> {
        let mut rd = csv::Reader::from_reader(input);
        let bad = |e: csv::Error| Error::config("log", e.to_string());
        let headers: Vec<String> = rd.headers().map_err(bad)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(bad)?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config(format!("log row {}", i + 1), e.to_string()))?;
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Extracts the named channels, prefixed by `t` unless already requested.
    pub fn select(&self, channels: &[String]) -> Result<Table> {
        if channels.is_empty() {
            return Err(Error::config("channels", "at least one channel is required"));
        }
        let mut names: Vec<String> = Vec::new();
        if !channels.iter().any(|c| c == "t") {
            names.push("t".into());
        }
        names.extend(channels.iter().cloned());
        let mut idx = Vec::with_capacity(names.len());
        for name in &names {
            match self.headers.iter().position(|h| h == name) {
                Some(i) => idx.push(i),
                None => {
                    return Err(Error::config(
                        "channels",
                        format!("unknown channel `{name}`; valid channels: {}", self.headers.join(",")),
                    ))
                }
            }
        }
        Ok(Table {
            headers: names,
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.headers).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(f64::to_string)).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
