//! JSONL episode logs, one object per step:
//!
//! ```text
//! {"t":1,"target":[x,y,z],"cams":[{"pose":[x,y,z,pitch,yaw,zoom],"action":0,"vis":"V","g":1,"r":0.9,"da":1.2,"db":0.4,"dxi":0.1}]}
//! ```
//!
//! Floats carry 9 significant digits.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::StepRecord;

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCamera {
    pub pose: [f64; 6],
    pub action: usize,
    pub vis: String,
    pub g: u8,
    pub r: f64,
    pub da: f64,
    pub db: f64,
    pub dxi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub t: usize,
    pub target: [f64; 3],
    pub cams: Vec<LoggedCamera>,
}

impl From<&StepRecord> for LoggedStep {
    fn from(r: &StepRecord) -> Self {
        Self {
            t: r.t,
            target: [r.target.x, r.target.y, r.target.z].map(round_sig9),
            cams: r
                .cameras
                .iter()
                .map(|c| LoggedCamera {
                    pose: [
                        c.pose.position.x,
                        c.pose.position.y,
                        c.pose.position.z,
                        c.pose.pitch_deg,
                        c.pose.yaw_deg,
                        c.pose.zoom,
                    ]
                    .map(round_sig9),
                    action: c.action.index(),
                    vis: c.visibility.code().to_string(),
                    g: c.label.g(),
                    r: round_sig9(c.reward),
                    da: round_sig9(c.d_alpha),
                    db: round_sig9(c.d_beta),
                    dxi: round_sig9(c.d_xi),
                })
                .collect(),
        }
    }
}

pub fn write_episode_log(records: &[StepRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&LoggedStep::from(r)).expect("log line serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episode_log(path: impl AsRef<Path>) -> Result<Vec<LoggedStep>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(k, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: k + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(-123456.789012), -123456.789);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(2.5e-12), 2.5e-12);
    }
}
