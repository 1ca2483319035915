//! Criterion surfaces over squeezing and efficiency.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{closed_form_i, optimal_gain};
use crate::error::{Error, Result};
use crate::network::Stage;

/// `steps` evenly spaced points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    pub fn points(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + span * i as f64 / last
                }
            })
            .collect()
    }

    fn validate(&self, name: &'static str, lo: f64, hi: f64) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Settings(format!(
                "{name} axis needs at least 2 steps, got {}",
                self.steps
            )));
        }
        for v in [self.min, self.max] {
            if !(v >= lo && v <= hi) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: if hi.is_infinite() {
                        "[0, inf)"
                    } else {
                        "[0, 1]"
                    },
                });
            }
        }
        if self.min > self.max {
            return Err(Error::Settings(format!(
                "{name} axis has min {} > max {}",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Parses `min:max:steps`.
impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Settings(format!("axis '{s}' is not min:max:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            min: parts[0].trim().parse().map_err(|_| bad())?,
            max: parts[1].trim().parse().map_err(|_| bad())?,
            steps: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    Optimal,
    Fixed(f64),
}

impl FromStr for GainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "optimal" {
            return Ok(GainMode::Optimal);
        }
        s.parse()
            .map(GainMode::Fixed)
            .map_err(|_| Error::Settings(format!("gain '{s}' is neither 'optimal' nor a number")))
    }
}

impl fmt::Display for GainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainMode::Optimal => f.write_str("optimal"),
            GainMode::Fixed(g) => write!(f, "{g}"),
        }
    }
}

/// A rectangular (r, η) grid at one stage. `eta` is the total efficiency of
/// the stage (`η_M` for atoms, `η_M η′_M` for released light), so storage
/// time enters through it; `t_ns` is carried along as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub stage: Stage,
    pub r_range: Axis,
    pub eta_range: Axis,
    #[serde(default)]
    pub t_ns: f64,
    pub gain_mode: GainMode,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.r_range.validate("r", 0.0, f64::INFINITY)?;
        if !self.r_range.max.is_finite() {
            return Err(Error::domain("r", self.r_range.max, "[0, inf)"));
        }
        self.eta_range.validate("eta", 0.0, 1.0)?;
        if self.stage == Stage::Input && (self.eta_range.min != 1.0 || self.eta_range.max != 1.0) {
            return Err(Error::Settings(
                "input-stage sweeps need eta = 1:1:n".into(),
            ));
        }
        if let GainMode::Fixed(g) = self.gain_mode {
            if !g.is_finite() {
                return Err(Error::domain("g", g, "finite"));
            }
        }
        if !(self.t_ns >= 0.0) {
            return Err(Error::domain("t_ns", self.t_ns, "[0, inf)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub r: f64,
    pub eta: f64,
    pub g: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub stage: Stage,
}

/// Evaluates the grid, `r` outer and `eta` inner.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let rs = spec.r_range.points();
    let etas = spec.eta_range.points();
    let n_eta = etas.len();
    (0..rs.len() * n_eta)
        .into_par_iter()
        .map(|idx| {
            let (r, eta) = (rs[idx / n_eta], etas[idx % n_eta]);
            let g = match spec.gain_mode {
                GainMode::Optimal => optimal_gain(spec.stage, r, eta)?,
                GainMode::Fixed(g) => g,
            };
            Ok(SweepCell {
                r,
                eta,
                g,
                i: closed_form_i(spec.stage, r, eta, g)?,
                stage: spec.stage,
            })
        })
        .collect()
}

pub const CSV_HEADER: [&str; 5] = ["r", "eta", "g", "I", "stage"];

/// Writes cells with 17 significant digits so that re-parsing is exact.
pub fn write_sweep_csv<W: Write>(writer: W, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for c in cells {
        w.write_record([
            format!("{:.16e}", c.r),
            format!("{:.16e}", c.eta),
            format!("{:.16e}", c.g),
            format!("{:.16e}", c.i),
            c.stage.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepCell>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Settings(format!(
            "unexpected sweep header {:?}",
            rdr.headers()?
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(stage: Stage) -> SweepSpec {
        SweepSpec {
            stage,
            r_range: Axis::new(0.0, 1.2, 13),
            eta_range: Axis::new(0.0, 1.0, 11),
            t_ns: 1000.0,
            gain_mode: GainMode::Optimal,
        }
    }

    #[test]
    fn axis_parsing_and_points() {
        let a: Axis = "0:1.2:121".parse().unwrap();
        assert_eq!(a, Axis::new(0.0, 1.2, 121));
        let p = a.points();
        assert_eq!(p.len(), 121);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[120], 1.2);
        assert!((p[38] - 0.38).abs() < 1e-15);
        assert!("0:1".parse::<Axis>().is_err());
        assert!("a:1:3".parse::<Axis>().is_err());
    }

    #[test]
    fn grid_order_and_size() {
        let cells = sweep(&spec(Stage::Released)).unwrap();
        assert_eq!(cells.len(), 13 * 11);
        assert_eq!((cells[0].r, cells[0].eta), (0.0, 0.0));
        assert_eq!((cells[1].r, cells[1].eta), (0.0, 0.1));
        assert!((cells[11].r - 0.1).abs() < 1e-15);
        assert_eq!(cells[11].eta, 0.0);
        for c in cells.iter().filter(|c| c.r == 0.0) {
            assert_eq!(c.i, 1.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(Stage::Atomic);
        s.r_range.steps = 1;
        assert!(sweep(&s).is_err());
        let mut s = spec(Stage::Atomic);
        s.eta_range.max = 1.5;
        assert!(sweep(&s).is_err());
        assert!(sweep(&spec(Stage::Input)).is_err());
        let mut s = spec(Stage::Input);
        s.eta_range = Axis::new(1.0, 1.0, 2);
        assert!(sweep(&s).is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut s = spec(Stage::Atomic);
        s.gain_mode = GainMode::Fixed(0.3);
        let cells = sweep(&s).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &cells).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("r,eta,g,I,stage\n"));
        assert!(text.ends_with('\n'));
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), cells);
    }

    #[test]
    fn gain_mode_parsing() {
        assert_eq!("optimal".parse::<GainMode>().unwrap(), GainMode::Optimal);
        assert_eq!("0.25".parse::<GainMode>().unwrap(), GainMode::Fixed(0.25));
        assert!("best".parse::<GainMode>().is_err());
    }
}
