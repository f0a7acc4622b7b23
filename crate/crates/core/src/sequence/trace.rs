use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::engine::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// NV |0⟩ probability.
    P0,
    /// P₀ divided by a reference run.
    Contrast,
    /// Phase in radians.
    Phase,
    /// Dark-spin polarization P↓ − P↑.
    Polarization,
}

impl Quantity {
    pub fn column(self) -> &'static str {
        match self {
            Quantity::P0 => "p0",
            Quantity::Contrast => "contrast",
            Quantity::Phase => "phase",
            Quantity::Polarization => "p",
        }
    }

    fn from_column(s: &str) -> Option<Self> {
        [Quantity::P0, Quantity::Contrast, Quantity::Phase, Quantity::Polarization].into_iter().find(|q| q.column() == s)
    }
}

/// A one-dimensional sweep result. `x` is in SI units (s, rad or Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub sequence: String,
    pub quantity: Quantity,
    pub x_unit: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    pub cfg_hash: String,
    pub seed: u64,
}

/// Fixed 12-significant-digit rendering used in every CSV.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

impl Trace {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::Domain(format!("trace has {} x values and {} y values", self.x.len(), self.y.len())));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Domain("sigma column must be non-negative and match x".into()));
            }
        }
        let up = self.x.windows(2).all(|w| w[1] > w[0]);
        let down = self.x.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Domain("trace x values must be strictly monotonic".into()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("trace contains non-finite values".into()));
        }
        if self.quantity == Quantity::P0 && self.y.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("P0 values must lie in [0, 1]".into()));
        }
        if self.quantity == Quantity::Polarization && self.y.iter().any(|p| !(-1.0..=1.0).contains(p)) {
            return Err(Error::Domain("polarizations must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Divide by a reference trace on the same grid.
    pub fn normalized_by(&self, reference: &Trace) -> Result<Trace> {
        if reference.x != self.x {
            return Err(Error::Domain("reference trace uses a different grid".into()));
        }
        if reference.y.iter().any(|r| *r <= 0.0) {
            return Err(Error::Domain("reference trace must be positive".into()));
        }
        let y = self.y.iter().zip(&reference.y).map(|(a, b)| a / b).collect();
        let sigma = self
            .sigma
            .as_ref()
            .map(|s| s.iter().zip(&reference.y).map(|(s, b)| s / b).collect());
        Ok(Trace { quantity: Quantity::Contrast, y, sigma, ..self.clone() })
    }

    /// Complex fringe amplitude z of y(α) = c + Re(z e^{−iα}) from a
    /// linear least-squares fit; x must be phases in radians.
    pub fn fringe(&self) -> Result<C64> {
        if self.x_unit != "rad" {
            return Err(Error::Domain("fringe analysis needs a phase sweep".into()));
        }
        let mut ata = Matrix3::<f64>::zeros();
        let mut aty = Vector3::<f64>::zeros();
        for (a, y) in self.x.iter().zip(&self.y) {
            let row = Vector3::new(1.0, a.cos(), a.sin());
            ata += row * row.transpose();
            aty += row * *y;
        }
        let sol = ata
            .lu()
            .solve(&aty)
            .ok_or_else(|| Error::Domain("phase grid too sparse for a fringe fit".into()))?;
        Ok(C64::new(sol[1], sol[2]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# seq={} cfg={} seed={}\n", self.sequence, self.cfg_hash, self.seed);
        let _ = writeln!(out, "# quantity={} x_unit={}", self.quantity.column(), self.x_unit);
        out.push_str("x,");
        out.push_str(self.quantity.column());
        if self.sigma.is_some() {
            out.push_str(",sigma");
        }
        out.push('\n');
        for i in 0..self.x.len() {
            out.push_str(&fmt_num(self.x[i]));
            out.push(',');
            out.push_str(&fmt_num(self.y[i]));
            if let Some(s) = &self.sigma {
                out.push(',');
                out.push_str(&fmt_num(s[i]));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV form; errors carry the offending line number.
    pub fn from_csv(text: &str) -> Result<Trace> {
        let mut t = Trace {
            sequence: String::new(),
            quantity: Quantity::P0,
            x_unit: "s".into(),
            x: Vec::new(),
            y: Vec::new(),
            sigma: None,
            cfg_hash: String::new(),
            seed: 0,
        };
        let mut header: Option<Vec<String>> = None;
        let line_err = |n: usize, msg: String| Error::Parse(format!("line {n}: {msg}"));
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        match k {
                            "seq" => t.sequence = v.into(),
                            "cfg" => t.cfg_hash = v.into(),
                            "seed" => t.seed = v.parse().map_err(|_| line_err(n, format!("bad seed `{v}`")))?,
                            "x_unit" => t.x_unit = v.into(),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            match &header {
                None => {
                    let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
                    if cols.len() < 2 || cols[0] != "x" {
                        return Err(line_err(n, "expected a header `x,<quantity>[,sigma]`".into()));
                    }
                    t.quantity = Quantity::from_column(&cols[1])
                        .ok_or_else(|| line_err(n, format!("unknown column `{}`", cols[1])))?;
                    match cols.get(2).map(String::as_str) {
                        None => {}
                        Some("sigma") if cols.len() == 3 => t.sigma = Some(Vec::new()),
                        Some(_) => return Err(line_err(n, "only a sigma column may follow".into())),
                    }
                    header = Some(cols);
                }
                Some(cols) => {
                    let vals: Vec<f64> = line
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| line_err(n, format!("malformed number in `{line}`")))?;
                    if vals.len() != cols.len() {
                        return Err(line_err(n, format!("expected {} columns, found {}", cols.len(), vals.len())));
                    }
                    t.x.push(vals[0]);
                    t.y.push(vals[1]);
                    if let Some(s) = t.sigma.as_mut() {
                        s.push(vals[2]);
                    }
                }
            }
        }
        if header.is_none() || t.x.is_empty() {
            return Err(Error::Parse("trace contains no data".into()));
        }
        t.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample() -> Trace {
        Trace {
            sequence: "IDSE_D".into(),
            quantity: Quantity::P0,
            x_unit: "rad".into(),
            x: (0..12).map(|i| i as f64 * PI / 6.0).collect(),
            y: (0..12).map(|i| 0.5 + 0.3 * (i as f64 * PI / 6.0 - 0.7).cos()).collect(),
            sigma: Some(vec![0.01; 12]),
            cfg_hash: "00ff".into(),
            seed: 7,
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let back = Trace::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.sequence, t.sequence);
        assert_eq!(back.seed, 7);
        for (a, b) in back.y.iter().zip(&t.y) {
            assert!((a - b).abs() <= 1e-11 * b.abs());
        }
    }

    #[test]
    fn fringe_recovers_phase() {
        let z = sample().fringe().unwrap();
        assert!((z.arg() - 0.7).abs() < 1e-12);
        assert!((z.norm() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn csv_errors_have_line_numbers() {
        let e = Trace::from_csv("# seq=a cfg=b seed=0\nx,p0\n0,0.5\n1,abc\n").unwrap_err();
        assert!(e.to_string().starts_with("line 4"), "{e}");
        assert!(Trace::from_csv("").is_err());
        assert!(Trace::from_csv("x,p0\n1,0.5\n0,0.5\n2,0.5\n").is_err());
    }
}
