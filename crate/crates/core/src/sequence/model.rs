use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Nv,
    N,
    Optical,
}

impl Channel {
    pub fn keyword(self) -> &'static str {
        match self {
            Channel::Nv => "NV",
            Channel::N => "N",
            Channel::Optical => "optical",
        }
    }
}

/// Physical dimension of a sweep variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    Time,
    Angle,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    S,
    Ms,
    Us,
    Ns,
    Deg,
    Rad,
    Hz,
    KHz,
    MHz,
    GHz,
}

impl Unit {
    pub const ALL: [Unit; 10] =
        [Unit::S, Unit::Ms, Unit::Us, Unit::Ns, Unit::Deg, Unit::Rad, Unit::Hz, Unit::KHz, Unit::MHz, Unit::GHz];

    pub fn parse(s: &str) -> Option<Unit> {
        Some(match s {
            "s" => Unit::S,
            "ms" => Unit::Ms,
            "us" | "µs" | "μs" => Unit::Us,
            "ns" => Unit::Ns,
            "deg" => Unit::Deg,
            "rad" => Unit::Rad,
            "hz" | "Hz" => Unit::Hz,
            "khz" | "kHz" => Unit::KHz,
            "mhz" | "MHz" => Unit::MHz,
            "ghz" | "GHz" => Unit::GHz,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::S => "s",
            Unit::Ms => "ms",
            Unit::Us => "us",
            Unit::Ns => "ns",
            Unit::Deg => "deg",
            Unit::Rad => "rad",
            Unit::Hz => "hz",
            Unit::KHz => "khz",
            Unit::MHz => "mhz",
            Unit::GHz => "ghz",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::S | Unit::Ms | Unit::Us | Unit::Ns => Dimension::Time,
            Unit::Deg | Unit::Rad => Dimension::Angle,
            _ => Dimension::Frequency,
        }
    }

    /// Converts a value in this unit to SI (s, rad, Hz).
    pub fn to_si(self, x: f64) -> f64 {
        match self {
            Unit::S | Unit::Rad | Unit::Hz => x,
            Unit::Ms => x / 1e3,
            Unit::Us => x / 1e6,
            Unit::Ns => x / 1e9,
            Unit::Deg => x * PI / 180.0,
            Unit::KHz => x * 1e3,
            Unit::MHz => x * 1e6,
            Unit::GHz => x * 1e9,
        }
    }

    pub fn from_si(self, x: f64) -> f64 {
        match self {
            Unit::S | Unit::Rad | Unit::Hz => x,
            Unit::Ms => x * 1e3,
            Unit::Us => x * 1e6,
            Unit::Ns => x * 1e9,
            Unit::Deg => x * 180.0 / PI,
            Unit::KHz => x / 1e3,
            Unit::MHz => x / 1e6,
            Unit::GHz => x / 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Linspace { start: f64, stop: f64, n: usize },
    List(Vec<f64>),
}

/// The declared sweep variable; grid values are in `unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub unit: Unit,
    pub grid: Grid,
}

impl Sweep {
    pub fn linspace(name: &str, unit: Unit, start: f64, stop: f64, n: usize) -> Self {
        Self { name: name.into(), unit, grid: Grid::Linspace { start, stop, n } }
    }

    pub fn list(name: &str, unit: Unit, values: Vec<f64>) -> Self {
        Self { name: name.into(), unit, grid: Grid::List(values) }
    }

    /// Grid values in SI units.
    pub fn values(&self) -> Vec<f64> {
        let raw = match &self.grid {
            Grid::Linspace { start, stop, n } => match n {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
            Grid::List(v) => v.clone(),
        };
        raw.into_iter().map(|x| self.unit.to_si(x)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::Domain(format!("sweep `{}` has no points", self.name)));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("sweep `{}` has non-finite points", self.name)));
        }
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Domain(format!("sweep `{}` must be strictly monotonic", self.name)));
        }
        Ok(())
    }
}

/// A step parameter: fixed (SI) or bound to the sweep variable times a scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Fixed(f64),
    Swept { name: String, scale: f64 },
}

impl Value {
    pub fn swept(name: &str) -> Self {
        Value::Swept { name: name.into(), scale: 1.0 }
    }

    pub fn scaled(name: &str, scale: f64) -> Self {
        Value::Swept { name: name.into(), scale }
    }

    pub fn resolve(&self, x: Option<f64>) -> Result<f64> {
        match self {
            Value::Fixed(v) => Ok(*v),
            Value::Swept { name, scale } => {
                x.map(|x| x * scale).ok_or_else(|| Error::MissingParam(name.clone()))
            }
        }
    }

    pub fn tag(&self) -> Option<&str> {
        match self {
            Value::Fixed(_) => None,
            Value::Swept { name, .. } => Some(name),
        }
    }
}

/// Rotation axis in the equatorial plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    MinusX,
    MinusY,
    /// Phase α in radians.
    Phase(Value),
    /// Alternates between two axes on successive shots.
    Alt(Box<Axis>, Box<Axis>),
}

impl Axis {
    pub fn phase(&self, x: Option<f64>, shot: usize) -> Result<f64> {
        match self {
            Axis::X => Ok(0.0),
            Axis::Y => Ok(PI / 2.0),
            Axis::MinusX => Ok(PI),
            Axis::MinusY => Ok(-PI / 2.0),
            Axis::Phase(v) => v.resolve(x),
            Axis::Alt(a, b) => if shot % 2 == 0 { a } else { b }.phase(x, shot),
        }
    }

    fn is_alt(&self) -> bool {
        matches!(self, Axis::Alt(..))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockSign {
    Plus,
    Minus,
    Alt,
}

impl LockSign {
    pub fn value(self, shot: usize) -> f64 {
        match self {
            LockSign::Plus => 1.0,
            LockSign::Minus => -1.0,
            LockSign::Alt => {
                if shot % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseStep {
    /// Rotation by `angle` (rad) about `axis`; `freq` (Hz) makes an N pulse
    /// frequency selective.
    Pulse { channel: Channel, axis: Axis, angle: Value, freq: Option<Value> },
    Delay { duration: Value },
    Lock { channel: Channel, sign: LockSign, duration: Value },
    Pump { duration: Value },
    Readout,
}

impl PulseStep {
    pub fn pulse(channel: Channel, axis: Axis, degrees: f64) -> Self {
        PulseStep::Pulse { channel, axis, angle: Value::Fixed(degrees.to_radians()), freq: None }
    }

    pub fn duration(&self) -> Option<&Value> {
        match self {
            PulseStep::Delay { duration } | PulseStep::Lock { duration, .. } | PulseStep::Pump { duration } => {
                Some(duration)
            }
            _ => None,
        }
    }

    pub fn channel(&self) -> Option<Channel> {
        match self {
            PulseStep::Pulse { channel, .. } | PulseStep::Lock { channel, .. } => Some(*channel),
            PulseStep::Pump { .. } => Some(Channel::Optical),
            _ => None,
        }
    }

    pub(crate) fn values(&self) -> Vec<(&Value, Dimension)> {
        let mut out = Vec::new();
        match self {
            PulseStep::Pulse { axis, angle, freq, .. } => {
                collect_axis(axis, &mut out);
                out.push((angle, Dimension::Angle));
                if let Some(f) = freq {
                    out.push((f, Dimension::Frequency));
                }
            }
            PulseStep::Delay { duration } | PulseStep::Lock { duration, .. } | PulseStep::Pump { duration } => {
                out.push((duration, Dimension::Time))
            }
            PulseStep::Readout => {}
        }
        out
    }

    pub fn alternates(&self) -> bool {
        match self {
            PulseStep::Pulse { axis, .. } => axis.is_alt(),
            PulseStep::Lock { sign, .. } => *sign == LockSign::Alt,
            _ => false,
        }
    }
}

fn collect_axis<'a>(axis: &'a Axis, out: &mut Vec<(&'a Value, Dimension)>) {
    match axis {
        Axis::Phase(v) => out.push((v, Dimension::Angle)),
        Axis::Alt(a, b) => {
            collect_axis(a, out);
            collect_axis(b, out);
        }
        _ => {}
    }
}

/// Steps that act simultaneously.
pub type Block = Vec<PulseStep>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub name: String,
    pub sweep: Option<Sweep>,
    pub blocks: Vec<Block>,
}

impl PulseSequence {
    pub fn steps(&self) -> impl Iterator<Item = &PulseStep> {
        self.blocks.iter().flatten()
    }

    /// Shots alternate between two settings.
    pub fn alternates(&self) -> bool {
        self.steps().any(PulseStep::alternates)
    }

    /// Echo-class sequences contain free evolution and no spin locks.
    pub fn is_echo_class(&self) -> bool {
        self.steps().any(|s| matches!(s, PulseStep::Delay { .. }))
            && !self.steps().any(|s| matches!(s, PulseStep::Lock { .. }))
    }

    /// The same program with every N-channel step removed.
    pub fn without_channel(&self, channel: Channel) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().filter(|s| s.channel() != Some(channel)).cloned().collect::<Block>())
            .filter(|b| !b.is_empty())
            .collect();
        Self { name: format!("{}_ref", self.name), sweep: self.sweep.clone(), blocks }
    }

    /// Structural checks that do not need source positions.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        let readouts = self.steps().filter(|s| matches!(s, PulseStep::Readout)).count();
        if readouts > 1 {
            return Err(Error::Domain("more than one readout".into()));
        }
        if readouts == 1 && self.blocks.last().map(|b| b.as_slice()) != Some(&[PulseStep::Readout]) {
            return Err(Error::Domain("readout must be the last statement".into()));
        }
        for block in &self.blocks {
            validate_block(block).map_err(Error::Domain)?;
            for step in block {
                for (v, dim) in step.values() {
                    if let Some(tag) = v.tag() {
                        match &self.sweep {
                            Some(s) if s.name == tag => {
                                if s.unit.dimension() != dim {
                                    return Err(Error::Domain(format!("sweep `{tag}` has the wrong unit here")));
                                }
                            }
                            _ => return Err(Error::Domain(format!("unbound sweep variable `{tag}`"))),
                        }
                    } else if let Value::Fixed(x) = v {
                        if dim == Dimension::Time && !(*x >= 0.0) {
                            return Err(Error::Domain("durations must be non-negative".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Simultaneity rules for one block.
pub(crate) fn validate_block(block: &[PulseStep]) -> std::result::Result<(), String> {
    if block.len() > 1 && block.iter().any(|s| matches!(s, PulseStep::Readout)) {
        return Err("readout cannot be combined with other steps".into());
    }
    let mut seen = Vec::new();
    for s in block {
        if let Some(c) = s.channel() {
            if seen.contains(&c) {
                return Err(format!("channel {} used twice in one block", c.keyword()));
            }
            seen.push(c);
        }
        match s {
            PulseStep::Pulse { channel, freq, .. } => {
                if *channel == Channel::Optical {
                    return Err("optical channel cannot be pulsed".into());
                }
                if freq.is_some() && *channel != Channel::N {
                    return Err("frequency-selective pulses act on the N channel only".into());
                }
            }
            PulseStep::Lock { channel, .. } if *channel == Channel::Optical => {
                return Err("optical channel cannot be locked".into());
            }
            _ => {}
        }
    }
    let pulses = block.iter().any(|s| matches!(s, PulseStep::Pulse { .. }));
    let timed: Vec<&PulseStep> = block.iter().filter(|s| s.duration().is_some()).collect();
    if pulses && !timed.is_empty() {
        return Err("pulses and timed steps cannot share a block".into());
    }
    if timed.len() > 1 {
        if timed.iter().any(|s| !matches!(s, PulseStep::Lock { .. })) {
            return Err("only locks may run simultaneously".into());
        }
        let d0 = timed[0].duration();
        if timed.iter().any(|s| s.duration() != d0) {
            return Err("simultaneous locks must have equal durations".into());
        }
    }
    Ok(())
}
