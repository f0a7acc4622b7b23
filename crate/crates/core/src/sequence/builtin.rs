use serde::{Deserialize, Serialize};

use super::model::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Builtin {
    Deer,
    DseD,
    DseU,
    IdseD,
    IdseU,
    HhDplus,
    HhDminus,
    HhAlt,
}

impl Builtin {
    pub const ALL: [Builtin; 8] = [
        Builtin::Deer,
        Builtin::DseD,
        Builtin::DseU,
        Builtin::IdseD,
        Builtin::IdseU,
        Builtin::HhDplus,
        Builtin::HhDminus,
        Builtin::HhAlt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Deer => "DEER",
            Builtin::DseD => "DSE_D",
            Builtin::DseU => "DSE_U",
            Builtin::IdseD => "IDSE_D",
            Builtin::IdseU => "IDSE_U",
            Builtin::HhDplus => "HH_DPLUS",
            Builtin::HhDminus => "HH_DMINUS",
            Builtin::HhAlt => "HH_ALT",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownBuiltin(s.into()))
    }
}

/// Fixed times and the sweep of a builtin sequence. Times are total free
/// evolution (each echo half is τ/2).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    /// Free evolution time for DEER and IDSE, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Optical initialization before the sequence, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_init: Option<f64>,
    /// Swept variable; defaults depend on the sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn nv(axis: Axis, deg: f64) -> PulseStep {
    PulseStep::pulse(Channel::Nv, axis, deg)
}

fn n(axis: Axis, deg: f64) -> PulseStep {
    PulseStep::pulse(Channel::N, axis, deg)
}

fn fixed(x: f64) -> Value {
    Value::Fixed(x)
}

fn require(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::MissingParam(name.into()))
}

fn sweep_of(params: &BuiltinParams, default: Option<Sweep>, dim: Dimension, what: &str) -> Result<Sweep> {
    let s = params.sweep.clone().or(default).ok_or_else(|| Error::MissingParam(format!("sweep ({what})")))?;
    if s.unit.dimension() != dim {
        return Err(Error::Domain(format!("sweep `{}` must be a {what}", s.name)));
    }
    s.validate()?;
    Ok(s)
}

fn pump_block(params: &BuiltinParams) -> Vec<Block> {
    match params.t_init {
        Some(t) if t > 0.0 => vec![vec![PulseStep::Pump { duration: fixed(t) }]],
        _ => Vec::new(),
    }
}

/// Echo core shared by DEER and (I)DSE: π/2ₓ, τ/2, πₓ ∥ N π, τ/2, final block.
fn echo(half: Value, n_flip: PulseStep, last: Block) -> Vec<Block> {
    vec![
        vec![nv(Axis::X, 90.0)],
        vec![PulseStep::Delay { duration: half.clone() }],
        vec![nv(Axis::X, 180.0), n_flip],
        vec![PulseStep::Delay { duration: half }],
        last,
        vec![PulseStep::Readout],
    ]
}

pub fn builtin(which: Builtin, params: &BuiltinParams) -> Result<PulseSequence> {
    let mut blocks = pump_block(params);
    let sweep = match which {
        Builtin::Deer => {
            let tau = require(params.tau, "tau")?;
            let s = sweep_of(params, None, Dimension::Frequency, "frequency")?;
            let flip = PulseStep::Pulse {
                channel: Channel::N,
                axis: Axis::X,
                angle: fixed(180f64.to_radians()),
                freq: Some(Value::swept(&s.name)),
            };
            blocks.extend(echo(fixed(tau / 2.0), flip, vec![nv(Axis::X, 90.0)]));
            s
        }
        Builtin::DseD | Builtin::DseU => {
            let s = sweep_of(params, Some(Sweep::linspace("tau", Unit::Us, 0.0, 2.0, 41)), Dimension::Time, "time")?;
            let half = Value::scaled(&s.name, 0.5);
            if which == Builtin::DseU {
                blocks.push(vec![n(Axis::X, 180.0)]);
                blocks.extend(echo(half, n(Axis::X, 180.0), vec![nv(Axis::Y, 90.0)]));
            } else {
                blocks.extend(echo(half, n(Axis::X, 180.0), vec![nv(Axis::Y, 90.0), n(Axis::X, 180.0)]));
            }
            s
        }
        Builtin::IdseD | Builtin::IdseU => {
            let tau = require(params.tau, "tau")?;
            let s = sweep_of(
                params,
                Some(Sweep::linspace("alpha", Unit::Deg, 0.0, 350.0, 36)),
                Dimension::Angle,
                "phase",
            )?;
            let last = PulseStep::Pulse {
                channel: Channel::Nv,
                axis: Axis::Phase(Value::swept(&s.name)),
                angle: fixed(90f64.to_radians()),
                freq: None,
            };
            if which == Builtin::IdseU {
                blocks.push(vec![n(Axis::X, 180.0)]);
                blocks.extend(echo(fixed(tau / 2.0), n(Axis::X, 180.0), vec![last]));
            } else {
                blocks.extend(echo(fixed(tau / 2.0), n(Axis::X, 180.0), vec![last, n(Axis::X, 180.0)]));
            }
            s
        }
        Builtin::HhDplus | Builtin::HhDminus | Builtin::HhAlt => {
            let s = sweep_of(params, Some(Sweep::linspace("t", Unit::Us, 0.0, 2.0, 101)), Dimension::Time, "time")?;
            let sign = match which {
                Builtin::HhDplus => LockSign::Plus,
                Builtin::HhDminus => LockSign::Minus,
                _ => LockSign::Alt,
            };
            let t = Value::swept(&s.name);
            // NV to +y, N spins into the lock frame.
            blocks.push(vec![nv(Axis::MinusX, 90.0), n(Axis::X, 90.0)]);
            blocks.push(vec![
                PulseStep::Lock { channel: Channel::Nv, sign, duration: t.clone() },
                PulseStep::Lock { channel: Channel::N, sign: LockSign::Plus, duration: t },
            ]);
            blocks.push(vec![nv(Axis::X, 90.0), n(Axis::MinusX, 90.0)]);
            blocks.push(vec![PulseStep::Readout]);
            s
        }
    };
    let seq = PulseSequence { name: which.name().into(), sweep: Some(sweep), blocks };
    seq.validate()?;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::dsl::{parse_sequence, print_sequence};

    fn all_params() -> BuiltinParams {
        BuiltinParams { tau: Some(400e-9), t_init: Some(2e-6), sweep: None }
    }

    #[test]
    fn builtins_round_trip() {
        for b in Builtin::ALL {
            let mut p = all_params();
            if b == Builtin::Deer {
                p.sweep = Some(Sweep::linspace("f", Unit::MHz, 600.0, 750.0, 31));
            }
            let seq = builtin(b, &p).unwrap();
            assert_eq!(parse_sequence(&print_sequence(&seq)).unwrap(), seq, "{}", b.name());
        }
    }

    #[test]
    fn dse_n_flip_is_coincident_with_echo() {
        let seq = builtin(Builtin::DseD, &BuiltinParams::default()).unwrap();
        let echo = seq.blocks.iter().find(|b| b.len() == 2 && b[0] == nv(Axis::X, 180.0)).unwrap();
        assert_eq!(echo[1], n(Axis::X, 180.0));
    }

    #[test]
    fn idse_sweeps_final_phase() {
        let seq = builtin(Builtin::IdseD, &all_params()).unwrap();
        assert_eq!(seq.sweep.as_ref().unwrap().unit, Unit::Deg);
        assert!(matches!(&seq.blocks[seq.blocks.len() - 2][0], PulseStep::Pulse { axis: Axis::Phase(Value::Swept { .. }), .. }));
    }

    #[test]
    fn alt_builtin_alternates() {
        assert!(builtin(Builtin::HhAlt, &all_params()).unwrap().alternates());
        assert!(!builtin(Builtin::HhDplus, &all_params()).unwrap().alternates());
    }

    #[test]
    fn missing_params() {
        assert!(matches!(builtin(Builtin::IdseD, &BuiltinParams::default()), Err(Error::MissingParam(_))));
        assert!(matches!(builtin(Builtin::Deer, &all_params()), Err(Error::MissingParam(_))));
        assert!(matches!(Builtin::from_name("NOPE"), Err(Error::UnknownBuiltin(_))));
    }
}
