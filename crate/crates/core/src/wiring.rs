//! Sparse four-layer neural-circuit-policy wiring:
//! sensory → inter → command (⟲) → motor.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WiringSpec {
    pub sensory: usize,
    pub inter: usize,
    pub command: usize,
    pub motor: usize,
    pub sensory_fanout: usize,
    pub inter_fanout: usize,
    pub recurrent_command_synapses: usize,
    pub motor_fanin: usize,
}

impl WiringSpec {
    /// Splits `hidden` into inter and command neurons (inter = ⌈0.6·hidden⌉)
    /// and derives fan-outs at 50 % density.
    pub fn auto(sensory: usize, hidden: usize, motor: usize) -> Self {
        let inter = ((hidden as f64) * 0.6).ceil() as usize;
        let inter = inter.min(hidden.saturating_sub(1)).max(1);
        let command = hidden.saturating_sub(inter).max(1);
        let half = |n: usize| (n / 2).max(1);
        Self {
            sensory,
            inter,
            command,
            motor,
            sensory_fanout: half(inter),
            inter_fanout: half(command),
            recurrent_command_synapses: (command).max(1),
            motor_fanin: half(command),
        }
    }

    /// Neurons carrying state: inter, command and motor.
    pub fn units(&self) -> usize {
        self.inter + self.command + self.motor
    }

    pub fn inter_range(&self) -> std::ops::Range<usize> {
        0..self.inter
    }

    pub fn command_range(&self) -> std::ops::Range<usize> {
        self.inter..self.inter + self.command
    }

    pub fn motor_range(&self) -> std::ops::Range<usize> {
        self.inter + self.command..self.units()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Wiring(m));
        if self.sensory == 0 || self.inter == 0 || self.command == 0 || self.motor == 0 {
            return bad(format!("all layers need at least one neuron: {self:?}"));
        }
        if self.sensory_fanout == 0 || self.sensory_fanout > self.inter {
            return bad(format!(
                "sensory fanout {} must be in 1..={} (inter neurons)",
                self.sensory_fanout, self.inter
            ));
        }
        if self.inter_fanout == 0 || self.inter_fanout > self.command {
            return bad(format!(
                "inter fanout {} must be in 1..={} (command neurons)",
                self.inter_fanout, self.command
            ));
        }
        if self.motor_fanin == 0 || self.motor_fanin > self.command {
            return bad(format!(
                "motor fanin {} must be in 1..={} (command neurons)",
                self.motor_fanin, self.command
            ));
        }
        if self.recurrent_command_synapses > self.command * self.command {
            return bad(format!(
                "{} recurrent synapses exceed {}² command pairs",
                self.recurrent_command_synapses, self.command
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synapse {
    pub source: usize,
    pub target: usize,
    /// +1 excitatory, −1 inhibitory.
    pub polarity: i8,
}

/// Built adjacency. Sensory sources index the input vector; all other
/// indices refer to the state vector laid out as `[inter | command | motor]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wiring {
    pub spec: WiringSpec,
    pub sensory_synapses: Vec<Synapse>,
    pub synapses: Vec<Synapse>,
}

fn polarity(rng: &mut impl Rng) -> i8 {
    if rng.gen_bool(0.5) {
        1
    } else {
        -1
    }
}

/// Builds the NCP adjacency; deterministic in `seed`.
pub fn build_ncp(spec: &WiringSpec, seed: u64) -> Result<Wiring> {
    spec.validate()?;
    let mut rng = stream_rng(seed, 0x004e_4350);
    let inter = spec.inter_range();
    let command = spec.command_range();
    let motor = spec.motor_range();
    let mut sensory_synapses = Vec::new();
    let mut synapses = Vec::new();

    // sensory → inter
    let mut inter_has_input = vec![false; spec.inter];
    for s in 0..spec.sensory {
        for t in sample(&mut rng, spec.inter, spec.sensory_fanout).into_iter() {
            inter_has_input[t] = true;
            sensory_synapses.push(Synapse {
                source: s,
                target: inter.start + t,
                polarity: polarity(&mut rng),
            });
        }
    }
    let fanin = (spec.sensory * spec.sensory_fanout / spec.inter).clamp(1, spec.sensory);
    for t in 0..spec.inter {
        if !inter_has_input[t] {
            for s in sample(&mut rng, spec.sensory, fanin).into_iter() {
                sensory_synapses.push(Synapse {
                    source: s,
                    target: inter.start + t,
                    polarity: polarity(&mut rng),
                });
            }
        }
    }

    // inter → command
    let mut command_has_input = vec![false; spec.command];
    for i in inter.clone() {
        for t in sample(&mut rng, spec.command, spec.inter_fanout).into_iter() {
            command_has_input[t] = true;
            synapses.push(Synapse {
                source: i,
                target: command.start + t,
                polarity: polarity(&mut rng),
            });
        }
    }
    let fanin = (spec.inter * spec.inter_fanout / spec.command).clamp(1, spec.inter);
    for t in 0..spec.command {
        if !command_has_input[t] {
            for i in sample(&mut rng, spec.inter, fanin).into_iter() {
                synapses.push(Synapse {
                    source: inter.start + i,
                    target: command.start + t,
                    polarity: polarity(&mut rng),
                });
            }
        }
    }

    // command ⟲ command
    let mut pairs: Vec<(usize, usize)> = command
        .clone()
        .flat_map(|a| command.clone().map(move |b| (a, b)))
        .collect();
    pairs.shuffle(&mut rng);
    for &(a, b) in pairs.iter().take(spec.recurrent_command_synapses) {
        synapses.push(Synapse {
            source: a,
            target: b,
            polarity: polarity(&mut rng),
        });
    }

    // command → motor
    let mut command_has_output = vec![false; spec.command];
    for m in motor.clone() {
        for c in sample(&mut rng, spec.command, spec.motor_fanin).into_iter() {
            command_has_output[c] = true;
            synapses.push(Synapse {
                source: command.start + c,
                target: m,
                polarity: polarity(&mut rng),
            });
        }
    }
    let fanout = (spec.motor * spec.motor_fanin / spec.command).clamp(1, spec.motor);
    for c in 0..spec.command {
        if !command_has_output[c] {
            for m in sample(&mut rng, spec.motor, fanout).into_iter() {
                synapses.push(Synapse {
                    source: command.start + c,
                    target: motor.start + m,
                    polarity: polarity(&mut rng),
                });
            }
        }
    }

    Ok(Wiring {
        spec: spec.clone(),
        sensory_synapses,
        synapses,
    })
}

impl Wiring {
    pub fn units(&self) -> usize {
        self.spec.units()
    }

    /// `[sensory, units]` 0/1 connectivity.
    pub fn sensory_mask(&self) -> Vec<f64> {
        let q = self.units();
        let mut m = vec![0.0; self.spec.sensory * q];
        for s in &self.sensory_synapses {
            m[s.source * q + s.target] = 1.0;
        }
        m
    }

    /// `[sensory, units]` polarity (0 where unconnected).
    pub fn sensory_polarity(&self) -> Vec<f64> {
        let q = self.units();
        let mut m = vec![0.0; self.spec.sensory * q];
        for s in &self.sensory_synapses {
            m[s.source * q + s.target] = f64::from(s.polarity);
        }
        m
    }

    /// `[units, units]` 0/1 connectivity between state neurons.
    pub fn mask(&self) -> Vec<f64> {
        let q = self.units();
        let mut m = vec![0.0; q * q];
        for s in &self.synapses {
            m[s.source * q + s.target] = 1.0;
        }
        m
    }

    pub fn polarity(&self) -> Vec<f64> {
        let q = self.units();
        let mut m = vec![0.0; q * q];
        for s in &self.synapses {
            m[s.source * q + s.target] = f64::from(s.polarity);
        }
        m
    }

    pub fn outgoing(&self, neuron: usize) -> usize {
        self.synapses.iter().filter(|s| s.source == neuron).count()
    }

    pub fn incoming(&self, neuron: usize) -> usize {
        self.synapses.iter().filter(|s| s.target == neuron).count()
            + self.sensory_synapses.iter().filter(|s| s.target == neuron).count()
    }

    /// Checks the layering, coverage and reachability rules.
    pub fn check(&self) -> Result<()> {
        let sp = &self.spec;
        let fail = |m: String| Err(Error::Wiring(m));
        for s in &self.sensory_synapses {
            if s.source >= sp.sensory || !sp.inter_range().contains(&s.target) {
                return fail(format!("sensory synapse {s:?} does not target an inter neuron"));
            }
        }
        for s in &self.synapses {
            let ok = (sp.inter_range().contains(&s.source) && sp.command_range().contains(&s.target))
                || (sp.command_range().contains(&s.source) && sp.command_range().contains(&s.target))
                || (sp.command_range().contains(&s.source) && sp.motor_range().contains(&s.target));
            if !ok {
                return fail(format!("synapse {s:?} violates layer order"));
            }
        }
        for n in 0..self.units() {
            if self.incoming(n) == 0 {
                return fail(format!("neuron {n} has no incoming synapse"));
            }
        }
        let mut reached = vec![false; self.units()];
        for s in &self.sensory_synapses {
            reached[s.target] = true;
        }
        loop {
            let mut changed = false;
            for s in &self.synapses {
                if reached[s.source] && !reached[s.target] {
                    reached[s.target] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(m) = sp.motor_range().find(|&m| !reached[m]) {
            return fail(format!("motor neuron {m} unreachable from sensory inputs"));
        }
        Ok(())
    }
}
