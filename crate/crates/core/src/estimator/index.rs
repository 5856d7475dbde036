use crate::network::BusId;
use serde::Serialize;
use std::fmt;

/// Name of one real unknown of the equivalent circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Var {
    /// Bus node potential (real or imaginary part).
    BusV {
        bus: BusId,
        part: Part,
    },
    /// Line terminal node behind a flow-mode PMU channel.
    TerminalV {
        bus: BusId,
        branch: usize,
        part: Part,
    },
    PmuV {
        bus: BusId,
        part: Part,
    },
    /// PMU current source; `branch` is `None` in injection mode.
    PmuI {
        bus: BusId,
        branch: Option<usize>,
        part: Part,
    },
    Rtu {
        bus: BusId,
        source: RtuSource,
    },
    /// Current through a PMU conductance.
    PmuG {
        bus: BusId,
        branch: Option<usize>,
        part: Part,
    },
    /// Current delivered by a PMU voltage source.
    SourceI {
        bus: BusId,
        part: Part,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

/// The four RTU current sources: `I_R = GR + BR`, `I_I = GI − BI`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RtuSource {
    GR,
    BR,
    GI,
    BI,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Re => "R",
            Part::Im => "I",
        })
    }
}

fn channel(branch: &Option<usize>) -> String {
    branch.map_or_else(|| "inj".to_string(), |k| format!("br{k}"))
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::BusV { bus, part } => write!(f, "V_BUS[{bus}].{part}"),
            Var::TerminalV { bus, branch, part } => write!(f, "V_T[{bus},br{branch}].{part}"),
            Var::PmuV { bus, part } => write!(f, "V_PMU[{bus}].{part}"),
            Var::PmuI { bus, branch, part } => write!(f, "I_PMU[{bus},{}].{part}", channel(branch)),
            Var::Rtu { bus, source } => write!(f, "I_{source:?}[{bus}]"),
            Var::PmuG { bus, branch, part } => write!(f, "I_GPMU[{bus},{}].{part}", channel(branch)),
            Var::SourceI { bus, part } => write!(f, "I_V[{bus}].{part}"),
        }
    }
}

/// Ordered registry of unknowns. Blocks follow the layout
/// `[V_BUS | V_PMU | I_PMU | I_RTU | I_GPMU | I_V]`; terminal nodes close the
/// V_BUS block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariableIndex {
    vars: Vec<Var>,
}

impl VariableIndex {
    pub(crate) fn push(&mut self, var: Var) -> usize {
        self.vars.push(var);
        self.vars.len() - 1
    }

    /// Pushes the real and imaginary parts built by `make`; returns the
    /// slot of the real part (the imaginary part follows it).
    pub(crate) fn push_pair(&mut self, make: impl Fn(Part) -> Var) -> usize {
        let re = self.push(make(Part::Re));
        self.push(make(Part::Im));
        re
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, slot: usize) -> Var {
        self.vars[slot]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn position(&self, var: &Var) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn is_bijective(&self) -> bool {
        let set: std::collections::HashSet<&Var> = self.vars.iter().collect();
        set.len() == self.vars.len()
    }
}
