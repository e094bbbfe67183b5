//! SYNCP presence patterns distinguishing PTE preambles from data preambles.

use serde::{Deserialize, Serialize};

pub use crate::frame::PreambleMode;

/// Slot (0-based) left empty in a PTE preamble.
pub const PTE_GAP_SLOT: usize = 2;

/// Presence of a SYNCP symbol in each of the four preamble slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreamblePattern {
    pub slots: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreambleClass {
    Mode(PreambleMode),
    Invalid,
}

pub fn encode_preamble(mode: PreambleMode) -> PreamblePattern {
    let mut slots = [true; 4];
    if mode == PreambleMode::Pte {
        slots[PTE_GAP_SLOT] = false;
    }
    PreamblePattern { slots }
}

/// Decides the mode from where (if anywhere) the SYNCP is missing.
pub fn classify_preamble(p: PreamblePattern) -> PreambleClass {
    let gaps: Vec<usize> = p.slots.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| i).collect();
    match gaps.as_slice() {
        [] => PreambleClass::Mode(PreambleMode::Data),
        [PTE_GAP_SLOT] => PreambleClass::Mode(PreambleMode::Pte),
        _ => PreambleClass::Invalid,
    }
}
