//! Label vocabulary for team-dialogue coding.
//!
//! Six communication codes are defined, in a fixed canonical order that
//! every prompt, parser, and metric in this crate relies on. A coded
//! utterance is represented by a [`CodeVector`]: one bit per code plus a
//! seventh, trailing *none* slot that is always derived (set exactly when
//! all six code bits are zero) and never stored independently.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of communication codes.
pub const CODE_COUNT: usize = 6;

/// Width of the binary label vector exchanged with the model: the six codes
/// plus the derived trailing *none* slot.
pub const VECTOR_WIDTH: usize = 7;

/// A communication code, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Code {
    TaskAllocation,
    Handover,
    SharingInformation,
    Escalation,
    Questioning,
    Acknowledging,
}

impl Code {
    /// All codes in canonical order.
    pub const ALL: [Code; CODE_COUNT] = [
        Code::TaskAllocation,
        Code::Handover,
        Code::SharingInformation,
        Code::Escalation,
        Code::Questioning,
        Code::Acknowledging,
    ];

    /// Position of this code in the canonical order (0-based).
    pub fn index(self) -> usize {
        self as usize
    }

    /// Machine-readable snake_case name, as used in corpus files.
    pub fn name(self) -> &'static str {
        match self {
            Code::TaskAllocation => "task_allocation",
            Code::Handover => "handover",
            Code::SharingInformation => "sharing_information",
            Code::Escalation => "escalation",
            Code::Questioning => "questioning",
            Code::Acknowledging => "acknowledging",
        }
    }

    /// Human-readable name, as used in prompt text.
    pub fn display_name(self) -> &'static str {
        match self {
            Code::TaskAllocation => "task allocation",
            Code::Handover => "handover",
            Code::SharingInformation => "sharing information",
            Code::Escalation => "escalation",
            Code::Questioning => "questioning",
            Code::Acknowledging => "acknowledging",
        }
    }

    /// Parses a machine-readable name produced by [`Code::name`].
    pub fn from_name(name: &str) -> Option<Code> {
        Code::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Multi-label assignment for one utterance: a set over the six codes.
///
/// The seventh (*none*) slot is not stored; it is derived on demand and is
/// `1` exactly when the set is empty. Equality and hashing therefore always
/// respect the none-slot consistency invariant by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CodeVector {
    mask: u8,
}

impl CodeVector {
    /// The empty assignment (derived none-slot = 1).
    pub const NONE: CodeVector = CodeVector { mask: 0 };

    /// Builds a vector from a set of codes; duplicates are harmless.
    pub fn from_codes<I: IntoIterator<Item = Code>>(codes: I) -> CodeVector {
        let mut mask = 0u8;
        for code in codes {
            mask |= 1 << code.index();
        }
        CodeVector { mask }
    }

    /// Builds a vector from the six leading slots of a seven-slot binary
    /// row. The seventh slot is ignored: the none-slot is always derived,
    /// so a row whose none bit disagrees with the code bits is normalized
    /// rather than trusted.
    pub fn from_bits(bits: [u8; VECTOR_WIDTH]) -> CodeVector {
        let mut mask = 0u8;
        for (i, &b) in bits.iter().take(CODE_COUNT).enumerate() {
            if b != 0 {
                mask |= 1 << i;
            }
        }
        CodeVector { mask }
    }

    /// Whether the given code is assigned.
    pub fn contains(self, code: Code) -> bool {
        self.mask & (1 << code.index()) != 0
    }

    /// Adds a code to the assignment.
    pub fn insert(&mut self, code: Code) {
        self.mask |= 1 << code.index();
    }

    /// Whether no code is assigned (equivalently: the derived none-slot is 1).
    pub fn is_none(self) -> bool {
        self.mask == 0
    }

    /// Number of assigned codes.
    pub fn count(self) -> usize {
        self.mask.count_ones() as usize
    }

    /// The assigned codes in canonical order.
    pub fn codes(self) -> impl Iterator<Item = Code> {
        Code::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// The full seven-slot binary row: six code bits in canonical order,
    /// then the derived none bit.
    pub fn bits(self) -> [u8; VECTOR_WIDTH] {
        let mut out = [0u8; VECTOR_WIDTH];
        for code in Code::ALL {
            out[code.index()] = self.contains(code) as u8;
        }
        out[CODE_COUNT] = self.is_none() as u8;
        out
    }
}

impl fmt::Display for CodeVector {
    /// Formats as the canonical seven-token space-separated row,
    /// e.g. `0 0 1 0 0 0 0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits = self.bits();
        for (i, b) in bits.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Speaker or receiver role in a simulation session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "primary_nurse_1")]
    PrimaryNurse1,
    #[serde(rename = "primary_nurse_2")]
    PrimaryNurse2,
    #[serde(rename = "secondary_nurse_1")]
    SecondaryNurse1,
    #[serde(rename = "secondary_nurse_2")]
    SecondaryNurse2,
    #[serde(rename = "doctor")]
    Doctor,
    #[serde(rename = "patient")]
    Patient,
    #[serde(rename = "facilitator")]
    Facilitator,
    #[serde(rename = "other")]
    Other,
}

impl Role {
    /// All roles.
    pub const ALL: [Role; 8] = [
        Role::PrimaryNurse1,
        Role::PrimaryNurse2,
        Role::SecondaryNurse1,
        Role::SecondaryNurse2,
        Role::Doctor,
        Role::Patient,
        Role::Facilitator,
        Role::Other,
    ];

    /// Machine-readable snake_case name, as used in corpus files.
    pub fn name(self) -> &'static str {
        match self {
            Role::PrimaryNurse1 => "primary_nurse_1",
            Role::PrimaryNurse2 => "primary_nurse_2",
            Role::SecondaryNurse1 => "secondary_nurse_1",
            Role::SecondaryNurse2 => "secondary_nurse_2",
            Role::Doctor => "doctor",
            Role::Patient => "patient",
            Role::Facilitator => "facilitator",
            Role::Other => "other",
        }
    }

    /// Human-readable name, as used in prompt text.
    pub fn display_name(self) -> &'static str {
        match self {
            Role::PrimaryNurse1 => "primary nurse 1",
            Role::PrimaryNurse2 => "primary nurse 2",
            Role::SecondaryNurse1 => "secondary nurse 1",
            Role::SecondaryNurse2 => "secondary nurse 2",
            Role::Doctor => "doctor",
            Role::Patient => "patient",
            Role::Facilitator => "facilitator",
            Role::Other => "other",
        }
    }

    /// Parses a machine-readable name produced by [`Role::name`].
    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.iter().copied().find(|r| r.name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}
