//! Characters of the finite quotients `T(F)/T_r(F)` of unramified tori.

pub mod cyc;
pub mod dual;
pub mod enumerate;
pub mod group;
pub mod moebius;

pub use cyc::{CycNumber, PowerHistogram};
pub use dual::{count_by_depth, CharacterHandle, Dual, HoweTower};
pub use group::{QuotientGroup, TorusKind};
