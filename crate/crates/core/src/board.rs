//! Assembly board: the slots components are placed into.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BasePoint;
use crate::label::ComponentLabel;

#[derive(Debug, Error, PartialEq)]
pub enum BoardError {
    #[error("duplicate slot id {0:?}")]
    DuplicateSlot(String),
    #[error("slots {0:?} and {1:?} share a place point")]
    SharedPlacePoint(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub id: String,
    pub accepts: ComponentLabel,
    pub place: BasePoint,
    #[serde(default)]
    pub occupied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoardConfig {
    pub slots: Vec<Slot>,
}

impl BoardConfig {
    pub fn new(slots: Vec<Slot>) -> Result<Self, BoardError> {
        let board = Self { slots };
        board.validate()?;
        Ok(board)
    }

    pub fn validate(&self) -> Result<(), BoardError> {
        let mut ids = HashSet::new();
        for (i, s) in self.slots.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                return Err(BoardError::DuplicateSlot(s.id.clone()));
            }
            if let Some(other) = self.slots[..i].iter().find(|o| o.place == s.place) {
                return Err(BoardError::SharedPlacePoint(other.id.clone(), s.id.clone()));
            }
        }
        Ok(())
    }

    pub fn slot(&self, id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn slot_mut(&mut self, id: &str) -> Option<&mut Slot> {
        self.slots.iter_mut().find(|s| s.id == id)
    }

    /// Free slots accepting `label`, in slot-id order.
    pub fn free_slots_for(&self, label: ComponentLabel) -> Vec<&Slot> {
        let mut free: Vec<&Slot> = self
            .slots
            .iter()
            .filter(|s| !s.occupied && s.accepts == label)
            .collect();
        free.sort_by(|a, b| a.id.cmp(&b.id));
        free
    }

    pub fn free_slots(&self) -> Vec<&Slot> {
        let mut free: Vec<&Slot> = self.slots.iter().filter(|s| !s.occupied).collect();
        free.sort_by(|a, b| a.id.cmp(&b.id));
        free
    }

    pub fn occupied_ids(&self) -> Vec<&str> {
        self.slots
            .iter()
            .filter(|s| s.occupied)
            .map(|s| s.id.as_str())
            .collect()
    }
}
