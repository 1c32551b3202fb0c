//! Latest-wins pose sharing between co-located clients.

use super::packet::SharedPoseMessage;
use super::NetError;
use std::collections::BTreeMap;
use std::sync::RwLock;

/// Shared pose table. Each registered user holds at most one message, the one
/// with the highest frame number published so far.
#[derive(Debug, Default)]
pub struct Hub {
    table: RwLock<BTreeMap<u16, Option<SharedPoseMessage>>>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, user_id: u16) {
        self.table.write().expect("hub lock").entry(user_id).or_insert(None);
    }

    pub fn is_registered(&self, user_id: u16) -> bool {
        self.table.read().expect("hub lock").contains_key(&user_id)
    }

    /// Stores `msg` unless an equal or newer frame is already held. Returns
    /// whether the message was accepted.
    pub fn publish(&self, msg: SharedPoseMessage) -> Result<bool, NetError> {
        let mut table = self.table.write().expect("hub lock");
        let slot = table
            .get_mut(&msg.user_id)
            .ok_or(NetError::UnregisteredUser(msg.user_id))?;
        match slot {
            Some(prev) if prev.frame_number >= msg.frame_number => Ok(false),
            _ => {
                *slot = Some(msg);
                Ok(true)
            }
        }
    }

    /// Latest message of every other registered user that has published,
    /// in user order.
    pub fn poll(&self, user_id: u16) -> Result<Vec<SharedPoseMessage>, NetError> {
        let table = self.table.read().expect("hub lock");
        if !table.contains_key(&user_id) {
            return Err(NetError::UnregisteredUser(user_id));
        }
        Ok(table
            .iter()
            .filter(|(&id, _)| id != user_id)
            .filter_map(|(_, m)| *m)
            .collect())
    }
}

pub fn hub_publish(hub: &Hub, msg: SharedPoseMessage) -> Result<bool, NetError> {
    hub.publish(msg)
}

pub fn hub_poll(hub: &Hub, user_id: u16) -> Result<Vec<SharedPoseMessage>, NetError> {
    hub.poll(user_id)
}
