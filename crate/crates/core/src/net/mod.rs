//! Mocap wire protocol, client session initialization, and pose sharing.

pub mod hub;
pub mod packet;
pub mod server;
pub mod session;

pub use hub::{hub_poll, hub_publish, Hub};
pub use packet::{
    decode_all, decode_frame, decode_packet, encode_message, encode_packet, encode_shared_pose, Decoded, Message,
    RigidBody, RigidBodyPacket, SharedPoseMessage, StreamDecoder,
};
pub use server::{receive_packets, HubClient, HubServer, MocapServer, DEFAULT_HUB_PORT, DEFAULT_MOCAP_PORT};
pub use session::{session_step, DeliveredPose, SessionPhase, SessionState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("{0} bodies exceed the per-packet maximum of 64")]
    TooManyBodies(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("user {0} is not registered with the hub")]
    UnregisteredUser(u16),
    #[error("cannot bind: {0}")]
    Bind(String),
    #[error("i/o error: {0}")]
    Io(String),
}
