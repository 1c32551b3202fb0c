//! Client-side stream initialization.
//!
//! Until the mocap system tracks the headset it streams placeholder bodies.
//! The session waits in `AwaitingData` and switches to `Tracking` on the
//! first real pose of its body, which is also the first pose handed
//! downstream. Poses are converted to the engine convention here.

use super::packet::RigidBodyPacket;
use crate::geom::{convert_handedness, Pose};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    AwaitingData,
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyRecord {
    /// Last valid pose, engine convention, with its frame and timestamp.
    pub last: Option<DeliveredPose>,
    /// Placeholder entries received since the last valid pose.
    pub staleness: u32,
    /// Partially invalid entries received in total.
    pub corrupt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveredPose {
    pub frame_number: u32,
    pub timestamp_us: u64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub phase: SessionPhase,
    /// Body this client is anchored to.
    pub body_id: u16,
    pub bodies: BTreeMap<u16, BodyRecord>,
}

impl SessionState {
    pub fn new(body_id: u16) -> Self {
        Self {
            phase: SessionPhase::AwaitingData,
            body_id,
            bodies: BTreeMap::new(),
        }
    }

    /// Applies one packet. Returns the tracked body's new pose, if the packet
    /// carried a valid one.
    pub fn step(&mut self, packet: &RigidBodyPacket) -> Option<DeliveredPose> {
        let mut delivered = None;
        for body in &packet.bodies {
            let rec = self.bodies.entry(body.id).or_default();
            if body.is_placeholder() {
                if self.phase == SessionPhase::Tracking {
                    rec.staleness = rec.staleness.saturating_add(1);
                }
                continue;
            }
            let Some(pose) = body.pose() else {
                rec.corrupt = rec.corrupt.saturating_add(1);
                continue;
            };
            let d = DeliveredPose {
                frame_number: packet.frame_number,
                timestamp_us: packet.timestamp_us,
                pose: convert_handedness(&pose),
            };
            rec.last = Some(d);
            rec.staleness = 0;
            if body.id == self.body_id {
                self.phase = SessionPhase::Tracking;
                delivered = Some(d);
            }
        }
        delivered
    }

    pub fn last_pose(&self) -> Option<DeliveredPose> {
        self.bodies.get(&self.body_id).and_then(|r| r.last)
    }
}

/// Functional form of [`SessionState::step`].
pub fn session_step(state: &SessionState, packet: &RigidBodyPacket) -> SessionState {
    let mut next = state.clone();
    next.step(packet);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::packet::RigidBody;
    use proptest::prelude::*;

    fn packet(frame: u32, bodies: Vec<RigidBody>) -> RigidBodyPacket {
        RigidBodyPacket {
            frame_number: frame,
            timestamp_us: frame as u64 * 10_000,
            bodies,
        }
    }

    fn real(id: u16, x_mm: f32) -> RigidBody {
        RigidBody {
            id,
            position: [x_mm, 2000.0, 1700.0],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn placeholders_keep_waiting() {
        let mut s = SessionState::new(1);
        for f in 0..20 {
            assert_eq!(s.step(&packet(f, vec![RigidBody::placeholder(1)])), None);
        }
        assert_eq!(s.phase, SessionPhase::AwaitingData);
        assert_eq!(s.bodies[&1].staleness, 0);
    }

    #[test]
    fn first_real_packet_starts_tracking_and_is_delivered() {
        let mut s = SessionState::new(1);
        s.step(&packet(0, vec![RigidBody::placeholder(1)]));
        let d = s.step(&packet(1, vec![real(1, 500.0)])).unwrap();
        assert_eq!(s.phase, SessionPhase::Tracking);
        assert_eq!(d.frame_number, 1);
        // RH Z-up (0.5, 2.0, 1.7) m -> engine (0.5, 1.7, 2.0)
        assert!((d.pose.translation - nalgebra::Vector3::new(0.5, 1.7, 2.0)).norm() < 1e-6);
    }

    #[test]
    fn placeholder_during_tracking_keeps_pose_and_counts_staleness() {
        let mut s = SessionState::new(1);
        s.step(&packet(1, vec![real(1, 500.0)]));
        let before = s.last_pose();
        assert_eq!(s.step(&packet(2, vec![RigidBody::placeholder(1)])), None);
        assert_eq!(s.step(&packet(3, vec![RigidBody::placeholder(1)])), None);
        assert_eq!(s.last_pose(), before);
        assert_eq!(s.bodies[&1].staleness, 2);
        assert_eq!(s.phase, SessionPhase::Tracking);
        s.step(&packet(4, vec![real(1, 510.0)]));
        assert_eq!(s.bodies[&1].staleness, 0);
    }

    #[test]
    fn other_bodies_and_corrupt_entries_do_not_start_tracking() {
        let mut s = SessionState::new(1);
        let mut bad = real(1, 1.0);
        bad.rotation = [f32::NAN; 4];
        s.step(&packet(0, vec![real(2, 100.0), bad]));
        assert_eq!(s.phase, SessionPhase::AwaitingData);
        assert_eq!(s.bodies[&1].corrupt, 1);
        assert!(s.bodies[&2].last.is_some());
    }

    fn arb_entry() -> impl Strategy<Value = RigidBody> {
        prop_oneof![
            Just(RigidBody::placeholder(1)),
            (-5000f32..5000.0).prop_map(|x| real(1, x)),
            (-5000f32..5000.0).prop_map(|x| real(2, x)),
        ]
    }

    proptest! {
        #[test]
        fn prop_never_leaves_tracking(entries in prop::collection::vec(arb_entry(), 1..60)) {
            let mut s = SessionState::new(1);
            let mut seen_real = false;
            for (f, e) in entries.into_iter().enumerate() {
                let was = s.phase;
                let real_for_me = e.id == 1 && !e.is_placeholder();
                s = session_step(&s, &packet(f as u32, vec![e]));
                seen_real |= real_for_me;
                if was == SessionPhase::Tracking {
                    prop_assert_eq!(s.phase, SessionPhase::Tracking);
                }
                prop_assert_eq!(s.phase == SessionPhase::Tracking, seen_real);
            }
        }
    }
}
