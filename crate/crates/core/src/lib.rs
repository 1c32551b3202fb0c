//! Hybrid inside-out / motion-capture tracking for co-located multi-user VR.
//!
//! Headsets track themselves with low latency in their own drifting frames.
//! A motion-capture stream anchors every headset to one shared physical frame:
//! a pre-calibrated rigid offset maps the mocap body to the eye center
//! ([`calib`]), the XR origin is solved so the virtual camera lands on that
//! eye pose while keeping the tracking space level ([`align`]), and a
//! threshold policy re-aligns when drift exceeds a tolerance. [`sim`] provides
//! a deterministic synthetic world for all of it, [`net`] the wire protocol and
//! pose-sharing hub, and [`eval`] the ATE and latency metrics.

pub mod align;
pub mod calib;
pub mod eval;
pub mod geom;
pub mod net;
pub mod par;
pub mod sim;
pub mod trajectory;

pub use geom::Pose;
pub use trajectory::{Trajectory, TrajectorySample};
