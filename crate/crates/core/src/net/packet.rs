//! Framed little-endian wire format.
//!
//! Every frame starts with `[u32 total_size][u32 type]`. Known types:
//!
//! | type | payload |
//! |------|---------|
//! | 6 rigid bodies | `[u32 frame][u64 timestamp_us][u16 count]` then `count` × `[u16 id][3×f32 pos mm][4×f32 quat wxyz]` |
//! | 7 shared pose | `[u16 user][u32 frame]` then head, left hand, right hand as `[3×f64 pos m][4×f64 quat wxyz]` |
//! | 8 register | `[u16 user]` |
//! | 9 poll end | `[u16 count]` |
//!
//! Rigid-body positions are millimeters in the mocap convention (right-handed,
//! Z up); shared poses are meters in the engine convention.

use super::NetError;
use crate::geom::Pose;

pub const TYPE_RIGID_BODIES: u32 = 6;
pub const TYPE_SHARED_POSE: u32 = 7;
pub const TYPE_REGISTER: u32 = 8;
pub const TYPE_POLL_END: u32 = 9;

/// Header of a rigid-body frame: size, type, frame, timestamp, count.
pub const PACKET_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 2;
pub const BODY_LEN: usize = 2 + 3 * 4 + 4 * 4;
pub const MAX_BODIES: usize = 64;
pub const MAX_FRAME_LEN: usize = 16 * 1024;
pub const SHARED_POSE_LEN: usize = 4 + 4 + 2 + 4 + 3 * 7 * 8;
const REGISTER_LEN: usize = 4 + 4 + 2;
const POLL_END_LEN: usize = 4 + 4 + 2;

/// One rigid body as it travels on the wire.
#[derive(Debug, Clone, Copy)]
pub struct RigidBody {
    pub id: u16,
    /// Millimeters, right-handed Z-up.
    pub position: [f32; 3],
    /// `(w, x, y, z)`.
    pub rotation: [f32; 4],
}

impl PartialEq for RigidBody {
    /// Bitwise comparison so NaN payloads compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.position.map(f32::to_bits) == other.position.map(f32::to_bits)
            && self.rotation.map(f32::to_bits) == other.rotation.map(f32::to_bits)
    }
}

impl Eq for RigidBody {}

impl RigidBody {
    /// The "no data" sentinel: every component NaN.
    pub fn placeholder(id: u16) -> Self {
        Self {
            id,
            position: [f32::NAN; 3],
            rotation: [f32::NAN; 4],
        }
    }

    /// From a pose in meters (mocap convention).
    pub fn from_pose(id: u16, pose: &Pose) -> Self {
        let t = pose.translation * 1000.0;
        let q = pose.wxyz();
        Self {
            id,
            position: [t.x as f32, t.y as f32, t.z as f32],
            rotation: q.map(|c| c as f32),
        }
    }

    pub fn is_placeholder(&self) -> bool {
        self.position.iter().chain(&self.rotation).all(|c| c.is_nan())
    }

    /// Some but not all components are non-finite, or the quaternion is zero.
    pub fn is_corrupt(&self) -> bool {
        !self.is_placeholder() && self.pose().is_none()
    }

    /// Pose in meters (mocap convention), `None` for placeholders and corrupt
    /// entries.
    pub fn pose(&self) -> Option<Pose> {
        let p = self.position.map(|c| c as f64 / 1000.0);
        Pose::from_parts(p, self.rotation.map(f64::from))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RigidBodyPacket {
    pub frame_number: u32,
    pub timestamp_us: u64,
    pub bodies: Vec<RigidBody>,
}

/// Head and hand poses one client shares with the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedPoseMessage {
    pub user_id: u16,
    pub frame_number: u32,
    pub head: Pose,
    pub left_hand: Pose,
    pub right_hand: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RigidBodies(RigidBodyPacket),
    SharedPose(SharedPoseMessage),
    Register(u16),
    PollEnd(u16),
}

/// Result of decoding from the front of a buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    /// Not enough bytes for a full frame yet; nothing consumed.
    NeedMore,
    Message(Message, usize),
    /// Well-framed message of a type this decoder does not know.
    Unknown { frame_type: u32, consumed: usize },
}

fn header(out: &mut Vec<u8>, size: usize, ty: u32) {
    out.extend_from_slice(&(size as u32).to_le_bytes());
    out.extend_from_slice(&ty.to_le_bytes());
}

pub fn encode_packet(p: &RigidBodyPacket) -> Result<Vec<u8>, NetError> {
    if p.bodies.len() > MAX_BODIES {
        return Err(NetError::TooManyBodies(p.bodies.len()));
    }
    let size = PACKET_HEADER_LEN + BODY_LEN * p.bodies.len();
    let mut out = Vec::with_capacity(size);
    header(&mut out, size, TYPE_RIGID_BODIES);
    out.extend_from_slice(&p.frame_number.to_le_bytes());
    out.extend_from_slice(&p.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(p.bodies.len() as u16).to_le_bytes());
    for b in &p.bodies {
        out.extend_from_slice(&b.id.to_le_bytes());
        for c in b.position.iter().chain(&b.rotation) {
            out.extend_from_slice(&c.to_bits().to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), size);
    Ok(out)
}

fn put_pose(out: &mut Vec<u8>, pose: &Pose) {
    let t = pose.translation;
    for c in [t.x, t.y, t.z].into_iter().chain(pose.wxyz()) {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

pub fn encode_shared_pose(m: &SharedPoseMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(SHARED_POSE_LEN);
    header(&mut out, SHARED_POSE_LEN, TYPE_SHARED_POSE);
    out.extend_from_slice(&m.user_id.to_le_bytes());
    out.extend_from_slice(&m.frame_number.to_le_bytes());
    for p in [&m.head, &m.left_hand, &m.right_hand] {
        put_pose(&mut out, p);
    }
    out
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, NetError> {
    Ok(match m {
        Message::RigidBodies(p) => encode_packet(p)?,
        Message::SharedPose(s) => encode_shared_pose(s),
        Message::Register(user) => {
            let mut out = Vec::with_capacity(REGISTER_LEN);
            header(&mut out, REGISTER_LEN, TYPE_REGISTER);
            out.extend_from_slice(&user.to_le_bytes());
            out
        }
        Message::PollEnd(count) => {
            let mut out = Vec::with_capacity(POLL_END_LEN);
            header(&mut out, POLL_END_LEN, TYPE_POLL_END);
            out.extend_from_slice(&count.to_le_bytes());
            out
        }
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.buf[self.at..self.at + N].try_into().expect("length checked by caller");
        self.at += N;
        out
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_bits(self.u32())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn pose(&mut self) -> Result<Pose, NetError> {
        let t = [self.f64(), self.f64(), self.f64()];
        let q = [self.f64(), self.f64(), self.f64(), self.f64()];
        Pose::from_parts(t, q).ok_or_else(|| NetError::Malformed("invalid pose in shared pose message".into()))
    }
}

fn expect_len(ty: u32, size: usize, want: usize) -> Result<(), NetError> {
    if size != want {
        return Err(NetError::Malformed(format!(
            "type {ty} frame declares {size} bytes, expected {want}"
        )));
    }
    Ok(())
}

/// Decodes one frame from the front of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Decoded, NetError> {
    if bytes.len() < 8 {
        // reject an oversized length as soon as it is readable
        if bytes.len() >= 4 {
            let size = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
            if size > MAX_FRAME_LEN {
                return Err(NetError::Malformed(format!("frame size {size} exceeds {MAX_FRAME_LEN}")));
            }
        }
        return Ok(Decoded::NeedMore);
    }
    let mut r = Reader { buf: bytes, at: 0 };
    let size = r.u32() as usize;
    let ty = r.u32();
    if size > MAX_FRAME_LEN {
        return Err(NetError::Malformed(format!("frame size {size} exceeds {MAX_FRAME_LEN}")));
    }
    if size < 8 {
        return Err(NetError::Malformed(format!("frame size {size} smaller than its header")));
    }
    if ty == TYPE_RIGID_BODIES {
        if size < PACKET_HEADER_LEN {
            return Err(NetError::Malformed(format!("rigid-body frame of {size} bytes")));
        }
        if bytes.len() < PACKET_HEADER_LEN {
            return Ok(Decoded::NeedMore);
        }
        let count = u16::from_le_bytes(bytes[20..22].try_into().unwrap()) as usize;
        if count > MAX_BODIES {
            return Err(NetError::Malformed(format!("{count} bodies exceeds {MAX_BODIES}")));
        }
        expect_len(ty, size, PACKET_HEADER_LEN + BODY_LEN * count)?;
    }
    if bytes.len() < size {
        return Ok(Decoded::NeedMore);
    }
    let msg = match ty {
        TYPE_RIGID_BODIES => {
            let frame_number = r.u32();
            let timestamp_us = r.u64();
            let count = r.u16() as usize;
            let bodies = (0..count)
                .map(|_| RigidBody {
                    id: r.u16(),
                    position: [r.f32(), r.f32(), r.f32()],
                    rotation: [r.f32(), r.f32(), r.f32(), r.f32()],
                })
                .collect();
            Message::RigidBodies(RigidBodyPacket {
                frame_number,
                timestamp_us,
                bodies,
            })
        }
        TYPE_SHARED_POSE => {
            expect_len(ty, size, SHARED_POSE_LEN)?;
            Message::SharedPose(SharedPoseMessage {
                user_id: r.u16(),
                frame_number: r.u32(),
                head: r.pose()?,
                left_hand: r.pose()?,
                right_hand: r.pose()?,
            })
        }
        TYPE_REGISTER => {
            expect_len(ty, size, REGISTER_LEN)?;
            Message::Register(r.u16())
        }
        TYPE_POLL_END => {
            expect_len(ty, size, POLL_END_LEN)?;
            Message::PollEnd(r.u16())
        }
        other => {
            return Ok(Decoded::Unknown {
                frame_type: other,
                consumed: size,
            })
        }
    };
    Ok(Decoded::Message(msg, size))
}

/// Decodes one rigid-body frame. Frames of any other type are reported as
/// [`Decoded::Unknown`] so the caller can skip them.
pub fn decode_packet(bytes: &[u8]) -> Result<Decoded, NetError> {
    match decode_frame(bytes)? {
        Decoded::Message(Message::RigidBodies(p), n) => Ok(Decoded::Message(Message::RigidBodies(p), n)),
        Decoded::Message(other, n) => Ok(Decoded::Unknown {
            frame_type: message_type(&other),
            consumed: n,
        }),
        d => Ok(d),
    }
}

fn message_type(m: &Message) -> u32 {
    match m {
        Message::RigidBodies(_) => TYPE_RIGID_BODIES,
        Message::SharedPose(_) => TYPE_SHARED_POSE,
        Message::Register(_) => TYPE_REGISTER,
        Message::PollEnd(_) => TYPE_POLL_END,
    }
}

/// Reassembles frames from an arbitrarily segmented byte stream.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    skipped: usize,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet decoded.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Frames of unknown type dropped so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Next complete message, skipping unknown frame types. A malformed frame
    /// poisons the stream: the buffer is discarded and the error returned.
    pub fn next_message(&mut self) -> Result<Option<Message>, NetError> {
        loop {
            match decode_frame(&self.buf) {
                Ok(Decoded::NeedMore) => return Ok(None),
                Ok(Decoded::Message(m, n)) => {
                    self.buf.drain(..n);
                    return Ok(Some(m));
                }
                Ok(Decoded::Unknown { frame_type, consumed }) => {
                    log::warn!("skipping frame of unknown type {frame_type} ({consumed} bytes)");
                    self.skipped += 1;
                    self.buf.drain(..consumed);
                }
                Err(e) => {
                    self.buf.clear();
                    return Err(e);
                }
            }
        }
    }

    /// Next rigid-body packet; other message types are skipped.
    pub fn next_packet(&mut self) -> Result<Option<RigidBodyPacket>, NetError> {
        while let Some(m) = self.next_message()? {
            if let Message::RigidBodies(p) = m {
                return Ok(Some(p));
            }
            self.skipped += 1;
        }
        Ok(None)
    }
}

/// Decodes a complete capture (concatenated frames) into messages.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Message>, NetError> {
    let mut dec = StreamDecoder::new();
    dec.feed(bytes);
    let mut out = Vec::new();
    while let Some(m) = dec.next_message()? {
        out.push(m);
    }
    if dec.buffered() > 0 {
        return Err(NetError::Malformed(format!("{} trailing bytes", dec.buffered())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::yaw_rotation;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn body(id: u16) -> RigidBody {
        RigidBody {
            id,
            position: [1200.5, -30.25, 1700.0],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn empty_packet_is_header_only() {
        let p = RigidBodyPacket {
            frame_number: 1,
            timestamp_us: 10_000,
            bodies: vec![],
        };
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(bytes.len(), 22);
        assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()), 22);
        assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Message(Message::RigidBodies(p), 22));
    }

    #[test]
    fn layout_is_little_endian() {
        let p = RigidBodyPacket {
            frame_number: 0x0102_0304,
            timestamp_us: 0x0A0B_0C0D_0E0F_1011,
            bodies: vec![body(0x0201)],
        };
        let b = encode_packet(&p).unwrap();
        assert_eq!(b.len(), 52);
        assert_eq!(&b[..4], &[52, 0, 0, 0]);
        assert_eq!(&b[4..8], &[6, 0, 0, 0]);
        assert_eq!(&b[8..12], &[4, 3, 2, 1]);
        assert_eq!(&b[12..20], &[0x11, 0x10, 0x0F, 0x0E, 0x0D, 0x0C, 0x0B, 0x0A]);
        assert_eq!(&b[20..22], &[1, 0]);
        assert_eq!(&b[22..24], &[1, 2]);
        assert_eq!(&b[24..28], &1200.5f32.to_le_bytes());
    }

    #[test]
    fn too_many_bodies_rejected() {
        let p = RigidBodyPacket {
            frame_number: 0,
            timestamp_us: 0,
            bodies: (0..65).map(body).collect(),
        };
        assert_eq!(encode_packet(&p), Err(NetError::TooManyBodies(65)));
    }

    #[test]
    fn placeholder_nan_bits_survive() {
        let odd_nan = f32::from_bits(0x7FC0_1234);
        let mut b = RigidBody::placeholder(3);
        b.position[1] = odd_nan;
        let p = RigidBodyPacket {
            frame_number: 9,
            timestamp_us: 1,
            bodies: vec![b],
        };
        let Decoded::Message(Message::RigidBodies(back), _) = decode_packet(&encode_packet(&p).unwrap()).unwrap()
        else {
            panic!("expected a packet")
        };
        assert_eq!(back.bodies[0].position[1].to_bits(), 0x7FC0_1234);
        assert!(back.bodies[0].is_placeholder());
    }

    #[test]
    fn placeholder_semantics() {
        assert!(RigidBody::placeholder(0).is_placeholder());
        assert!(!body(0).is_placeholder());
        assert!(!body(0).is_corrupt());
        let mut half = body(0);
        half.rotation = [f32::NAN; 4];
        assert!(!half.is_placeholder());
        assert!(half.is_corrupt());
        assert!(half.pose().is_none());
    }

    #[test]
    fn truncated_header_needs_more() {
        let bytes = encode_packet(&RigidBodyPacket {
            frame_number: 1,
            timestamp_us: 2,
            bodies: vec![body(1)],
        })
        .unwrap();
        for cut in 0..bytes.len() {
            assert_eq!(decode_packet(&bytes[..cut]).unwrap(), Decoded::NeedMore, "cut {cut}");
        }
    }

    #[test]
    fn two_frames_in_one_read() {
        let a = RigidBodyPacket {
            frame_number: 1,
            timestamp_us: 10,
            bodies: vec![body(1)],
        };
        let b = RigidBodyPacket {
            frame_number: 2,
            timestamp_us: 20,
            bodies: vec![body(1), body(2)],
        };
        let mut bytes = encode_packet(&a).unwrap();
        bytes.extend(encode_packet(&b).unwrap());
        let mut dec = StreamDecoder::new();
        dec.feed(&bytes);
        assert_eq!(dec.next_packet().unwrap(), Some(a));
        assert_eq!(dec.next_packet().unwrap(), Some(b));
        assert_eq!(dec.next_packet().unwrap(), None);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn oversized_and_inconsistent_sizes_are_malformed() {
        let mut bytes = vec![0u8; 8];
        bytes[..4].copy_from_slice(&(17u32 * 1024).to_le_bytes());
        assert!(matches!(decode_frame(&bytes[..4]), Err(NetError::Malformed(_))));
        assert!(matches!(decode_frame(&bytes), Err(NetError::Malformed(_))));

        let mut good = encode_packet(&RigidBodyPacket {
            frame_number: 1,
            timestamp_us: 2,
            bodies: vec![body(1)],
        })
        .unwrap();
        good[0] = 51;
        assert!(matches!(decode_frame(&good), Err(NetError::Malformed(_))));
    }

    #[test]
    fn unknown_type_is_skipped() {
        let mut bytes = vec![];
        bytes.extend_from_slice(&12u32.to_le_bytes());
        bytes.extend_from_slice(&42u32.to_le_bytes());
        bytes.extend_from_slice(&[0xAA; 4]);
        let p = RigidBodyPacket {
            frame_number: 5,
            timestamp_us: 6,
            bodies: vec![],
        };
        bytes.extend(encode_packet(&p).unwrap());
        let mut dec = StreamDecoder::new();
        dec.feed(&bytes);
        assert_eq!(dec.next_packet().unwrap(), Some(p));
        assert_eq!(dec.skipped(), 1);
    }

    #[test]
    fn shared_pose_round_trip() {
        let m = SharedPoseMessage {
            user_id: 2,
            frame_number: 77,
            head: Pose::new(yaw_rotation(0.3), Vector3::new(1.0, 1.7, -0.5)),
            left_hand: Pose::from_translation(0.8, 1.2, -0.3),
            right_hand: Pose::from_translation(1.2, 1.2, -0.3),
        };
        let bytes = encode_shared_pose(&m);
        assert_eq!(bytes.len(), SHARED_POSE_LEN);
        assert_eq!(decode_frame(&bytes).unwrap(), Decoded::Message(Message::SharedPose(m), SHARED_POSE_LEN));
        for msg in [Message::Register(4), Message::PollEnd(3)] {
            let b = encode_message(&msg).unwrap();
            assert_eq!(decode_frame(&b).unwrap(), Decoded::Message(msg, b.len()));
        }
    }

    fn arb_body() -> impl Strategy<Value = RigidBody> {
        (any::<u16>(), prop::array::uniform3(any::<u32>()), prop::array::uniform4(any::<u32>())).prop_map(
            |(id, p, q)| RigidBody {
                id,
                position: p.map(f32::from_bits),
                rotation: q.map(f32::from_bits),
            },
        )
    }

    proptest! {
        #[test]
        fn prop_round_trip_bit_exact(frame in any::<u32>(), ts in any::<u64>(),
                                     bodies in prop::collection::vec(arb_body(), 0..8)) {
            let p = RigidBodyPacket { frame_number: frame, timestamp_us: ts, bodies };
            let bytes = encode_packet(&p).unwrap();
            prop_assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Message(Message::RigidBodies(p), bytes.len()));
        }

        #[test]
        fn prop_any_chunking_decodes_the_same(
            packets in prop::collection::vec((any::<u32>(), prop::collection::vec(arb_body(), 0..4)), 1..6),
            cuts in prop::collection::vec(1usize..40, 1..50),
        ) {
            let packets: Vec<_> = packets.into_iter().map(|(f, bodies)| RigidBodyPacket {
                frame_number: f, timestamp_us: f as u64 * 10, bodies,
            }).collect();
            let stream: Vec<u8> = packets.iter().flat_map(|p| encode_packet(p).unwrap()).collect();
            let mut dec = StreamDecoder::new();
            let mut out = Vec::new();
            let (mut at, mut k) = (0, 0);
            while at < stream.len() {
                let n = cuts[k % cuts.len()].min(stream.len() - at);
                dec.feed(&stream[at..at + n]);
                at += n;
                k += 1;
                while let Some(p) = dec.next_packet().unwrap() {
                    out.push(p);
                }
            }
            prop_assert_eq!(out, packets);
            prop_assert_eq!(dec.buffered(), 0);
        }
    }
}
