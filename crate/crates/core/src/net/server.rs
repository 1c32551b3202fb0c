//! Blocking TCP transports: a mocap stream server, the pose-sharing hub
//! server, and matching clients. One thread per connection.

use super::hub::Hub;
use super::packet::{encode_message, Message, RigidBodyPacket, SharedPoseMessage, StreamDecoder};
use super::NetError;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

pub const DEFAULT_MOCAP_PORT: u16 = 22222;
pub const DEFAULT_HUB_PORT: u16 = 22333;

const POLL_INTERVAL: Duration = Duration::from_millis(10);

fn bind(addr: impl ToSocketAddrs) -> Result<TcpListener, NetError> {
    let listener = TcpListener::bind(addr).map_err(|e| NetError::Bind(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| NetError::Bind(e.to_string()))?;
    Ok(listener)
}

fn io(e: std::io::Error) -> NetError {
    NetError::Io(e.to_string())
}

/// Accept loop shared by both servers; returns when `stop` is set.
fn accept_loop<F>(listener: TcpListener, stop: Arc<AtomicBool>, handle: F) -> JoinHandle<()>
where
    F: Fn(TcpStream, Arc<AtomicBool>) + Send + Sync + 'static,
{
    let handle = Arc::new(handle);
    std::thread::spawn(move || {
        let mut workers = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("connection from {peer}");
                    let _ = stream.set_nonblocking(false);
                    let (h, s) = (Arc::clone(&handle), Arc::clone(&stop));
                    workers.push(std::thread::spawn(move || h(stream, s)));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL_INTERVAL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    std::thread::sleep(POLL_INTERVAL);
                }
            }
        }
        for w in workers {
            let _ = w.join();
        }
    })
}

/// Streams a fixed frame sequence to every client that connects, paced at
/// `rate` frames per second (0 sends as fast as possible).
pub struct MocapServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl MocapServer {
    /// `frames` are pre-encoded wire frames, sent in order.
    pub fn start(addr: impl ToSocketAddrs, frames: Arc<Vec<Vec<u8>>>, rate: f64) -> Result<Self, NetError> {
        let listener = bind(addr)?;
        let addr = listener.local_addr().map_err(io)?;
        let stop = Arc::new(AtomicBool::new(false));
        let thread = accept_loop(listener, Arc::clone(&stop), move |mut stream, stop| {
            let _ = stream.set_nodelay(true);
            let start = Instant::now();
            for (k, frame) in frames.iter().enumerate() {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                if rate > 0.0 {
                    let due = start + Duration::from_secs_f64(k as f64 / rate);
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        std::thread::sleep(wait);
                    }
                }
                if stream.write_all(frame).is_err() {
                    return;
                }
            }
        });
        Ok(Self {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MocapServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Reads every frame a mocap server sends until it closes the connection.
pub fn receive_packets(addr: impl ToSocketAddrs, limit: Option<usize>) -> Result<Vec<RigidBodyPacket>, NetError> {
    let mut stream = TcpStream::connect(addr).map_err(io)?;
    let mut dec = StreamDecoder::new();
    let mut out = Vec::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = stream.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        dec.feed(&buf[..n]);
        while let Some(p) = dec.next_packet()? {
            out.push(p);
            if limit.is_some_and(|l| out.len() >= l) {
                return Ok(out);
            }
        }
    }
    if dec.buffered() > 0 {
        return Err(NetError::Malformed(format!("connection closed mid-frame ({} bytes)", dec.buffered())));
    }
    Ok(out)
}

/// TCP front of a [`Hub`].
///
/// A client sends `Register(user)` once, then `SharedPose` messages. After
/// every publish the server answers with the latest message of each other
/// user followed by `PollEnd(count)`.
pub struct HubServer {
    addr: SocketAddr,
    hub: Arc<Hub>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl HubServer {
    pub fn start(addr: impl ToSocketAddrs, hub: Arc<Hub>) -> Result<Self, NetError> {
        let listener = bind(addr)?;
        let addr = listener.local_addr().map_err(io)?;
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::clone(&hub);
        let thread = accept_loop(listener, Arc::clone(&stop), move |stream, stop| {
            if let Err(e) = serve_hub_client(stream, &shared, &stop) {
                log::warn!("hub client dropped: {e}");
            }
        });
        Ok(Self {
            addr,
            hub,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for HubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

fn serve_hub_client(mut stream: TcpStream, hub: &Hub, stop: &AtomicBool) -> Result<(), NetError> {
    stream.set_read_timeout(Some(Duration::from_millis(100))).map_err(io)?;
    let _ = stream.set_nodelay(true);
    let mut dec = StreamDecoder::new();
    let mut user = None;
    let mut buf = [0u8; 4096];
    while !stop.load(Ordering::SeqCst) {
        let n = match stream.read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(io(e)),
        };
        dec.feed(&buf[..n]);
        while let Some(msg) = dec.next_message()? {
            match msg {
                Message::Register(id) => {
                    hub.register(id);
                    user = Some(id);
                }
                Message::SharedPose(m) => {
                    let me = user.ok_or(NetError::UnregisteredUser(m.user_id))?;
                    hub.publish(m)?;
                    let others = hub.poll(me)?;
                    let mut out = Vec::new();
                    for o in &others {
                        out.extend(encode_message(&Message::SharedPose(*o))?);
                    }
                    out.extend(encode_message(&Message::PollEnd(others.len() as u16))?);
                    stream.write_all(&out).map_err(io)?;
                }
                other => log::warn!("hub ignoring unexpected message {other:?}"),
            }
        }
    }
    Ok(())
}

/// Client side of [`HubServer`].
pub struct HubClient {
    stream: TcpStream,
    dec: StreamDecoder,
    user_id: u16,
}

impl HubClient {
    pub fn connect(addr: impl ToSocketAddrs, user_id: u16) -> Result<Self, NetError> {
        let mut stream = TcpStream::connect(addr).map_err(io)?;
        let _ = stream.set_nodelay(true);
        stream
            .write_all(&encode_message(&Message::Register(user_id))?)
            .map_err(io)?;
        Ok(Self {
            stream,
            dec: StreamDecoder::new(),
            user_id,
        })
    }

    pub fn user_id(&self) -> u16 {
        self.user_id
    }

    /// Publishes and returns the other users' latest messages.
    pub fn exchange(&mut self, msg: &SharedPoseMessage) -> Result<Vec<SharedPoseMessage>, NetError> {
        self.stream
            .write_all(&encode_message(&Message::SharedPose(*msg))?)
            .map_err(io)?;
        let mut got = Vec::new();
        let mut buf = [0u8; 4096];
        loop {
            while let Some(m) = self.dec.next_message()? {
                match m {
                    Message::SharedPose(s) => got.push(s),
                    Message::PollEnd(n) => {
                        if n as usize != got.len() {
                            return Err(NetError::Malformed(format!(
                                "poll announced {n} messages, received {}",
                                got.len()
                            )));
                        }
                        return Ok(got);
                    }
                    other => log::warn!("client ignoring unexpected message {other:?}"),
                }
            }
            let n = self.stream.read(&mut buf).map_err(io)?;
            if n == 0 {
                return Err(NetError::Io("hub closed the connection".into()));
            }
            self.dec.feed(&buf[..n]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::net::packet::{encode_packet, RigidBody};

    #[test]
    fn mocap_server_streams_identical_packets() {
        let packets: Vec<RigidBodyPacket> = (0..50)
            .map(|f| RigidBodyPacket {
                frame_number: f,
                timestamp_us: f as u64 * 10_000,
                bodies: if f < 5 {
                    vec![RigidBody::placeholder(1)]
                } else {
                    vec![RigidBody {
                        id: 1,
                        position: [f as f32, 0.0, 1700.0],
                        rotation: [1.0, 0.0, 0.0, 0.0],
                    }]
                },
            })
            .collect();
        let frames = Arc::new(packets.iter().map(|p| encode_packet(p).unwrap()).collect::<Vec<_>>());
        let server = MocapServer::start("127.0.0.1:0", frames, 0.0).unwrap();
        let got = receive_packets(server.local_addr(), None).unwrap();
        assert_eq!(got, packets);
        server.shutdown();
    }

    #[test]
    fn hub_cross_delivery() {
        let server = HubServer::start("127.0.0.1:0", Arc::new(Hub::new())).unwrap();
        let mut a = HubClient::connect(server.local_addr(), 1).unwrap();
        let mut b = HubClient::connect(server.local_addr(), 2).unwrap();
        let m = |u: u16, f: u32| SharedPoseMessage {
            user_id: u,
            frame_number: f,
            head: Pose::from_translation(u as f64, 1.7, 0.0),
            left_hand: Pose::identity(),
            right_hand: Pose::identity(),
        };
        // b may not be registered yet when a publishes; wait for it
        assert!(a.exchange(&m(1, 1)).unwrap().len() <= 1);
        assert_eq!(b.exchange(&m(2, 1)).unwrap(), vec![m(1, 1)]);
        assert_eq!(a.exchange(&m(1, 2)).unwrap(), vec![m(2, 1)]);
        server.shutdown();
    }

    #[test]
    fn port_conflict_is_a_bind_error() {
        let first = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = first.local_addr().unwrap();
        assert!(matches!(
            HubServer::start(addr, Arc::new(Hub::new())),
            Err(NetError::Bind(_))
        ));
    }
}
