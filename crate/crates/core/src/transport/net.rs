use std::io::{self, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::codec::{peek_source_id, read_frame, read_stream_frame, write_frame, write_stream_frame};
use super::{EncryptedBatch, TransportError};

/// A frame as it arrived, kept verbatim for auditing next to its decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedFrame {
    pub source_id: String,
    pub bytes: Vec<u8>,
    pub batch: EncryptedBatch,
}

/// Everything the warehouse got, plus one error per source whose delivery
/// failed. Frames are ordered by source id, then by arrival within the
/// source.
#[derive(Debug, Default)]
pub struct Delivery {
    pub frames: Vec<ReceivedFrame>,
    pub failures: Vec<TransportError>,
}

/// File-based transport: each source drops `<source_id>.ecp` into a shared
/// directory.
#[derive(Debug, Clone)]
pub struct FileDropBox {
    dir: PathBuf,
}

impl FileDropBox {
    pub const EXTENSION: &'static str = "ecp";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileDropBox { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, source_id: &str) -> PathBuf {
        self.dir.join(format!("{source_id}.{}", Self::EXTENSION))
    }

    /// Writes the frame atomically (temp file + rename), replacing any
    /// earlier drop from the same source.
    pub fn send(&self, batch: &EncryptedBatch) -> Result<PathBuf, TransportError> {
        std::fs::create_dir_all(&self.dir)?;
        let frame = write_frame(batch)?;
        let target = self.path_for(&batch.source_id);
        let tmp = target.with_extension("tmp");
        std::fs::write(&tmp, &frame)?;
        std::fs::rename(&tmp, &target)?;
        Ok(target)
    }

    /// Reads every `*.ecp` file in name order.
    pub fn receive_all(&self) -> Result<Delivery, TransportError> {
        let mut delivery = Delivery::default();
        if !self.dir.exists() {
            return Ok(delivery);
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == Self::EXTENSION))
            .collect();
        paths.sort();
        for path in paths {
            let bytes = std::fs::read(&path)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match read_frame(&bytes) {
                Ok(batch) => delivery.frames.push(ReceivedFrame { source_id: batch.source_id.clone(), bytes, batch }),
                Err(e) => delivery.failures.push(TransportError::IncompleteDelivery {
                    source_id: peek_source_id(&bytes).unwrap_or(stem),
                    reason: e.to_string(),
                }),
            }
        }
        Ok(delivery)
    }
}

/// Connects to the warehouse and streams the batches as length-prefixed
/// frames, in order, then closes the connection.
pub fn send_batches<A: ToSocketAddrs + std::fmt::Display>(addr: A, batches: &[EncryptedBatch]) -> Result<(), TransportError> {
    let mut stream = TcpStream::connect(&addr)
        .map_err(|source| TransportError::ConnectionRefused { addr: addr.to_string(), source })?;
    for batch in batches {
        let frame = write_frame(batch)?;
        write_stream_frame(&mut stream, &frame)?;
    }
    stream.flush()?;
    stream.shutdown(Shutdown::Write)?;
    Ok(())
}

/// Warehouse side of the stream transport. Each accepted connection is
/// served on its own thread; decoded frames go through one channel to a
/// single consumer.
#[derive(Debug)]
pub struct StreamReceiver {
    listener: TcpListener,
}

type ConnResult = (usize, usize, Result<ReceivedFrame, TransportError>);

impl StreamReceiver {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        Ok(StreamReceiver { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts up to `connections` sources, or until `timeout` passes, and
    /// collects everything they send.
    pub fn receive(&self, connections: usize, timeout: Duration) -> Result<Delivery, TransportError> {
        let deadline = Instant::now() + timeout;
        let (tx, rx) = mpsc::channel::<ConnResult>();
        let mut handles = Vec::new();
        self.listener.set_nonblocking(true)?;
        while handles.len() < connections && Instant::now() < deadline {
            match self.listener.accept() {
                Ok((stream, _peer)) => {
                    let conn = handles.len();
                    let tx = tx.clone();
                    handles.push(thread::spawn(move || serve_connection(conn, stream, deadline, tx)));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(e.into()),
            }
        }
        self.listener.set_nonblocking(false)?;
        drop(tx);

        let mut results: Vec<ConnResult> = rx.into_iter().collect();
        for h in handles {
            let _ = h.join();
        }
        results.sort_by_key(|(conn, idx, _)| (*conn, *idx));

        let mut delivery = Delivery::default();
        for (_, _, r) in results {
            match r {
                Ok(frame) => delivery.frames.push(frame),
                Err(e) => delivery.failures.push(e),
            }
        }
        // stable: keeps per-connection arrival order within each source
        delivery.frames.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        Ok(delivery)
    }
}

fn serve_connection(conn: usize, mut stream: TcpStream, deadline: Instant, tx: mpsc::Sender<ConnResult>) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "unknown peer".into());
    let _ = stream.set_nonblocking(false);
    let remaining = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(10));
    let _ = stream.set_read_timeout(Some(remaining));
    let mut last_source: Option<String> = None;
    for idx in 0.. {
        let result = match read_stream_frame(&mut stream) {
            Ok(None) => break,
            Ok(Some(bytes)) => match read_frame(&bytes) {
                Ok(batch) => {
                    last_source = Some(batch.source_id.clone());
                    Ok(ReceivedFrame { source_id: batch.source_id.clone(), bytes, batch })
                }
                Err(e) => Err(TransportError::IncompleteDelivery {
                    source_id: peek_source_id(&bytes).or(last_source.clone()).unwrap_or(peer.clone()),
                    reason: e.to_string(),
                }),
            },
            Err((err, partial)) => Err(TransportError::IncompleteDelivery {
                source_id: peek_source_id(&partial).or(last_source.clone()).unwrap_or(peer.clone()),
                reason: format!("connection ended mid-frame: {err}"),
            }),
        };
        let stop = result.is_err();
        if tx.send((conn, idx, result)).is_err() || stop {
            break;
        }
    }
}
