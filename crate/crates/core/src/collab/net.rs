//! TCP transport: newline-delimited JSON over tokio.

use std::collections::HashMap;
use std::io;
use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncRead, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio_util::codec::{FramedRead, FramedWrite, LinesCodec, LinesCodecError};
use tokio_util::sync::CancellationToken;

use crate::error::{Error, Result};

use super::node::{AgentCore, AnalyzerCore};
use super::router::{NodeId, Router};
use super::wire::{codes, WireMessage, MAX_LINE};

pub const BACKOFF_START: Duration = Duration::from_millis(100);
pub const BACKOFF_CAP: Duration = Duration::from_secs(30);

/// Doubling reconnect delay, capped at [`BACKOFF_CAP`].
#[derive(Debug, Clone)]
pub struct Backoff {
    next: Duration,
    cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new(BACKOFF_START, BACKOFF_CAP)
    }
}

impl Backoff {
    pub fn new(start: Duration, cap: Duration) -> Self {
        Self {
            next: start.min(cap),
            cap,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(BACKOFF_START.min(self.cap), self.cap);
    }
}

impl Iterator for Backoff {
    type Item = Duration;

    fn next(&mut self) -> Option<Duration> {
        let d = self.next;
        self.next = (self.next * 2).min(self.cap);
        Some(d)
    }
}

fn codec() -> LinesCodec {
    LinesCodec::new_with_max_length(MAX_LINE)
}

enum Frame {
    Line(String),
    Close,
}

enum Event {
    Connect {
        tx: mpsc::UnboundedSender<Frame>,
        reply: oneshot::Sender<NodeId>,
    },
    Line(NodeId, String),
    Reject(NodeId, &'static str, String),
    Gone(NodeId),
}

/// Serves until `shutdown` fires. All routing happens on one task, so each
/// inbound message is fanned out completely before the next one is looked at.
pub async fn broker_serve(listener: TcpListener, shutdown: CancellationToken) -> io::Result<()> {
    let (events, mut inbox) = mpsc::unbounded_channel::<Event>();
    let router_task = tokio::spawn({
        let shutdown = shutdown.clone();
        async move {
            let mut router = Router::new();
            let mut peers: HashMap<NodeId, mpsc::UnboundedSender<Frame>> = HashMap::new();
            loop {
                let ev = tokio::select! {
                    _ = shutdown.cancelled() => break,
                    ev = inbox.recv() => match ev { Some(ev) => ev, None => break },
                };
                let (from, routed) = match ev {
                    Event::Connect { tx, reply } => {
                        let id = router.connect();
                        peers.insert(id, tx);
                        let _ = reply.send(id);
                        continue;
                    }
                    Event::Gone(id) => {
                        router.disconnect(id);
                        peers.remove(&id);
                        continue;
                    }
                    Event::Reject(id, code, detail) => (id, router.malformed(id, code, detail)),
                    Event::Line(id, line) => {
                        if !peers.contains_key(&id) {
                            continue;
                        }
                        let routed = match WireMessage::decode(&line) {
                            Ok(msg) => router.route(id, msg),
                            Err(e) => router.malformed(id, codes::BAD_MESSAGE, e),
                        };
                        (id, routed)
                    }
                };
                for out in routed.out {
                    if let Some(tx) = peers.get(&out.to) {
                        let _ = tx.send(Frame::Line(out.msg.encode()));
                    }
                }
                if routed.close_sender {
                    router.disconnect(from);
                    if let Some(tx) = peers.remove(&from) {
                        let _ = tx.send(Frame::Close);
                    }
                }
            }
        }
    });

    loop {
        let (stream, peer) = tokio::select! {
            _ = shutdown.cancelled() => break,
            acc = listener.accept() => acc?,
        };
        log::info!("broker: connection from {peer}");
        tokio::spawn(serve_connection(
            stream,
            events.clone(),
            shutdown.child_token(),
        ));
    }
    drop(events);
    let _ = router_task.await;
    Ok(())
}

async fn serve_connection(
    stream: TcpStream,
    events: mpsc::UnboundedSender<Event>,
    stop: CancellationToken,
) {
    let (rd, wr) = stream.into_split();
    let (tx, mut frames) = mpsc::unbounded_channel();
    let (reply, id) = oneshot::channel();
    if events.send(Event::Connect { tx, reply }).is_err() {
        return;
    }
    let Ok(id) = id.await else { return };

    let writer_stop = stop.clone();
    let writer = tokio::spawn(async move {
        let mut sink = FramedWrite::new(wr, codec());
        while let Some(frame) = frames.recv().await {
            match frame {
                Frame::Line(l) => {
                    if sink.send(l).await.is_err() {
                        break;
                    }
                }
                Frame::Close => break,
            }
        }
        let _ = SinkExt::<String>::close(&mut sink).await;
        writer_stop.cancel();
    });

    let mut lines = FramedRead::new(rd, codec());
    loop {
        let item = tokio::select! {
            _ = stop.cancelled() => break,
            item = lines.next() => item,
        };
        match item {
            Some(Ok(line)) => {
                if events.send(Event::Line(id, line)).is_err() {
                    break;
                }
            }
            Some(Err(LinesCodecError::MaxLineLengthExceeded)) => {
                let _ = events.send(Event::Reject(
                    id,
                    codes::TOO_LONG,
                    format!("line exceeds {MAX_LINE} bytes"),
                ));
                break;
            }
            Some(Err(LinesCodecError::Io(e))) if e.kind() == io::ErrorKind::InvalidData => {
                let _ = events.send(Event::Reject(
                    id,
                    codes::BAD_MESSAGE,
                    "line is not utf-8".into(),
                ));
                break;
            }
            Some(Err(_)) | None => {
                let _ = events.send(Event::Gone(id));
                break;
            }
        }
    }
    // Let a pending error record reach the peer before the socket closes.
    let _ = tokio::time::timeout(Duration::from_secs(2), writer).await;
    let _ = events.send(Event::Gone(id));
}

/// Connects, retrying with backoff. `max_attempts = None` retries until
/// shutdown. Returns `Ok(None)` on shutdown.
pub async fn connect_with_backoff(
    addr: &str,
    max_attempts: Option<u32>,
    shutdown: &CancellationToken,
) -> Result<Option<TcpStream>> {
    let mut backoff = Backoff::default();
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match TcpStream::connect(addr).await {
            Ok(s) => return Ok(Some(s)),
            Err(e) => {
                if max_attempts.is_some_and(|m| attempts >= m) {
                    return Err(Error::Network(format!("broker {addr} unreachable: {e}")));
                }
                let delay = backoff.next().unwrap_or(BACKOFF_CAP);
                log::warn!("broker {addr} unreachable ({e}); retrying in {delay:?}");
                tokio::select! {
                    _ = shutdown.cancelled() => return Ok(None),
                    _ = tokio::time::sleep(delay) => {}
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub broker: String,
    /// Connection attempts before giving up; `None` retries forever.
    pub max_attempts: Option<u32>,
}

type Lines = FramedRead<tokio::net::tcp::OwnedReadHalf, LinesCodec>;
type Sink = FramedWrite<tokio::net::tcp::OwnedWriteHalf, LinesCodec>;

async fn open_session(
    cfg: &NodeConfig,
    hello: &WireMessage,
    shutdown: &CancellationToken,
) -> Result<Option<(Lines, Sink)>> {
    let Some(stream) = connect_with_backoff(&cfg.broker, cfg.max_attempts, shutdown).await? else {
        return Ok(None);
    };
    let _ = stream.set_nodelay(true);
    let (rd, wr) = stream.into_split();
    let mut sink = FramedWrite::new(wr, codec());
    sink.send(hello.encode())
        .await
        .map_err(|e| Error::Network(format!("sending hello to {}: {e}", cfg.broker)))?;
    log::info!("connected to broker {}", cfg.broker);
    Ok(Some((FramedRead::new(rd, codec()), sink)))
}

fn decode_or_warn(item: std::result::Result<String, LinesCodecError>) -> Option<WireMessage> {
    match item {
        Ok(line) => match WireMessage::decode(&line) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("dropping undecodable broker record: {e}");
                None
            }
        },
        Err(e) => {
            log::warn!("broker stream error: {e}");
            None
        }
    }
}

/// Runs a client agent: forwards `log_lines` as queries and applies blocks
/// from the broker, reconnecting as needed. Ends on shutdown or once the
/// log source is exhausted and `stop_at_eof` is set.
pub async fn agent_run(
    cfg: NodeConfig,
    mut core: AgentCore,
    mut log_lines: mpsc::Receiver<Vec<u8>>,
    shutdown: CancellationToken,
) -> Result<AgentCore> {
    let mut log_open = true;
    'session: loop {
        let Some((mut lines, mut sink)) = open_session(&cfg, &core.hello(), &shutdown).await?
        else {
            return Ok(core);
        };
        loop {
            tokio::select! {
                _ = shutdown.cancelled() => return Ok(core),
                line = log_lines.recv(), if log_open => match line {
                    Some(line) => {
                        if let Some(msg) = core.on_log_line(&line) {
                            if sink.send(msg.encode()).await.is_err() {
                                log::warn!("lost broker connection; reconnecting");
                                continue 'session;
                            }
                        }
                    }
                    None => log_open = false,
                },
                item = lines.next() => match item {
                    Some(item) => {
                        if let Some(msg) = decode_or_warn(item) {
                            core.on_message(&msg);
                        }
                    }
                    None => {
                        log::warn!("broker closed the connection; reconnecting");
                        continue 'session;
                    }
                },
            }
        }
    }
}

/// Runs an analyzer: answers every routed query with a verdict.
pub async fn analyzer_run(
    cfg: NodeConfig,
    core: AnalyzerCore,
    shutdown: CancellationToken,
) -> Result<()> {
    'session: loop {
        let Some((mut lines, mut sink)) = open_session(&cfg, &core.hello(), &shutdown).await?
        else {
            return Ok(());
        };
        loop {
            let item = tokio::select! {
                _ = shutdown.cancelled() => return Ok(()),
                item = lines.next() => item,
            };
            let Some(item) = item else {
                log::warn!("broker closed the connection; reconnecting");
                continue 'session;
            };
            if let Some(reply) = decode_or_warn(item).and_then(|m| core.on_message(&m)) {
                if sink.send(reply.encode()).await.is_err() {
                    continue 'session;
                }
            }
        }
    }
}

/// Where an agent reads its access log from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogSource {
    Stdin,
    File { path: PathBuf, follow: bool },
}

const TAIL_POLL: Duration = Duration::from_millis(200);

/// Streams complete lines from `source` into `tx`. A followed file is polled
/// for growth until shutdown.
pub async fn tail_log(
    source: LogSource,
    tx: mpsc::Sender<Vec<u8>>,
    shutdown: CancellationToken,
) -> Result<()> {
    match source {
        LogSource::Stdin => pump(tokio::io::stdin(), false, tx, shutdown).await,
        LogSource::File { path, follow } => {
            let f = tokio::fs::File::open(&path)
                .await
                .map_err(|e| Error::io(&path, e))?;
            pump(f, follow, tx, shutdown).await
        }
    }
}

async fn pump<R: AsyncRead + Unpin>(
    r: R,
    follow: bool,
    tx: mpsc::Sender<Vec<u8>>,
    shutdown: CancellationToken,
) -> Result<()> {
    let mut r = BufReader::new(r);
    let mut partial = Vec::new();
    loop {
        let n = tokio::select! {
            _ = shutdown.cancelled() => return Ok(()),
            n = r.read_until(b'\n', &mut partial) => n?,
        };
        if partial.ends_with(b"\n") {
            if tx.send(std::mem::take(&mut partial)).await.is_err() {
                return Ok(());
            }
        } else if n == 0 {
            if !follow {
                if !partial.is_empty() {
                    let _ = tx.send(std::mem::take(&mut partial)).await;
                }
                return Ok(());
            }
            tokio::select! {
                _ = shutdown.cancelled() => return Ok(()),
                _ = tokio::time::sleep(TAIL_POLL) => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_to_cap() {
        let delays: Vec<_> = Backoff::default().take(12).collect();
        assert_eq!(delays[0], Duration::from_millis(100));
        assert_eq!(delays[1], Duration::from_millis(200));
        assert!(delays.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*delays.last().unwrap(), BACKOFF_CAP);
        assert!(delays.iter().all(|d| *d <= BACKOFF_CAP));
    }
}
