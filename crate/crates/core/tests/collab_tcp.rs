mod common;

use std::net::IpAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_util::sync::CancellationToken;

use sqlion::collab::{
    agent_run, analyzer_run, broker_serve, connect_with_backoff, AgentCore, AnalyzerCore,
    Blocklist, NodeConfig, Role, WireMessage, MAX_LINE,
};
use sqlion::dataset::combined_line;
use sqlion::labeler::BlockThreshold;

async fn start_broker() -> (String, CancellationToken) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let stop = CancellationToken::new();
    tokio::spawn(broker_serve(listener, stop.clone()));
    (addr, stop)
}

struct Peer {
    lines: tokio::io::Lines<BufReader<tokio::net::tcp::OwnedReadHalf>>,
    wr: tokio::net::tcp::OwnedWriteHalf,
}

impl Peer {
    async fn connect(addr: &str) -> Self {
        let (rd, wr) = TcpStream::connect(addr).await.unwrap().into_split();
        Peer {
            lines: BufReader::new(rd).lines(),
            wr,
        }
    }

    async fn hello(addr: &str, role: Role, name: &str) -> Self {
        let mut p = Self::connect(addr).await;
        p.send(&WireMessage::Hello {
            role,
            name: name.into(),
        })
        .await;
        p
    }

    async fn send_raw(&mut self, line: &str) {
        self.wr.write_all(line.as_bytes()).await.unwrap();
        self.wr.write_all(b"\n").await.unwrap();
    }

    async fn send(&mut self, m: &WireMessage) {
        self.send_raw(&m.encode()).await;
    }

    async fn recv_line(&mut self) -> Option<String> {
        tokio::time::timeout(Duration::from_secs(5), self.lines.next_line())
            .await
            .expect("timed out waiting for the broker")
            .ok()
            .flatten()
    }

    async fn recv(&mut self) -> WireMessage {
        WireMessage::decode(&self.recv_line().await.expect("connection closed")).unwrap()
    }

    async fn expect_error_then_close(&mut self, code: &str) {
        match self.recv().await {
            WireMessage::Error { code: c, .. } => assert_eq!(c, code),
            other => panic!("expected error, got {other:?}"),
        }
        assert_eq!(self.recv_line().await, None);
    }
}

fn query(id: &str) -> WireMessage {
    WireMessage::Query {
        id: id.into(),
        client: "c".into(),
        ip: "10.0.0.9".into(),
        timestamp: 1_700_000_000,
        query: "id=1' or '1'='1'--".into(),
    }
}

/// Lets the broker register hellos sent from other connections.
async fn settle() {
    tokio::time::sleep(Duration::from_millis(100)).await;
}

#[tokio::test]
async fn query_reaches_analyzer_verbatim_and_in_order() {
    let (addr, stop) = start_broker().await;
    let mut an = Peer::hello(&addr, Role::Analyzer, "an").await;
    let mut client = Peer::hello(&addr, Role::Client, "c").await;
    settle().await;
    let lines: Vec<String> = (0..20).map(|i| query(&format!("q{i}")).encode()).collect();
    for l in &lines {
        client.send_raw(l).await;
    }
    for l in &lines {
        assert_eq!(&an.recv_line().await.unwrap(), l);
    }
    stop.cancel();
}

#[tokio::test]
async fn attack_verdict_fans_out_verdict_then_block() {
    let (addr, stop) = start_broker().await;
    let mut an = Peer::hello(&addr, Role::Analyzer, "an").await;
    let mut clients = Vec::new();
    for i in 0..3 {
        clients.push(Peer::hello(&addr, Role::Client, &format!("c{i}")).await);
    }
    settle().await;
    clients[0].send(&query("q1")).await;
    assert_eq!(an.recv().await, query("q1"));
    an.send_raw(r#"{"type":"verdict","id":"q1","level":4,"verdict":"attack","model":"nb","confidence":0.99,"ip":"10.0.0.9"}"#)
        .await;
    for c in &mut clients {
        assert!(matches!(c.recv().await, WireMessage::Verdict { ref id, .. } if id == "q1"));
        match c.recv().await {
            WireMessage::Block { ip, reason, .. } => {
                assert_eq!(ip, "10.0.0.9");
                assert_eq!(reason, "q1");
            }
            other => panic!("expected block, got {other:?}"),
        }
    }
    stop.cancel();
}

#[tokio::test]
async fn first_message_must_be_hello() {
    let (addr, stop) = start_broker().await;
    let mut p = Peer::connect(&addr).await;
    p.send(&query("q")).await;
    p.expect_error_then_close("bad-message").await;
    stop.cancel();
}

#[tokio::test]
async fn malformed_line_is_rejected() {
    let (addr, stop) = start_broker().await;
    let mut p = Peer::hello(&addr, Role::Client, "c").await;
    p.send_raw("{not json").await;
    p.expect_error_then_close("bad-message").await;
    stop.cancel();
}

#[tokio::test]
async fn long_line_is_rejected() {
    let (addr, stop) = start_broker().await;
    let mut p = Peer::hello(&addr, Role::Client, "c").await;
    p.send_raw(&"x".repeat(MAX_LINE + 1)).await;
    p.expect_error_then_close("too-long").await;
    stop.cancel();
}

#[tokio::test]
async fn unreachable_broker_gives_up_after_max_attempts() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let err = connect_with_backoff(&addr, Some(2), &CancellationToken::new())
        .await
        .unwrap_err();
    assert!(err.to_string().contains(&addr));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn agents_and_analyzer_over_tcp() {
    let (addr, stop) = start_broker().await;
    let f = common::fixture();
    let cfg = NodeConfig {
        broker: addr.clone(),
        max_attempts: Some(20),
    };
    let analyzer = AnalyzerCore::new(
        "an",
        Arc::new(f.nb.clone()),
        Arc::new(f.dict.clone()),
        BlockThreshold::DEFAULT,
    );
    tokio::spawn(analyzer_run(cfg.clone(), analyzer, stop.clone()));

    let mut feeds = Vec::new();
    let mut lists = Vec::new();
    for i in 0..3 {
        let bl = Arc::new(Blocklist::new());
        let core = AgentCore::new(format!("agent-{i}"), BlockThreshold::DEFAULT, bl.clone());
        let (tx, rx) = mpsc::channel(16);
        tokio::spawn(agent_run(cfg.clone(), core, rx, stop.clone()));
        feeds.push(tx);
        lists.push(bl);
    }
    settle().await;
    let line = combined_line(
        "10.0.0.9",
        1_700_000_000,
        "GET /?id=1' or '1'='1'-- HTTP/1.1",
        200,
        "sqlmap",
    );
    feeds[0]
        .send(format!("{line}\n").into_bytes())
        .await
        .unwrap();

    let ip: IpAddr = "10.0.0.9".parse().unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while !lists.iter().all(|b| b.is_blocked(&ip)) {
        assert!(Instant::now() < deadline, "block did not propagate");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    stop.cancel();
}
