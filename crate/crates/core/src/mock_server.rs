//! Tiny OpenAI-compatible HTTP server for tests and latency experiments.
//!
//! Serves `POST .../chat/completions` and `GET .../models` over plain HTTP/1.1,
//! one thread per connection, `Connection: close`. An injected delay is
//! split evenly between request handling and response transfer.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::chat::ChatMessages;
use crate::llm_client::{completion_body, ChatBackend, ChatRequest, RequestContext};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Status(u16, String),
}

pub type Responder = Arc<dyn Fn(&ChatRequest) -> MockReply + Send + Sync>;

pub struct MockServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    delay_us: Arc<AtomicU64>,
    hits: Arc<AtomicUsize>,
    received: Arc<Mutex<Vec<ChatRequest>>>,
    handle: Option<JoinHandle<()>>,
}

const MAX_HEADER: usize = 64 * 1024;
const MAX_BODY: usize = 16 * 1024 * 1024;

impl MockServer {
    pub fn start(responder: Responder, delay: Duration) -> io::Result<Self> {
        Self::bind("127.0.0.1:0", responder, delay)
    }

    pub fn bind(addr: &str, responder: Responder, delay: Duration) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let delay_us = Arc::new(AtomicU64::new(delay.as_micros() as u64));
        let hits = Arc::new(AtomicUsize::new(0));
        let received = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let shutdown = Arc::clone(&shutdown);
            let delay_us = Arc::clone(&delay_us);
            let hits = Arc::clone(&hits);
            let received = Arc::clone(&received);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let responder = Arc::clone(&responder);
                    let delay = Duration::from_micros(delay_us.load(Ordering::SeqCst));
                    let hits = Arc::clone(&hits);
                    let received = Arc::clone(&received);
                    thread::spawn(move || {
                        let _ = serve(stream, &*responder, delay, &hits, &received);
                    });
                }
            })
        };
        Ok(Self { addr, shutdown, delay_us, hits, received, handle: Some(handle) })
    }

    /// Serves completions from a backend. No oracle hint is available over
    /// the wire, so oracle backends will answer with an error status.
    pub fn from_backend<B: ChatBackend + 'static>(backend: B, delay: Duration) -> io::Result<Self> {
        let backend = Arc::new(backend);
        let responder: Responder = Arc::new(move |req: &ChatRequest| {
            let msgs = ChatMessages(req.messages.clone());
            match backend.complete(&msgs, &RequestContext::default()) {
                Ok(c) => MockReply::Text(c.text),
                Err(e) => MockReply::Status(500, e.to_string()),
            }
        });
        Self::start(responder, delay)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn set_delay(&self, delay: Duration) {
        self.delay_us.store(delay.as_micros() as u64, Ordering::SeqCst);
    }

    /// Completion requests served so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn received(&self) -> Vec<ChatRequest> {
        self.received.lock().expect("request log").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn read_request(stream: &mut TcpStream) -> io::Result<Option<(String, String, Vec<u8>)>> {
    let mut buf = Vec::with_capacity(4096);
    let mut chunk = [0u8; 4096];
    loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(None);
        }
        buf.extend_from_slice(&chunk[..n]);
        let mut headers = [httparse::EMPTY_HEADER; 64];
        let mut req = httparse::Request::new(&mut headers);
        match req.parse(&buf) {
            Ok(httparse::Status::Complete(head)) => {
                let method = req.method.unwrap_or("").to_string();
                let path = req.path.unwrap_or("").to_string();
                let len = req
                    .headers
                    .iter()
                    .find(|h| h.name.eq_ignore_ascii_case("content-length"))
                    .and_then(|h| std::str::from_utf8(h.value).ok()?.trim().parse::<usize>().ok())
                    .unwrap_or(0);
                if len > MAX_BODY {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, "body too large"));
                }
                let mut body = buf[head..].to_vec();
                while body.len() < len {
                    let n = stream.read(&mut chunk)?;
                    if n == 0 {
                        break;
                    }
                    body.extend_from_slice(&chunk[..n]);
                }
                body.truncate(len);
                return Ok(Some((method, path, body)));
            }
            Ok(httparse::Status::Partial) if buf.len() < MAX_HEADER => continue,
            Ok(httparse::Status::Partial) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "headers too large"))
            }
            Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string())),
        }
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve(
    mut stream: TcpStream,
    responder: &(dyn Fn(&ChatRequest) -> MockReply + Send + Sync),
    delay: Duration,
    hits: &AtomicUsize,
    received: &Mutex<Vec<ChatRequest>>,
) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let Some((method, path, body)) = read_request(&mut stream)? else {
        return Ok(());
    };
    let (status, payload) = if method == "POST" && path.ends_with("/chat/completions") {
        match serde_json::from_slice::<ChatRequest>(&body) {
            Ok(req) => {
                hits.fetch_add(1, Ordering::SeqCst);
                received.lock().expect("request log").push(req.clone());
                thread::sleep(delay / 2);
                match responder(&req) {
                    MockReply::Text(t) => (200, completion_body(&req.model, &t).to_string()),
                    MockReply::Status(s, msg) => (s, serde_json::json!({"error": {"message": msg}}).to_string()),
                }
            }
            Err(e) => (400, serde_json::json!({"error": {"message": e.to_string()}}).to_string()),
        }
    } else if method == "GET" && path.ends_with("/models") {
        (200, serde_json::json!({"object": "list", "data": [{"id": "mock", "object": "model"}]}).to_string())
    } else {
        (404, serde_json::json!({"error": {"message": "not found"}}).to_string())
    };
    let head = format!(
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        reason(status),
        payload.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.flush()?;
    if status == 200 && path.ends_with("/chat/completions") {
        thread::sleep(delay / 2);
    }
    stream.write_all(payload.as_bytes())?;
    stream.flush()
}
