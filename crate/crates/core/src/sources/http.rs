//! Blocking HTTP transport, request spacing and retry policy.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Get { url: String, query: Vec<(String, String)> },
    PostJson { url: String, body: serde_json::Value },
}

/// Minimal HTTP surface the source clients need. Non-2xx statuses come back
/// as responses; only transport failures are errors.
pub trait Transport: Send + Sync {
    fn send(&self, request: &Request, headers: &[(String, String)], timeout: Duration) -> Result<HttpResponse>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("dominance/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(transport_error)?;
        Ok(ReqwestTransport { client })
    }
}

fn transport_error(e: reqwest::Error) -> Error {
    Error::Transport {
        timeout: e.is_timeout(),
        message: e.to_string(),
    }
}

impl Transport for ReqwestTransport {
    fn send(&self, request: &Request, headers: &[(String, String)], timeout: Duration) -> Result<HttpResponse> {
        let mut builder = match request {
            Request::Get { url, query } => self.client.get(url).query(query),
            Request::PostJson { url, body } => self.client.post(url).json(body),
        };
        for (k, v) in headers {
            builder = builder.header(k, v);
        }
        let resp = builder.timeout(timeout).send().map_err(transport_error)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(transport_error)?;
        Ok(HttpResponse { status, body })
    }
}

/// Enforces a minimum spacing between consecutive request starts.
#[derive(Debug)]
pub struct RateLimiter {
    min_delay: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_delay: Duration) -> Self {
        RateLimiter {
            min_delay,
            next_slot: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.min_delay);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// A transport whose requests all pass through one rate limiter.
pub struct LimitedTransport {
    inner: Arc<dyn Transport>,
    limiter: RateLimiter,
}

impl LimitedTransport {
    pub fn new(inner: Arc<dyn Transport>, min_delay: Duration) -> Self {
        LimitedTransport {
            inner,
            limiter: RateLimiter::new(min_delay),
        }
    }
}

impl Transport for LimitedTransport {
    fn send(&self, request: &Request, headers: &[(String, String)], timeout: Duration) -> Result<HttpResponse> {
        self.limiter.acquire();
        self.inner.send(request, headers, timeout)
    }
}

/// Send with up to `retries` extra attempts on connection errors, 429 and
/// 5xx. Timeouts are returned at once so callers can pick a cheaper query.
pub fn send_with_retries(
    transport: &dyn Transport,
    request: &Request,
    headers: &[(String, String)],
    timeout: Duration,
    retries: u32,
) -> Result<HttpResponse> {
    let mut attempt = 0;
    loop {
        let retryable = match transport.send(request, headers, timeout) {
            Ok(r) if r.status == 429 || r.status >= 500 => Error::Transport {
                timeout: false,
                message: format!("status {}", r.status),
            },
            Ok(r) => return Ok(r),
            Err(e @ Error::Transport { timeout: true, .. }) => return Err(e),
            Err(e @ Error::Transport { .. }) => e,
            Err(e) => return Err(e),
        };
        if attempt >= retries {
            return Err(retryable);
        }
        attempt += 1;
        log::debug!("retrying after {retryable} (attempt {attempt} of {retries})");
    }
}

pub type Handler = dyn Fn(&Request) -> Result<HttpResponse> + Send + Sync;

/// In-process transport answering from a closure and recording every call.
pub struct ScriptedTransport {
    handler: Box<Handler>,
    log: Mutex<Vec<(Instant, Request)>>,
    in_flight: Mutex<(usize, usize)>,
    latency: Duration,
}

impl ScriptedTransport {
    pub fn new(handler: impl Fn(&Request) -> Result<HttpResponse> + Send + Sync + 'static) -> Self {
        ScriptedTransport {
            handler: Box::new(handler),
            log: Mutex::new(Vec::new()),
            in_flight: Mutex::new((0, 0)),
            latency: Duration::ZERO,
        }
    }

    /// Hold every request open for `latency` before answering.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn requests(&self) -> Vec<(Instant, Request)> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().expect("log poisoned").len()
    }

    /// Highest number of requests observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.in_flight.lock().expect("counter poisoned").1
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &Request, _headers: &[(String, String)], _timeout: Duration) -> Result<HttpResponse> {
        self.log
            .lock()
            .expect("log poisoned")
            .push((Instant::now(), request.clone()));
        {
            let mut c = self.in_flight.lock().expect("counter poisoned");
            c.0 += 1;
            c.1 = c.1.max(c.0);
        }
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        let out = (self.handler)(request);
        self.in_flight.lock().expect("counter poisoned").0 -= 1;
        out
    }
}
