use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{AdapterError, AdapterRequest, AdapterResponse, Backend, Handshake, Outcome};

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Connection {
    fn spawn(command: &[String]) -> std::io::Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty adapter command")
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Connection {
            child,
            stdin,
            lines,
        })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn is_handshake(line: &str) -> bool {
    let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else {
        return false;
    };
    v.get("id").is_none() && serde_json::from_value::<Handshake>(v).is_ok()
}

/// Long-lived child processes speaking the line protocol on stdin/stdout.
///
/// Each call goes to one connection of the pool, chosen round-robin; the
/// connection is started on first use and restarted after it fails.
pub struct ProcessBackend {
    command: Vec<String>,
    timeout: Duration,
    pool: Vec<Mutex<Option<Connection>>>,
    next: AtomicUsize,
}

impl ProcessBackend {
    pub fn new(command: Vec<String>, pool_size: usize, timeout: Duration) -> Self {
        ProcessBackend {
            command,
            timeout,
            pool: (0..pool_size.max(1)).map(|_| Mutex::new(None)).collect(),
            next: AtomicUsize::new(0),
        }
    }

    fn exchange(
        &self,
        conn: &mut Connection,
        requests: &[AdapterRequest],
    ) -> Result<Vec<Outcome>, Vec<Outcome>> {
        let mut pending: HashMap<&str, usize> = requests
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut out: Vec<Option<Outcome>> = vec![None; requests.len()];
        let fill = |out: Vec<Option<Outcome>>, err: AdapterError| -> Vec<Outcome> {
            out.into_iter()
                .map(|o| o.unwrap_or_else(|| Err(err.clone())))
                .collect()
        };

        let mut payload = String::new();
        for r in requests {
            payload.push_str(&serde_json::to_string(r).expect("requests serialize"));
            payload.push('\n');
        }
        if let Err(e) = conn
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| conn.stdin.flush())
        {
            return Err(fill(
                out,
                AdapterError::Transport(format!("write to adapter: {e}")),
            ));
        }

        while !pending.is_empty() {
            let deadline = Instant::now() + self.timeout;
            let line = match conn
                .lines
                .recv_timeout(deadline.saturating_duration_since(Instant::now()))
            {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => return Err(fill(out, AdapterError::Timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(fill(out, AdapterError::Transport("adapter exited".into())));
                }
            };
            if line.trim().is_empty() || is_handshake(&line) {
                continue;
            }
            match serde_json::from_str::<AdapterResponse>(&line) {
                Ok(resp) => match pending.remove(resp.id.as_str()) {
                    Some(i) => out[i] = Some(Ok(resp)),
                    None => log::warn!("adapter answered unknown id {:?}", resp.id),
                },
                Err(e) => {
                    return Err(fill(
                        out,
                        AdapterError::Protocol(format!("malformed response line: {e}")),
                    ));
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|o| o.expect("all ids answered"))
            .collect())
    }
}

impl Backend for ProcessBackend {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        if requests.is_empty() {
            return Vec::new();
        }
        let slot = &self.pool[self.next.fetch_add(1, Ordering::Relaxed) % self.pool.len()];
        let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            match Connection::spawn(&self.command) {
                Ok(c) => *guard = Some(c),
                Err(e) => {
                    let err = AdapterError::Transport(format!("spawn {:?}: {e}", self.command));
                    return requests.iter().map(|_| Err(err.clone())).collect();
                }
            }
        }
        let conn = guard.as_mut().expect("connection present");
        match self.exchange(conn, requests) {
            Ok(out) => out,
            Err(out) => {
                // The stream state is unknown after a failure; start afresh next time.
                if let Some(c) = guard.take() {
                    c.kill();
                }
                out
            }
        }
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        for slot in &self.pool {
            if let Some(c) = slot.lock().unwrap_or_else(|p| p.into_inner()).take() {
                c.kill();
            }
        }
    }
}
