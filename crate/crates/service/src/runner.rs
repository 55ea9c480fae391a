//! Drives a chat-completions endpoint over a manifest, T trials per sample.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use medq_core::eval::{append_record, completed_samples, repair_results};
use medq_core::model::DegradedSample;
use medq_core::{render_prompt, Manifest, Trial, TrialRecord};
use serde_json::{json, Value};
use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinSet;

pub const API_KEY_ENV: &str = "MEDQ_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] medq_core::Error),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
    #[error("record writer stopped unexpectedly")]
    Writer,
}

/// Where and how to reach a model.
#[derive(Debug, Clone)]
pub struct Endpoint {
    /// Model name sent in the request and stored with every record.
    pub name: String,
    /// Either the full `/chat/completions` URL or a base it is appended to.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub credential_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// First retry delay; doubles on every further attempt.
    pub backoff: Duration,
}

impl Endpoint {
    pub fn new(name: &str, base_url: &str) -> Self {
        Self {
            name: name.to_string(),
            base_url: base_url.to_string(),
            credential_env: API_KEY_ENV.to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 1.0,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.credential_env).ok().filter(|k| !k.is_empty())
    }
}

enum AttemptError {
    Auth(u16),
    Retry(String),
}

/// One model endpoint plus a pooled HTTP client.
#[derive(Clone)]
pub struct Client {
    endpoint: Arc<Endpoint>,
    http: reqwest::Client,
    api_key: Option<String>,
}

impl Client {
    pub fn new(endpoint: Endpoint) -> Result<Self, RunError> {
        let http = reqwest::Client::builder().timeout(endpoint.timeout).build()?;
        Ok(Self {
            api_key: endpoint.api_key(),
            endpoint: Arc::new(endpoint),
            http,
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    async fn attempt(&self, body: &Value) -> Result<String, AttemptError> {
        let mut req = self.http.post(self.endpoint.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| AttemptError::Retry(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(AttemptError::Auth(status.as_u16()));
        }
        if !status.is_success() {
            return Err(AttemptError::Retry(format!("HTTP {status}")));
        }
        let v: Value = resp.json().await.map_err(|e| AttemptError::Retry(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| AttemptError::Retry("reply has no choices[0].message.content".into()))
    }

    /// Sends one request, retrying transient failures. Returns `None` once
    /// the retry budget is spent.
    async fn ask(&self, body: &Value) -> Result<Option<String>, RunError> {
        let mut delay = self.endpoint.backoff;
        for attempt in 0..=self.endpoint.max_retries {
            match self.attempt(body).await {
                Ok(text) => return Ok(Some(text)),
                Err(AttemptError::Auth(code)) => return Err(RunError::Auth(code)),
                Err(AttemptError::Retry(why)) => {
                    tracing::debug!(attempt, %why, "request failed");
                    if attempt < self.endpoint.max_retries {
                        tokio::time::sleep(delay).await;
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        Ok(None)
    }
}

pub fn request_body(model: &str, temperature: f64, prompt: &str, data_url: &str) -> Value {
    json!({
        "model": model,
        "temperature": temperature,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": data_url}},
            ],
        }],
    })
}

pub fn data_url(path: &Path, bytes: &[u8]) -> String {
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "jpg" || e == "jpeg" => "image/jpeg",
        _ => "image/png",
    };
    format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )
}

/// Runs `t` independent trials of one sample, one after another.
pub async fn run_trials(
    client: &Client,
    sample: &DegradedSample,
    image_root: &Path,
    t: usize,
) -> Result<TrialRecord, RunError> {
    let prompt = render_prompt(&sample.pair())?;
    let path = image_root.join(&sample.image_path);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|source| RunError::Io { path: path.clone(), source })?;
    let ep = client.endpoint();
    let body = request_body(&ep.name, ep.temperature, &prompt, &data_url(&path, &bytes));
    let k = sample.options.len();
    let mut trials = Vec::with_capacity(t);
    for _ in 0..t {
        let start = Instant::now();
        let reply = client.ask(&body).await?;
        let ms = start.elapsed().as_millis() as u64;
        trials.push(match reply {
            Some(text) => Trial::new(&text, k, ms),
            None => Trial::failed(ms),
        });
    }
    Ok(TrialRecord {
        sample_id: sample.sample_id.clone(),
        model: ep.name.clone(),
        temperature: ep.temperature,
        trials,
    })
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub trials: usize,
    /// Maximum samples (and so requests) in flight.
    pub parallel: usize,
    /// Directory that manifest image paths are relative to.
    pub image_root: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    /// Samples already present in the results file.
    pub skipped: usize,
    pub completed: usize,
    /// Trials that exhausted their retries.
    pub failed_trials: usize,
}

/// Evaluates every non-discarded sample not yet in `out`, appending one
/// record per sample as it finishes.
pub async fn run_benchmark(
    manifest: &Manifest,
    client: &Client,
    config: &RunConfig,
    out: &Path,
) -> Result<RunSummary, RunError> {
    if config.trials == 0 || config.parallel == 0 {
        return Err(medq_core::Error::param("trials/parallel", "must be >= 1").into());
    }
    repair_results(out)?;
    let done: HashSet<String> = completed_samples(out, &client.endpoint().name)?;
    let eligible: Vec<&DegradedSample> = manifest
        .samples
        .iter()
        .filter(|s| !s.review.is_discarded())
        .collect();
    let pending: Vec<DegradedSample> = eligible
        .iter()
        .filter(|s| !done.contains(&s.sample_id))
        .map(|s| (*s).clone())
        .collect();
    let mut summary = RunSummary {
        skipped: eligible.len() - pending.len(),
        ..RunSummary::default()
    };
    tracing::info!(pending = pending.len(), skipped = summary.skipped, "starting run");

    let (tx, mut rx) = mpsc::channel::<TrialRecord>(64);
    let out_path = out.to_path_buf();
    let writer = tokio::spawn(async move {
        let mut written = 0usize;
        let mut failed = 0usize;
        while let Some(rec) = rx.recv().await {
            failed += rec.trials.iter().filter(|t| t.response.is_empty() && t.label.is_none()).count();
            append_record(&out_path, &rec)?;
            written += 1;
        }
        Ok::<_, medq_core::Error>((written, failed))
    });

    let permits = Arc::new(Semaphore::new(config.parallel));
    let root = Arc::new(config.image_root.clone());
    let mut tasks = JoinSet::new();
    for sample in pending {
        let permit = permits.clone().acquire_owned().await.expect("semaphore open");
        let (client, tx, root, t) = (client.clone(), tx.clone(), root.clone(), config.trials);
        tasks.spawn(async move {
            let _permit = permit;
            let rec = run_trials(&client, &sample, &root, t).await?;
            tx.send(rec).await.map_err(|_| RunError::Writer)
        });
        // Surface an auth failure without waiting for the whole queue.
        while let Some(res) = tasks.try_join_next() {
            if let Err(e) = res.expect("task panicked") {
                tasks.abort_all();
                return Err(e);
            }
        }
    }
    drop(tx);
    while let Some(res) = tasks.join_next().await {
        if let Err(e) = res.expect("task panicked") {
            tasks.abort_all();
            return Err(e);
        }
    }
    let (written, failed) = writer.await.expect("writer panicked")?;
    summary.completed = written;
    summary.failed_trials = failed;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joining() {
        assert_eq!(Endpoint::new("m", "http://h/v1").url(), "http://h/v1/chat/completions");
        assert_eq!(Endpoint::new("m", "http://h/v1/").url(), "http://h/v1/chat/completions");
        assert_eq!(
            Endpoint::new("m", "http://h/v1/chat/completions").url(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn payload_shape() {
        let url = data_url(Path::new("x.jpg"), b"abc");
        assert_eq!(url, "data:image/jpeg;base64,YWJj");
        let body = request_body("m", 1.0, "hi", &url);
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["messages"][0]["content"][0]["text"], "hi");
        assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], url);
    }
}
