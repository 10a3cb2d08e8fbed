//! Client construction and bounded-concurrency benchmark runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Result;
use hetgcot_core::llm::{LlmClient, MockLlm, MockPolicy, RetryingClient};
use hetgcot_core::pipeline::{run_query, summarize, Artifacts, BenchmarkConfig, BenchmarkOutcome, Query, Transcript, Variant};
use hetgcot_core::prompt::QaTask;

use crate::config::{LlmConfig, Provider, ENV_API_KEY};
use crate::http::HttpTransport;

pub type SharedClient = Box<dyn LlmClient + Send + Sync>;

fn sleep_ms(ms: u64) {
    std::thread::sleep(std::time::Duration::from_millis(ms));
}

pub fn make_client(c: &LlmConfig) -> SharedClient {
    match c.provider {
        Provider::Mock => Box::new(MockLlm::new(MockPolicy::EchoTopK(c.mock_k))),
        Provider::Http => {
            let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
            let transport = HttpTransport::new(&c.settings, key);
            Box::new(RetryingClient::new(transport, c.settings.clone(), sleep_ms))
        }
    }
}

/// Runs every query with at most `max_in_flight` in progress at once.
/// The result does not depend on scheduling: transcripts are sorted by case.
pub fn run_queries<C: LlmClient + Sync + ?Sized>(
    art: &Artifacts<'_>,
    queries: &[Query],
    variant: Variant,
    cfg: &BenchmarkConfig,
    client: &C,
    max_in_flight: usize,
) -> Vec<Transcript> {
    let workers = max_in_flight.clamp(1, queries.len().max(1));
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(queries.len()));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = queries.get(i) else { break };
                let t = run_query(art, q, variant, &cfg.metapath, client);
                log::debug!("{} {}: hit {}", variant, q.case, t.score.hit);
                done.lock().expect("worker panicked").push(t);
            });
        }
    });
    let mut out = done.into_inner().expect("worker panicked");
    out.sort_by(|a, b| a.case.cmp(&b.case));
    out
}

pub fn benchmark<C: LlmClient + Sync + ?Sized>(
    art: &Artifacts<'_>,
    task: QaTask,
    queries: &[Query],
    variant: Variant,
    cfg: &BenchmarkConfig,
    client: &C,
    max_in_flight: usize,
) -> Result<BenchmarkOutcome> {
    let transcripts = run_queries(art, queries, variant, cfg, client, max_in_flight);
    Ok(summarize(task, variant, transcripts, cfg)?)
}
