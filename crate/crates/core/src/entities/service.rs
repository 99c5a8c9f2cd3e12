use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{assemble_records, EntityMention, MentionRecord};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub attempts: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff: Duration,
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        ServiceConfig {
            endpoint: endpoint.into(),
            timeout,
            batch_size: 64,
            max_in_flight: 4,
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Serialize)]
struct RequestSentence<'a> {
    id: u32,
    text: &'a str,
}

#[derive(Serialize)]
struct Request<'a> {
    sentences: Vec<RequestSentence<'a>>,
}

#[derive(Deserialize)]
struct Response {
    mentions: Vec<MentionRecord>,
}

/// Client for an external recognizer speaking
/// `POST {"sentences":[{"id","text"}]}` → `{"mentions":[record…]}`.
pub struct ServiceClient {
    config: ServiceConfig,
    agent: ureq::Agent,
}

impl ServiceClient {
    pub fn new(config: ServiceConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        ServiceClient { config, agent }
    }

    fn post_once(&self, batch: &[Sentence]) -> std::result::Result<Vec<MentionRecord>, String> {
        let body = Request {
            sentences: batch
                .iter()
                .map(|s| RequestSentence {
                    id: s.sentence_id,
                    text: &s.text,
                })
                .collect(),
        };
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let parsed: Response = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(parsed.mentions)
    }

    fn post_with_retries(&self, batch: &[Sentence]) -> Result<Vec<MentionRecord>> {
        let attempts = self.config.attempts.max(1);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(batch) {
                Ok(records) => return Ok(records),
                Err(e) => {
                    log::warn!(
                        "recognizer service attempt {attempt}/{attempts} failed: {e}"
                    );
                    last = e;
                }
            }
            if attempt < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::Service {
            attempts,
            message: last,
        })
    }

    /// Sends the sentences in batches, at most `max_in_flight` at a time.
    /// Sentence ids must be dense `0..len`.
    pub fn recognize_all(&self, sentences: &[Sentence]) -> Result<Vec<Vec<EntityMention>>> {
        super::check_dense(sentences)?;
        let batches: Vec<&[Sentence]> = sentences.chunks(self.config.batch_size.max(1)).collect();
        let results: Vec<Mutex<Option<Result<Vec<MentionRecord>>>>> =
            batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.clamp(1, batches.len().max(1));

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let r = self.post_with_retries(batch);
                    let failed = r.is_err();
                    *results[i].lock().expect("result slot") = Some(r);
                    if failed {
                        // Let remaining workers drain quickly.
                        next.store(batches.len(), Ordering::Relaxed);
                    }
                });
            }
        });

        let mut records = Vec::new();
        for (i, slot) in results.into_iter().enumerate() {
            let batch = batches[i];
            let Some(r) = slot.into_inner().expect("result slot") else {
                continue;
            };
            for record in r? {
                let in_batch = batch.iter().any(|s| s.sentence_id == record.sentence_id);
                if !in_batch {
                    return Err(Error::Validation(format!(
                        "service response for batch {i} references sentence_id {} which was not in the request",
                        record.sentence_id
                    )));
                }
                records.push((format!("service batch {i}"), record));
            }
        }
        // Skipped slots only occur after a failure, which was returned above.
        let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
        assemble_records(records, &texts)
    }

    /// Single-sentence convenience wrapper.
    pub fn recognize(&self, sentence: &Sentence) -> Result<Vec<EntityMention>> {
        let mut one = sentence.clone();
        one.sentence_id = 0;
        Ok(self.recognize_all(std::slice::from_ref(&one))?.remove(0))
    }
}
