//! Autoregressive next-token models: the contract used by the search, a
//! uniform model, a control-conditioned n-gram, the model bundle file, and a
//! line-oriented JSON bridge to external model processes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tension::TensionConfig;
use crate::tokens::{BucketEdges, ControlTokens, GrammarCursor, Token, TokenError, TokenizerConfig, Vocabulary};

/// Longest context handed to a model.
pub const MAX_CONTEXT: usize = 256;
pub const BUNDLE_FORMAT: &str = "tension-ngram-bundle";
pub const BUNDLE_VERSION: u32 = 1;
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("token id {id} outside a vocabulary of {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("bridge protocol: {0}")]
    Protocol(String),
    #[error("bridge process did not answer within {0:?}")]
    Timeout(Duration),
    #[error("bridge process: {0}")]
    Process(String),
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// A next-token distribution over a fixed vocabulary.
pub trait SequenceModel {
    fn vocab_size(&self) -> usize;

    /// Natural-log probabilities for every token id, given the tokens so far
    /// and the controls of the bar being written.
    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError>;
}

impl<M: SequenceModel + ?Sized> SequenceModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        (**self).next_token_logprobs(context, controls)
    }
}

impl<M: SequenceModel + ?Sized> SequenceModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        (**self).next_token_logprobs(context, controls)
    }
}

/// Restricts a model to continuations the tokenizer grammar accepts and
/// renormalizes. A bar's time signature must match the one among its
/// controls, with a bar limit EOS waits until that many bars exist, and
/// with a bar token limit a full bar must close.
/// Contexts that already break the grammar pass through.
pub struct GrammarConstrained<M> {
    inner: M,
    tokens: Vec<Token>,
    config: TokenizerConfig,
    bar_limit: Option<usize>,
    bar_token_limit: Option<usize>,
}

impl<M: SequenceModel> GrammarConstrained<M> {
    pub fn new(inner: M, vocab: &Vocabulary, config: TokenizerConfig) -> Self {
        Self { inner, tokens: vocab.tokens().to_vec(), config, bar_limit: None, bar_token_limit: None }
    }

    pub fn with_bar_limit(mut self, bars: usize) -> Self {
        self.bar_limit = Some(bars);
        self
    }

    /// Once the current bar holds `tokens` tokens (its Bar included), only
    /// Bar or EOS may start the next item.
    pub fn with_bar_token_limit(mut self, tokens: usize) -> Self {
        self.bar_token_limit = Some(tokens);
        self
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: SequenceModel> SequenceModel for GrammarConstrained<M> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        let mut lp = self.inner.next_token_logprobs(context, controls)?;
        let Some(prefix) = context.iter().map(|&id| self.tokens.get(id as usize).copied()).collect::<Option<Vec<Token>>>() else {
            return Ok(lp);
        };
        let cursor = GrammarCursor::after(&prefix, &self.config);
        let early = self.bar_limit.is_some_and(|n| prefix.iter().filter(|t| **t == Token::Bar).count() < n);
        let signature = if cursor.expects_time_signature() {
            controls.iter().filter_map(|&id| self.tokens.get(id as usize)).find(|t| matches!(t, Token::TimeSig(_))).copied()
        } else {
            None
        };
        let bar_len = prefix.len() - prefix.iter().rposition(|t| *t == Token::Bar).unwrap_or(prefix.len());
        let full = self.bar_token_limit.is_some_and(|n| bar_len >= n) && cursor.allows(&Token::Bar, &self.config);
        let allowed = |t: &Token| {
            cursor.allows(t, &self.config)
                && !(early && *t == Token::Eos)
                && signature.is_none_or(|s| s == *t)
                && !(full && !matches!(t, Token::Bar | Token::Eos))
        };
        let masked: Vec<f64> =
            lp.iter().zip(&self.tokens).map(|(&l, t)| if allowed(t) { l } else { f64::NEG_INFINITY }).collect();
        let z = logsumexp(&masked);
        if z.is_finite() {
            lp = masked.into_iter().map(|l| l - z).collect();
        }
        Ok(lp)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every token equally likely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformModel {
    pub size: usize,
}

impl SequenceModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn next_token_logprobs(&self, _context: &[u32], _controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![-(self.size as f64).ln(); self.size])
    }
}

/// Token ids of one training piece plus the control ids of each bar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub ids: Vec<u32>,
    pub bar_controls: Vec<Vec<u32>>,
}

/// Context as the n-gram sees it: the controls of the current bar follow its
/// Bar token.
pub fn conditioned_context(context: &[u32], controls: &[u32], bar_id: u32) -> Vec<u32> {
    let start = context.len().saturating_sub(MAX_CONTEXT);
    let context = &context[start..];
    match context.iter().rposition(|&t| t == bar_id) {
        Some(i) => {
            let mut out = Vec::with_capacity(context.len() + controls.len());
            out.extend_from_slice(&context[..=i]);
            out.extend_from_slice(controls);
            out.extend_from_slice(&context[i + 1..]);
            out
        }
        None => context.to_vec(),
    }
}

/// Training stream with control ids spliced in after each Bar token. The
/// flag marks tokens the model must predict.
fn augmented(seq: &TrainingSequence, bar_id: u32) -> Vec<(u32, bool)> {
    let mut out = Vec::with_capacity(seq.ids.len() + seq.bar_controls.len() * 6);
    let mut bar = 0usize;
    for &id in &seq.ids {
        out.push((id, true));
        if id == bar_id {
            if let Some(c) = seq.bar_controls.get(bar) {
                out.extend(c.iter().map(|&c| (c, false)));
            }
            bar += 1;
        }
    }
    out
}

/// Add-k smoothed n-gram with control-prefix conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    pub order: usize,
    pub k: f64,
    pub vocab_size: usize,
    /// Id of the Bar token, where controls are spliced into the context.
    pub bar_id: u32,
    #[serde(with = "count_table")]
    counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>>,
}

mod count_table {
    use super::*;
    use serde::{Deserializer, Serializer};

    type Table = BTreeMap<Vec<u32>, BTreeMap<u32, u64>>;

    #[derive(Serialize, Deserialize)]
    struct Row {
        context: Vec<u32>,
        next: Vec<(u32, u64)>,
    }

    pub fn serialize<S: Serializer>(t: &Table, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> =
            t.iter().map(|(c, n)| Row { context: c.clone(), next: n.iter().map(|(&a, &b)| (a, b)).collect() }).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Table, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| (r.context, r.next.into_iter().collect())).collect())
    }
}

impl NGramModel {
    pub fn train(corpus: &[TrainingSequence], order: usize, k: f64, vocab_size: usize, bar_id: u32) -> Result<Self, ModelError> {
        if corpus.is_empty() || corpus.iter().all(|s| s.ids.is_empty()) {
            return Err(ModelError::EmptyCorpus);
        }
        if order == 0 {
            return Err(ModelError::InvalidOrder);
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(ModelError::InvalidSmoothing(k));
        }
        let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>> = BTreeMap::new();
        for seq in corpus {
            for &id in seq.ids.iter().chain(seq.bar_controls.iter().flatten()) {
                if id as usize >= vocab_size {
                    return Err(ModelError::TokenOutOfRange { id, size: vocab_size });
                }
            }
            let stream = augmented(seq, bar_id);
            for (i, &(id, predicted)) in stream.iter().enumerate() {
                if !predicted || i == 0 {
                    continue;
                }
                let ctx: Vec<u32> = stream[i.saturating_sub(order - 1)..i].iter().map(|p| p.0).collect();
                *counts.entry(ctx).or_default().entry(id).or_default() += 1;
            }
        }
        Ok(Self { order, k, vocab_size, bar_id, counts })
    }

    fn key(&self, augmented_context: &[u32]) -> Vec<u32> {
        augmented_context[augmented_context.len().saturating_sub(self.order - 1)..].to_vec()
    }

    fn distribution_for(&self, key: &[u32]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        match self.counts.get(key) {
            None => vec![-v.ln(); self.vocab_size],
            Some(next) => {
                let total: u64 = next.values().sum();
                let denom = (total as f64 + self.k * v).ln();
                let mut out = vec![self.k.ln() - denom; self.vocab_size];
                for (&id, &c) in next {
                    out[id as usize] = (c as f64 + self.k).ln() - denom;
                }
                out
            }
        }
    }

    /// Number of distinct contexts seen in training.
    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    /// Per-token perplexity over the predicted tokens of held-out sequences.
    pub fn perplexity(&self, corpus: &[TrainingSequence]) -> f64 {
        let mut nll = 0.0;
        let mut n = 0usize;
        for seq in corpus {
            let stream = augmented(seq, self.bar_id);
            for (i, &(id, predicted)) in stream.iter().enumerate() {
                if !predicted || i == 0 {
                    continue;
                }
                let ctx: Vec<u32> = stream[..i].iter().map(|p| p.0).collect();
                nll -= self.distribution_for(&self.key(&ctx))[id as usize];
                n += 1;
            }
        }
        if n == 0 {
            return 1.0;
        }
        (nll / n as f64).exp()
    }
}

impl SequenceModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        let ctx = conditioned_context(context, controls, self.bar_id);
        Ok(self.distribution_for(&self.key(&ctx)))
    }
}

/// Everything generation needs from training, in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub tokenizer: TokenizerConfig,
    pub tension: TensionConfig<f64>,
    pub density_edges: BucketEdges,
    pub tension_edges: BucketEdges,
    /// Scale of the absolute-difference curve similarity.
    pub scale_ref: f64,
    pub vocabulary: serde_json::Value,
    pub model: NGramModel,
    /// Longest training bar in tokens, Bar token included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar_token_limit: Option<usize>,
}

impl ModelBundle {
    pub fn new(
        tokenizer: TokenizerConfig,
        tension: TensionConfig<f64>,
        density_edges: BucketEdges,
        tension_edges: BucketEdges,
        scale_ref: f64,
        vocabulary: &Vocabulary,
        model: NGramModel,
    ) -> Self {
        Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            tokenizer,
            tension,
            density_edges,
            tension_edges,
            scale_ref,
            vocabulary: vocabulary.to_json(),
            model,
            bar_token_limit: None,
        }
    }

    pub fn with_bar_token_limit(mut self, limit: usize) -> Self {
        self.bar_token_limit = Some(limit);
        self
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, ModelError> {
        Ok(Vocabulary::from_json(&self.vocabulary)?)
    }

    /// Canonical serialization: the same bundle always yields the same bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("bundle serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bundle: Self = serde_json::from_slice(bytes).map_err(|e| ModelError::Bundle(e.to_string()))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(ModelError::Bundle(format!("unsupported bundle {} v{}", bundle.format, bundle.version)));
        }
        let vocab = bundle.vocabulary()?;
        if vocab.len() != bundle.model.vocab_size {
            return Err(ModelError::Bundle("vocabulary size does not match the model".into()));
        }
        if vocab.id(&Token::Bar)? != bundle.model.bar_id {
            return Err(ModelError::Bundle("bar token id does not match the vocabulary".into()));
        }
        Ok(bundle)
    }
}

/// Control block of a bridge request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeControls {
    pub timesig: String,
    /// Instrument token ids.
    pub instruments: Vec<u32>,
    pub density: u8,
    pub tension: u8,
}

impl BridgeControls {
    pub fn new(controls: &ControlTokens, vocab: &Vocabulary) -> Result<Self, ModelError> {
        let instruments = controls.instruments.iter().map(|&i| vocab.id(&Token::Instrument(i))).collect::<Result<_, _>>()?;
        Ok(Self { timesig: controls.time_signature.to_string(), instruments, density: controls.density, tension: controls.tension })
    }

    /// Recovers the structured controls from control-token ids.
    pub fn from_ids(ids: &[u32], vocab: &Vocabulary) -> Result<Self, ModelError> {
        let mut out = Self { timesig: "4/4".into(), instruments: Vec::new(), density: 0, tension: 0 };
        for &id in ids {
            match vocab.token(id)? {
                Token::TimeSig(ts) => out.timesig = ts.to_string(),
                Token::Instrument(_) => out.instruments.push(id),
                Token::Density(d) => out.density = d,
                Token::Tension(t) => out.tension = t,
                other => return Err(ModelError::Protocol(format!("{other} is not a control token"))),
            }
        }
        Ok(out)
    }

    pub fn ids(&self, vocab: &Vocabulary) -> Result<Vec<u32>, ModelError> {
        let ts = self.timesig.parse().map_err(|e| ModelError::Protocol(format!("timesig: {e}")))?;
        let mut out = vec![vocab.id(&Token::TimeSig(ts))?];
        out.extend(&self.instruments);
        out.push(vocab.id(&Token::Density(self.density))?);
        out.push(vocab.id(&Token::Tension(self.tension))?);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeRequest {
    pub v: u32,
    pub id: u64,
    pub context: Vec<u32>,
    pub controls: BridgeControls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeResponse {
    pub v: u32,
    pub id: u64,
    pub topk: Vec<(u32, f64)>,
    /// Log-mass of all tokens not listed; `null` for none.
    pub rest_logprob: Option<f64>,
}

const MASS_TOLERANCE: f64 = 1e-6;

impl BridgeResponse {
    /// Builds a response listing the `k` most likely tokens of a full
    /// distribution, ties in id order.
    pub fn from_logprobs(id: u64, logprobs: &[f64], k: usize) -> Self {
        let mut order: Vec<usize> = (0..logprobs.len()).collect();
        order.sort_by(|&a, &b| logprobs[b].total_cmp(&logprobs[a]).then(a.cmp(&b)));
        let top: Vec<(u32, f64)> = order.iter().take(k).map(|&i| (i as u32, logprobs[i])).collect();
        let rest: Vec<f64> = order.iter().skip(k).map(|&i| logprobs[i]).collect();
        let rest_logprob = if rest.is_empty() { None } else { Some(logsumexp(&rest)) };
        Self { v: PROTOCOL_VERSION, id, topk: top, rest_logprob }
    }

    /// Expands to a full log-distribution, spreading the remainder evenly over
    /// unlisted tokens.
    pub fn to_logprobs(&self, vocab_size: usize, expected_id: u64) -> Result<Vec<f64>, ModelError> {
        if self.v != PROTOCOL_VERSION {
            return Err(ModelError::Protocol(format!("version {} (expected {PROTOCOL_VERSION})", self.v)));
        }
        if self.id != expected_id {
            return Err(ModelError::Protocol(format!("response id {} for request {expected_id}", self.id)));
        }
        let mut out = vec![f64::NAN; vocab_size];
        let mut mass = 0.0;
        for &(tok, lp) in &self.topk {
            let slot = out
                .get_mut(tok as usize)
                .ok_or_else(|| ModelError::Protocol(format!("token id {tok} outside a vocabulary of {vocab_size}")))?;
            if !slot.is_nan() {
                return Err(ModelError::Protocol(format!("token id {tok} listed twice")));
            }
            if lp.is_nan() || lp > MASS_TOLERANCE {
                return Err(ModelError::Protocol(format!("invalid log-probability {lp}")));
            }
            *slot = lp;
            mass += lp.exp();
        }
        let unlisted = vocab_size - self.topk.len();
        let rest = match self.rest_logprob {
            Some(lp) if lp.is_nan() || lp > MASS_TOLERANCE => {
                return Err(ModelError::Protocol(format!("invalid remainder log-probability {lp}")))
            }
            Some(lp) => lp.exp(),
            None => 0.0,
        };
        if rest > 0.0 && unlisted == 0 {
            return Err(ModelError::Protocol("remainder mass with no unlisted tokens".into()));
        }
        mass += rest;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::Protocol(format!("probabilities sum to {mass}")));
        }
        let each = if unlisted > 0 && rest > 0.0 { rest.ln() - (unlisted as f64).ln() } else { f64::NEG_INFINITY };
        for slot in out.iter_mut().filter(|s| s.is_nan()) {
            *slot = each;
        }
        Ok(out)
    }
}

struct BridgeIo {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A model served by an external process over the JSON-line protocol.
/// Queries to one process are serialized.
pub struct BridgeModel {
    io: Mutex<BridgeIo>,
    vocab: Vocabulary,
    timeout: Duration,
}

pub const DEFAULT_BRIDGE_TIMEOUT: Duration = Duration::from_secs(30);

impl BridgeModel {
    /// Starts `program` with `args`; requests go to its stdin, responses come
    /// from its stdout.
    pub fn spawn(program: &str, args: &[String], vocab: Vocabulary, timeout: Duration) -> Result<Self, ModelError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Process(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { io: Mutex::new(BridgeIo { child, stdin, lines: rx, next_id: 0 }), vocab, timeout })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl Drop for BridgeModel {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

impl SequenceModel for BridgeModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_token_logprobs(&self, context: &[u32], controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        let mut io = self.io.lock().map_err(|_| ModelError::Process("bridge lock poisoned".into()))?;
        let id = io.next_id;
        io.next_id += 1;
        let request = BridgeRequest {
            v: PROTOCOL_VERSION,
            id,
            context: context[context.len().saturating_sub(MAX_CONTEXT)..].to_vec(),
            controls: BridgeControls::from_ids(controls, &self.vocab)?,
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| ModelError::Process(format!("write failed: {e}")))?;
        let reply = match io.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(ModelError::Process(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(ModelError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = io.child.try_wait().ok().flatten();
                return Err(ModelError::Process(match status {
                    Some(s) => format!("exited with {s}"),
                    None => "closed its output".into(),
                }));
            }
        };
        let response: BridgeResponse =
            serde_json::from_str(&reply).map_err(|e| ModelError::Protocol(format!("malformed response: {e}")))?;
        response.to_logprobs(self.vocab.len(), id)
    }
}

/// Answers one request line from a local model; the reference behaviour for
/// bridge servers.
pub fn serve_request(model: &dyn SequenceModel, vocab: &Vocabulary, line: &str, k: usize) -> Result<String, ModelError> {
    let req: BridgeRequest = serde_json::from_str(line).map_err(|e| ModelError::Protocol(format!("malformed request: {e}")))?;
    if req.v != PROTOCOL_VERSION {
        return Err(ModelError::Protocol(format!("version {}", req.v)));
    }
    let controls = req.controls.ids(vocab)?;
    let lps = model.next_token_logprobs(&req.context, &controls)?;
    Ok(serde_json::to_string(&BridgeResponse::from_logprobs(req.id, &lps, k)).expect("response serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ids: &[u32]) -> TrainingSequence {
        TrainingSequence { ids: ids.to_vec(), bar_controls: Vec::new() }
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap()
    }

    #[test]
    fn alternation_is_learned() {
        let ids: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
        let m = NGramModel::train(&[seq(&ids)], 2, 0.01, 5, 4).unwrap();
        assert_eq!(argmax(&m.next_token_logprobs(&[0], &[]).unwrap()), 1);
        assert_eq!(argmax(&m.next_token_logprobs(&[0, 1], &[]).unwrap()), 0);
    }

    #[test]
    fn unseen_context_is_uniform() {
        let m = NGramModel::train(&[seq(&[0, 1, 0, 1])], 2, 0.01, 5, 4).unwrap();
        let lp = m.next_token_logprobs(&[3], &[]).unwrap();
        assert!(lp.iter().all(|&x| (x - lp[0]).abs() < 1e-15));
        assert!((lp[0] - (0.2f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn distributions_normalize() {
        let ids: Vec<u32> = (0..200).map(|i| ((i * 7) % 11) as u32).collect();
        for order in 1..=4 {
            let m = NGramModel::train(&[seq(&ids)], order, 0.05, 12, 11).unwrap();
            for ctx in [&[][..], &[3], &[7, 3], &[1, 2, 3]] {
                let lp = m.next_token_logprobs(ctx, &[]).unwrap();
                assert!(logsumexp(&lp).abs() < 1e-9);
            }
        }
        let u = UniformModel { size: 9 };
        assert!(logsumexp(&u.next_token_logprobs(&[], &[]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hand_counted_probabilities() {
        // after 0: 1 follows twice, 2 once
        let m = NGramModel::train(&[seq(&[0, 1, 0, 1, 0, 2])], 2, 0.5, 3, 9).unwrap();
        let lp = m.next_token_logprobs(&[0], &[]).unwrap();
        let expect = [0.5 / 4.5, 2.5 / 4.5, 1.5 / 4.5];
        for (a, b) in lp.iter().zip(expect) {
            assert!((a.exp() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_order_wins_on_periodic_data() {
        let period = [0u32, 1, 2, 1, 3, 1];
        let ids: Vec<u32> = (0..300).map(|i| period[i % period.len()]).collect();
        let held: Vec<u32> = (0..60).map(|i| period[(i + 2) % period.len()]).collect();
        let m1 = NGramModel::train(&[seq(&ids)], 1, 0.01, 4, 9).unwrap();
        let m3 = NGramModel::train(&[seq(&ids)], 3, 0.01, 4, 9).unwrap();
        assert!(m3.perplexity(&[seq(&held)]) <= m1.perplexity(&[seq(&held)]));
    }

    #[test]
    fn controls_change_predictions() {
        // bar id 9; controls 5 or 6 decide whether 1 or 2 follows
        let a = TrainingSequence { ids: vec![9, 1, 9, 1], bar_controls: vec![vec![5], vec![5]] };
        let b = TrainingSequence { ids: vec![9, 2, 9, 2], bar_controls: vec![vec![6], vec![6]] };
        let m = NGramModel::train(&[a, b], 2, 0.01, 10, 9).unwrap();
        assert_eq!(argmax(&m.next_token_logprobs(&[9], &[5]).unwrap()), 1);
        assert_eq!(argmax(&m.next_token_logprobs(&[9], &[6]).unwrap()), 2);
    }

    #[test]
    fn training_errors() {
        assert!(matches!(NGramModel::train(&[], 2, 0.01, 3, 0), Err(ModelError::EmptyCorpus)));
        assert!(matches!(NGramModel::train(&[seq(&[0])], 0, 0.01, 3, 0), Err(ModelError::InvalidOrder)));
        assert!(matches!(NGramModel::train(&[seq(&[0])], 1, 0.0, 3, 0), Err(ModelError::InvalidSmoothing(_))));
        assert!(matches!(NGramModel::train(&[seq(&[7])], 1, 0.1, 3, 0), Err(ModelError::TokenOutOfRange { .. })));
    }

    #[test]
    fn context_is_capped() {
        let long: Vec<u32> = (0..400).map(|i| i % 3).collect();
        assert_eq!(conditioned_context(&long, &[], 99).len(), MAX_CONTEXT);
        let with_bar = conditioned_context(&[1, 99, 2, 3], &[7, 8], 99);
        assert_eq!(with_bar, vec![1, 99, 7, 8, 2, 3]);
    }

    #[test]
    fn response_validation() {
        let ok = BridgeResponse { v: 1, id: 3, topk: vec![(0, 0.5f64.ln())], rest_logprob: Some(0.5f64.ln()) };
        let lp = ok.to_logprobs(3, 3).unwrap();
        assert!((lp[1].exp() - 0.25).abs() < 1e-12);
        assert!(ok.to_logprobs(3, 4).is_err());
        let over = BridgeResponse { v: 1, id: 0, topk: vec![(0, 0.6f64.ln())], rest_logprob: Some(0.5f64.ln()) };
        assert!(matches!(over.to_logprobs(3, 0), Err(ModelError::Protocol(_))));
        let dup = BridgeResponse { v: 1, id: 0, topk: vec![(0, 0.5f64.ln()), (0, 0.5f64.ln())], rest_logprob: None };
        assert!(dup.to_logprobs(3, 0).is_err());
        let range = BridgeResponse { v: 1, id: 0, topk: vec![(5, 0.0)], rest_logprob: None };
        assert!(range.to_logprobs(3, 0).is_err());
    }

    #[test]
    fn topk_response_reconstructs_uniform() {
        let u = vec![-(4f64).ln(); 4];
        let r = BridgeResponse::from_logprobs(0, &u, 2);
        let back = r.to_logprobs(4, 0).unwrap();
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
