use super::{
    BackendError, Backends, CallKey, ChatRequest, ChatResponse, RequestKind, Role, ScriptEntry, Transcription,
};
use crate::costmodel::TokenLedger;
use crate::media::AudioSegment;

/// Per-run view of the backends. Every successful call is recorded in the
/// run's [`TokenLedger`] and as a [`ScriptEntry`], so a finished run can be
/// replayed from its own exchanges.
pub struct Session<'a> {
    backends: &'a Backends,
    ledger: TokenLedger,
    exchanges: Vec<ScriptEntry>,
    calls: u32,
}

impl<'a> Session<'a> {
    pub fn new(backends: &'a Backends) -> Self {
        Session { backends, ledger: TokenLedger::new(), exchanges: Vec::new(), calls: 0 }
    }

    pub fn chat(&mut self, role: Role, key: CallKey, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let backend = match role {
            Role::Controller => &self.backends.controller,
            Role::Understanding => &self.backends.understanding,
            Role::Transcription => return Err(BackendError::Config("transcription role has no chat backend".into())),
        };
        self.calls += 1;
        let resp = backend.chat(key, req)?;
        self.ledger.record(key.step, role, key.kind, resp.usage, req.images.len() as u32);
        let mut entry = ScriptEntry::reply(key.step, key.kind, resp.reply.clone(), resp.usage);
        entry.request_digest = Some(req.content_digest());
        self.exchanges.push(entry);
        Ok(resp)
    }

    pub fn transcribe(&mut self, step: u32, seg: &AudioSegment) -> Result<Transcription, BackendError> {
        let key = CallKey::new(step, RequestKind::Transcription);
        self.calls += 1;
        let out = self.backends.transcriber.transcribe(key, seg)?;
        self.ledger.record(step, Role::Transcription, key.kind, out.usage, 0);
        self.exchanges.push(ScriptEntry::transcription(step, out.segments.clone(), out.usage));
        Ok(out)
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    /// Recorded exchanges not yet taken by [`Self::drain_exchanges`].
    pub fn drain_exchanges(&mut self) -> Vec<ScriptEntry> {
        std::mem::take(&mut self.exchanges)
    }

    /// Number of backend calls attempted, including failed ones.
    pub fn calls(&self) -> u32 {
        self.calls
    }

    pub fn into_ledger(self) -> TokenLedger {
        self.ledger
    }
}
