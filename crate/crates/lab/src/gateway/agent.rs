use peerflip_core::{render_prompt, Agent, AgentError, Answer, DecisionContext};

use super::{Gateway, GatewayError, LlmTranscript, Transport, TranscriptCache};

/// An [`Agent`] that asks a language model, optionally through a cache keyed
/// by the trial's (scenario, repetition).
pub struct LlmAgent<T> {
    gateway: Gateway<T>,
    cache: Option<TranscriptCache>,
}

impl<T: Transport> LlmAgent<T> {
    pub fn new(gateway: Gateway<T>, cache: Option<TranscriptCache>) -> Self {
        LlmAgent { gateway, cache }
    }

    pub fn gateway(&self) -> &Gateway<T> {
        &self.gateway
    }

    pub fn cache(&self) -> Option<&TranscriptCache> {
        self.cache.as_ref()
    }

    /// The transcript for `ctx`, from the cache when present. Transcripts
    /// without a valid answer are cached too so completed trials are never
    /// re-sent.
    pub fn transcript(&self, ctx: &DecisionContext<'_>) -> Result<LlmTranscript, AgentError> {
        let cache = self.cache.as_ref().zip(ctx.trial.as_ref());
        if let Some((cache, key)) = cache {
            if let Some(t) = cache.get(key).map_err(|e| AgentError::Transport(e.to_string()))? {
                return Ok(t);
            }
        }
        let prompt = render_prompt(ctx.question, ctx.current, &ctx.peers, ctx.ordering);
        let transcript = match self.gateway.query_decision(&prompt, ctx.rng_seed) {
            Ok((_, t)) => t,
            Err(GatewayError::AllInvalid(t)) => *t,
            Err(e) => return Err(AgentError::Transport(e.to_string())),
        };
        if let Some((cache, key)) = cache {
            cache
                .put(key, &transcript)
                .map_err(|e| AgentError::Transport(e.to_string()))?;
        }
        Ok(transcript)
    }
}

impl<T: Transport> Agent for LlmAgent<T> {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError> {
        let t = self.transcript(ctx)?;
        t.parsed().ok_or(AgentError::NoValidAnswer { attempts: t.attempts })
    }

    fn name(&self) -> String {
        self.gateway.model().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::gateway;
    use super::*;
    use peerflip_core::{Ordering, PeerSummary, TrialKey};

    fn ctx(rep: u32) -> DecisionContext<'static> {
        DecisionContext {
            question: "Q?",
            spec: None,
            current: Answer::Yes,
            peers: PeerSummary::from_agreement(10, 30).unwrap(),
            ordering: Ordering::YesFirst,
            rng_seed: 5,
            trial: Some(TrialKey {
                scenario: "s".into(),
                repetition: rep,
            }),
        }
    }

    #[test]
    fn cache_hits_are_not_resent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::open(dir.path()).unwrap();
        let agent = LlmAgent::new(gateway(&[Ok("No")]), Some(cache));
        assert_eq!(agent.decide(&ctx(0)).unwrap(), Answer::No);
        let first = agent.transcript(&ctx(0)).unwrap();
        assert_eq!(agent.decide(&ctx(0)).unwrap(), Answer::No);
        assert_eq!(agent.gateway.transport.calls.lock().unwrap().len(), 1);
        assert_eq!(agent.transcript(&ctx(0)).unwrap(), first);
        agent.decide(&ctx(1)).unwrap();
        assert_eq!(agent.gateway.transport.calls.lock().unwrap().len(), 2);
        assert_eq!(agent.cache().unwrap().len().unwrap(), 2);
        assert!(first.prompt.contains("- 70% answered the opposite."));
    }

    #[test]
    fn invalid_trials_fail_without_aborting() {
        let agent = LlmAgent::new(gateway(&[Ok("unsure")]), None);
        let err = agent.decide(&ctx(0)).unwrap_err();
        assert!(err.is_trial_failure());
    }
}
