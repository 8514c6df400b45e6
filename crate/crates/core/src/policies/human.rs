use std::sync::Mutex;

use super::{DecisionKind, Policy, PolicyContext, PolicyDecision, PolicyError};

/// Seat filled by a person through the session API.
///
/// The engine asks; if no matching answer has been posted yet the bridge
/// returns [`PolicyError::AwaitingHuman`] and the game pauses at that step.
#[derive(Default)]
pub struct HumanBridge {
    slot: Mutex<Option<PolicyDecision>>,
}

impl HumanBridge {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the participant's next answer, replacing any unconsumed one.
    pub fn submit(&self, decision: PolicyDecision) {
        *self.slot.lock().expect("human slot") = Some(decision);
    }

    pub fn has_pending(&self) -> bool {
        self.slot.lock().expect("human slot").is_some()
    }

    pub fn clear(&self) {
        self.slot.lock().expect("human slot").take();
    }
}

impl Policy for HumanBridge {
    fn name(&self) -> String {
        "human".into()
    }

    fn interactive(&self) -> bool {
        true
    }

    fn decide(&self, kind: DecisionKind, _ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError> {
        let mut slot = self.slot.lock().expect("human slot");
        match slot.as_ref().map(PolicyDecision::kind) {
            Some(k) if k == kind => Ok(slot.take().expect("checked")),
            // The API exposes a single turn step; posting one implies speaking.
            Some(DecisionKind::TurnReply) if kind == DecisionKind::ContinueOrPass => {
                Ok(PolicyDecision::ContinueOrPass(true))
            }
            _ => Err(PolicyError::AwaitingHuman),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::testing::context;

    #[test]
    fn waits_until_an_answer_of_the_right_kind_arrives() {
        let h = HumanBridge::new();
        let ctx = context("alice", &[1, 1, 1]);
        assert_eq!(h.decide(DecisionKind::TurnReply, &ctx), Err(PolicyError::AwaitingHuman));
        h.submit(PolicyDecision::pass());
        assert_eq!(h.decide(DecisionKind::Allocation, &ctx), Err(PolicyError::AwaitingHuman));
        assert_eq!(h.decide(DecisionKind::ContinueOrPass, &ctx), Ok(PolicyDecision::ContinueOrPass(true)));
        assert_eq!(h.decide(DecisionKind::TurnReply, &ctx), Ok(PolicyDecision::pass()));
        assert!(!h.has_pending());
    }
}
