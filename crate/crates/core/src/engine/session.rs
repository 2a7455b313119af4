//! Communication session lifecycle.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SessionState {
    Requested,
    Routing,
    Reserving,
    Preparing,
    Distributing,
    Swapping,
    Teleporting,
    Succeeded,
    Failed,
}

use SessionState::*;

/// Every transition the communication model allows.
pub const ALLOWED_TRANSITIONS: &[(SessionState, SessionState)] = &[
    // handshake: inter-domain goes to routing, intra-domain straight to
    // preparation, a rejection ends the session
    (Requested, Routing),
    (Requested, Preparing),
    (Requested, Failed),
    (Routing, Reserving),
    (Routing, Failed),
    (Reserving, Preparing),
    (Reserving, Failed),
    (Preparing, Distributing),
    (Distributing, Swapping),
    // t_d expiry: retry on the current path, reroute, or give up
    (Distributing, Preparing),
    (Distributing, Routing),
    (Distributing, Failed),
    (Swapping, Teleporting),
    (Swapping, Preparing),
    (Swapping, Routing),
    (Swapping, Failed),
    (Teleporting, Succeeded),
    (Teleporting, Preparing),
    (Teleporting, Routing),
    (Teleporting, Failed),
];

impl SessionState {
    pub fn name(self) -> &'static str {
        match self {
            Requested => "requested",
            Routing => "routing",
            Reserving => "reserving",
            Preparing => "preparing",
            Distributing => "distributing",
            Swapping => "swapping",
            Teleporting => "teleporting",
            Succeeded => "succeeded",
            Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Succeeded | Failed)
    }

    pub fn can_move_to(self, next: SessionState) -> bool {
        ALLOWED_TRANSITIONS.contains(&(self, next))
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_states_have_no_exits() {
        for &(from, _) in ALLOWED_TRANSITIONS {
            assert!(!from.is_terminal());
        }
        assert!(Requested.can_move_to(Preparing));
        assert!(!Preparing.can_move_to(Swapping));
        assert!(!Succeeded.can_move_to(Preparing));
    }
}
