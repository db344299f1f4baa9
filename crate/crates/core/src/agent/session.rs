use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::design::BrowserProfile;

/// Browser-side state an agent accumulates while navigating.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    /// Data type name (as in the browser's clean list) to opaque blobs.
    pub stored_data: BTreeMap<String, BTreeSet<String>>,
    pub current_url: String,
    pub consent_accepted: bool,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, data_type: &str, blob: impl Into<String>) {
        self.stored_data
            .entry(data_type.to_string())
            .or_default()
            .insert(blob.into());
    }

    pub fn is_empty_for(&self, data_type: &str) -> bool {
        self.stored_data.get(data_type).is_none_or(|s| s.is_empty())
    }

    /// Records the side effects of a page visit.
    pub(crate) fn visit(&mut self, url: &str, origin: &str) {
        self.current_url = url.to_string();
        self.store("history", url);
        self.store("cache", url);
        self.store("cookies", format!("{origin}#session"));
        self.store("localStorage", format!("{origin}#prefs"));
    }
}

/// Empties every data type in the browser's clean list; other data is untouched.
pub fn clean_browser(mut session: SessionState, browser: &BrowserProfile) -> SessionState {
    for data_type in &browser.clean_data_types {
        if let Some(blobs) = session.stored_data.get_mut(data_type) {
            blobs.clear();
        }
    }
    // Consent lives in a cookie.
    if session.is_empty_for("cookies") {
        session.consent_accepted = false;
    }
    session
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chrome_clears_listed_types() {
        let mut s = SessionState::new();
        s.store("cookies", "c");
        s.store("history", "h");
        s.store("passwords", "p");
        s.consent_accepted = true;
        let s = clean_browser(s, &BrowserProfile::chrome_like());
        for t in ["cookies", "history", "passwords"] {
            assert!(s.is_empty_for(t), "{t}");
        }
        assert!(!s.consent_accepted);
    }

    #[test]
    fn firefox_keeps_websql() {
        let mut s = SessionState::new();
        s.store("webSQL", "db");
        s.store("cookies", "c");
        let s = clean_browser(s, &BrowserProfile::firefox_like());
        assert!(!s.is_empty_for("webSQL"));
        assert!(s.is_empty_for("cookies"));
    }

    #[test]
    fn empty_session_unchanged() {
        let s = SessionState::new();
        assert_eq!(clean_browser(s.clone(), &BrowserProfile::chrome_like()), s);
    }

    #[test]
    fn idempotent() {
        let mut s = SessionState::new();
        s.visit("https://google.com/", "google.com");
        s.store("webSQL", "x");
        let b = BrowserProfile::firefox_like();
        let once = clean_browser(s, &b);
        assert_eq!(clean_browser(once.clone(), &b), once);
    }
}
