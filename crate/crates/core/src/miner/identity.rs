//! Author alias resolution.
//!
//! Offline, two commits belong to the same developer iff they share an
//! (ASCII-lowercased) email. A remote resolver can merge several emails into
//! one hosting-platform account. Two accounts owned by one person stay
//! distinct.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::remote::HostingApi;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeveloperIdentity {
    pub account_id: String,
    pub emails: BTreeSet<String>,
    pub display_name: String,
}

/// What is known about one commit author.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorRef {
    pub name: String,
    pub email: String,
    pub repo_id: String,
    pub commit: String,
}

pub trait AccountLookup: Send + Sync {
    /// Account owning the commit, `Ok(None)` when the platform has none.
    fn account(&self, author: &AuthorRef) -> Result<Option<String>>;
}

pub struct RemoteLookup(pub HostingApi);

impl AccountLookup for RemoteLookup {
    fn account(&self, author: &AuthorRef) -> Result<Option<String>> {
        self.0.commit_account(&author.repo_id, &author.commit)
    }
}

pub fn normalize_email(email: &str) -> String {
    email.trim().to_ascii_lowercase()
}

/// Shared, internally synchronized email → account cache.
pub struct IdentityResolver {
    remote: Option<Box<dyn AccountLookup>>,
    by_email: Mutex<HashMap<String, String>>,
    identities: Mutex<BTreeMap<String, DeveloperIdentity>>,
    flags: Mutex<BTreeSet<String>>,
}

impl IdentityResolver {
    pub fn offline() -> Self {
        IdentityResolver {
            remote: None,
            by_email: Mutex::new(HashMap::new()),
            identities: Mutex::new(BTreeMap::new()),
            flags: Mutex::new(BTreeSet::new()),
        }
    }

    pub fn remote(lookup: impl AccountLookup + 'static) -> Self {
        IdentityResolver {
            remote: Some(Box::new(lookup)),
            ..Self::offline()
        }
    }

    pub fn is_remote(&self) -> bool {
        self.remote.is_some()
    }

    /// Account id for `author`, consulting the remote lookup once per email.
    pub fn resolve(&self, author: &AuthorRef) -> String {
        let email = normalize_email(&author.email);
        let cached = self.by_email.lock().unwrap().get(&email).cloned();
        let account = match cached {
            Some(a) => a,
            None => {
                let account = match &self.remote {
                    None => email.clone(),
                    Some(lookup) => match lookup.account(author) {
                        Ok(Some(login)) => login,
                        Ok(None) => {
                            self.flag(format!("{email}: no linked account, using email"));
                            email.clone()
                        }
                        Err(e) => {
                            self.flag(format!("{email}: lookup failed ({e}), using email"));
                            email.clone()
                        }
                    },
                };
                self.by_email
                    .lock()
                    .unwrap()
                    .entry(email.clone())
                    .or_insert(account)
                    .clone()
            }
        };

        let mut ids = self.identities.lock().unwrap();
        let id = ids.entry(account.clone()).or_insert_with(|| DeveloperIdentity {
            account_id: account.clone(),
            emails: BTreeSet::new(),
            display_name: author.name.clone(),
        });
        id.emails.insert(email);
        // Smallest name wins so the result does not depend on scan order.
        if author.name < id.display_name {
            id.display_name = author.name.clone();
        }
        account
    }

    fn flag(&self, message: String) {
        self.flags.lock().unwrap().insert(message);
    }

    pub fn flags(&self) -> Vec<String> {
        self.flags.lock().unwrap().iter().cloned().collect()
    }

    pub fn identities(&self) -> Vec<DeveloperIdentity> {
        self.identities.lock().unwrap().values().cloned().collect()
    }
}

/// Resolve every author; the result is total over the input emails.
pub fn resolve_identities(
    authors: &[AuthorRef],
    resolver: &IdentityResolver,
) -> BTreeMap<String, DeveloperIdentity> {
    let accounts: Vec<(String, String)> = authors
        .iter()
        .map(|a| (normalize_email(&a.email), resolver.resolve(a)))
        .collect();
    let identities: BTreeMap<String, DeveloperIdentity> = resolver
        .identities()
        .into_iter()
        .map(|i| (i.account_id.clone(), i))
        .collect();
    accounts
        .into_iter()
        .map(|(email, account)| (email, identities[&account].clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn author(name: &str, email: &str, commit: &str) -> AuthorRef {
        AuthorRef {
            name: name.into(),
            email: email.into(),
            repo_id: "o/r".into(),
            commit: commit.into(),
        }
    }

    struct Stub;
    impl AccountLookup for Stub {
        fn account(&self, a: &AuthorRef) -> Result<Option<String>> {
            match a.email.as_str() {
                "a@x" | "b@x" => Ok(Some("U".into())),
                "down@x" => Err(Error::Http("503".into())),
                _ => Ok(None),
            }
        }
    }

    #[test]
    fn same_email_is_one_identity() {
        let r = IdentityResolver::offline();
        let map = resolve_identities(&[author("A", "a@x", "1"), author("A", "A@X", "2")], &r);
        assert_eq!(map.len(), 1);
        assert_eq!(r.identities().len(), 1);
    }

    #[test]
    fn offline_keeps_distinct_emails_apart() {
        let r = IdentityResolver::offline();
        let map = resolve_identities(&[author("A", "a@x", "1"), author("A", "b@x", "2")], &r);
        assert_eq!(map.len(), 2);
        assert_ne!(map["a@x"].account_id, map["b@x"].account_id);
    }

    #[test]
    fn remote_merges_emails_of_one_account() {
        let r = IdentityResolver::remote(Stub);
        let map = resolve_identities(&[author("Al", "a@x", "1"), author("Alice", "b@x", "2")], &r);
        assert_eq!(map["a@x"].account_id, "U");
        assert_eq!(map["b@x"].account_id, "U");
        assert_eq!(map["a@x"].emails.len(), 2);
        assert_eq!(map["a@x"].display_name, "Al");
        assert!(r.flags().is_empty());
    }

    #[test]
    fn remote_failure_falls_back_and_flags() {
        let r = IdentityResolver::remote(Stub);
        let map = resolve_identities(&[author("D", "down@x", "1"), author("N", "n@x", "2")], &r);
        assert_eq!(map["down@x"].account_id, "down@x");
        assert_eq!(map["n@x"].account_id, "n@x");
        assert_eq!(r.flags().len(), 2);
    }

    #[test]
    fn identities_never_exceed_emails() {
        let r = IdentityResolver::remote(Stub);
        let authors: Vec<_> = ["a@x", "b@x", "c@x", "a@x", "d@x"]
            .iter()
            .enumerate()
            .map(|(i, e)| author("n", e, &i.to_string()))
            .collect();
        let map = resolve_identities(&authors, &r);
        let distinct: BTreeSet<_> = map.values().map(|i| i.account_id.clone()).collect();
        assert!(distinct.len() <= map.len());
        assert_eq!(distinct.len(), 3);
    }
}
