//! Client for a GitHub-compatible REST API: most-starred repository listing
//! and commit-to-account lookup. Only used when remote mode is requested.

use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::http::{next_link, HttpClient, HttpResponse, UreqClient, TOKEN_ENV};

pub const DEFAULT_API: &str = "https://api.github.com";

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;
type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub struct HostingApi {
    http: Arc<dyn HttpClient>,
    base_url: String,
    token: Option<String>,
    sleep: Sleeper,
    now: Clock,
    max_retries: u32,
}

impl HostingApi {
    pub fn new(http: Arc<dyn HttpClient>, base_url: impl Into<String>, token: Option<String>) -> Self {
        HostingApi {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            sleep: Arc::new(std::thread::sleep),
            now: Arc::new(|| chrono::Utc::now().timestamp()),
            max_retries: 5,
        }
    }

    /// Real network client, token taken from the environment.
    pub fn from_env() -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::new(Arc::new(UreqClient::new()), DEFAULT_API, token)
    }

    pub fn with_clock(
        mut self,
        sleep: impl Fn(Duration) + Send + Sync + 'static,
        now: impl Fn() -> i64 + Send + Sync + 'static,
    ) -> Self {
        self.sleep = Arc::new(sleep);
        self.now = Arc::new(now);
        self
    }

    fn headers(&self) -> Vec<(&'static str, String)> {
        let mut h = vec![
            ("Accept", "application/vnd.github+json".to_string()),
            ("User-Agent", "libexpert".to_string()),
        ];
        if let Some(t) = &self.token {
            h.push(("Authorization", format!("Bearer {t}")));
        }
        h
    }

    /// How long to wait before retrying a throttled response, if throttled.
    fn backoff(&self, resp: &HttpResponse) -> Option<Duration> {
        if resp.status != 403 && resp.status != 429 {
            return None;
        }
        if let Some(secs) = resp
            .header("retry-after")
            .and_then(|v| v.trim().parse::<u64>().ok())
        {
            return Some(Duration::from_secs(secs));
        }
        if resp.header("x-ratelimit-remaining").map(str::trim) == Some("0") {
            let reset = resp
                .header("x-ratelimit-reset")
                .and_then(|v| v.trim().parse::<i64>().ok())?;
            let wait = (reset - (self.now)()).max(0) as u64 + 1;
            return Some(Duration::from_secs(wait));
        }
        (resp.status == 429).then(|| Duration::from_secs(60))
    }

    /// GET a JSON document, waiting out rate limits.
    fn get(&self, url: &str) -> Result<HttpResponse> {
        let headers = self.headers();
        let mut attempt = 0;
        loop {
            let resp = self.http.get(url, &headers)?;
            if (200..300).contains(&resp.status) || resp.status == 404 || resp.status == 422 {
                return Ok(resp);
            }
            match self.backoff(&resp) {
                Some(wait) if attempt < self.max_retries => {
                    log::warn!("rate limited on {url}; sleeping {}s", wait.as_secs());
                    (self.sleep)(wait);
                    attempt += 1;
                }
                _ => {
                    return Err(Error::Http(format!(
                        "GET {url} returned {}: {}",
                        resp.status,
                        resp.body.chars().take(200).collect::<String>()
                    )))
                }
            }
        }
    }

    /// `owner/name` of the most-starred repositories in `language`,
    /// following pagination until `limit` entries are collected.
    pub fn top_starred(&self, language: &str, limit: usize) -> Result<Vec<String>> {
        let mut url = Some(format!(
            "{}/search/repositories?q=language:{language}&sort=stars&order=desc&per_page=100",
            self.base_url
        ));
        let mut out = Vec::new();
        while let Some(u) = url.take() {
            if out.len() >= limit {
                break;
            }
            let resp = self.get(&u)?;
            if !(200..300).contains(&resp.status) {
                return Err(Error::Http(format!("GET {u} returned {}", resp.status)));
            }
            let doc: Value = serde_json::from_str(&resp.body)?;
            let items = doc["items"].as_array().cloned().unwrap_or_default();
            if items.is_empty() {
                break;
            }
            for item in items {
                if let Some(name) = item["full_name"].as_str() {
                    out.push(name.to_string());
                }
            }
            url = resp.header("link").and_then(next_link);
        }
        out.truncate(limit);
        Ok(out)
    }

    /// The account login the platform attributes a commit to.
    pub fn commit_account(&self, repo_id: &str, commit: &str) -> Result<Option<String>> {
        let url = format!("{}/repos/{repo_id}/commits/{commit}", self.base_url);
        let resp = self.get(&url)?;
        if resp.status == 404 || resp.status == 422 {
            return Ok(None);
        }
        let doc: Value = serde_json::from_str(&resp.body)?;
        Ok(doc["author"]["login"].as_str().map(str::to_string))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    type Request = (String, Vec<(String, String)>);

    /// Scripted transport: pops canned responses, records requests.
    struct Script {
        responses: Mutex<Vec<HttpResponse>>,
        seen: Mutex<Vec<Request>>,
    }

    impl Script {
        fn new(mut responses: Vec<HttpResponse>) -> Arc<Self> {
            responses.reverse();
            Arc::new(Script {
                responses: Mutex::new(responses),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl HttpClient for Script {
        fn get(&self, url: &str, headers: &[(&str, String)]) -> Result<HttpResponse> {
            self.seen.lock().unwrap().push((
                url.to_string(),
                headers.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            ));
            self.responses
                .lock()
                .unwrap()
                .pop()
                .ok_or_else(|| Error::Http("script exhausted".into()))
        }
    }

    fn page(names: &[&str], next: Option<&str>) -> HttpResponse {
        let items: Vec<_> = names
            .iter()
            .map(|n| serde_json::json!({ "full_name": n }))
            .collect();
        let mut headers = vec![];
        if let Some(n) = next {
            headers.push(("Link".to_string(), format!("<{n}>; rel=\"next\"")));
        }
        HttpResponse {
            status: 200,
            headers,
            body: serde_json::json!({ "items": items }).to_string(),
        }
    }

    #[test]
    fn follows_pagination_and_sends_token() {
        let script = Script::new(vec![
            page(&["a/one", "b/two"], Some("https://api.test/p2")),
            page(&["c/three"], None),
        ]);
        let api = HostingApi::new(script.clone(), "https://api.test", Some("tok".into()));
        let repos = api.top_starred("javascript", 10).unwrap();
        assert_eq!(repos, vec!["a/one", "b/two", "c/three"]);
        let seen = script.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[1].0, "https://api.test/p2");
        assert!(seen[0]
            .1
            .iter()
            .any(|(k, v)| k == "Authorization" && v == "Bearer tok"));
    }

    #[test]
    fn stops_at_limit() {
        let script = Script::new(vec![page(&["a/1", "a/2", "a/3"], Some("https://api.test/p2"))]);
        let api = HostingApi::new(script.clone(), "https://api.test", None);
        assert_eq!(api.top_starred("javascript", 2).unwrap(), vec!["a/1", "a/2"]);
        assert_eq!(script.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn waits_for_rate_limit_reset() {
        let limited = HttpResponse {
            status: 403,
            headers: vec![
                ("X-RateLimit-Remaining".into(), "0".into()),
                ("X-RateLimit-Reset".into(), "1030".into()),
            ],
            body: "{}".into(),
        };
        let script = Script::new(vec![limited, page(&["a/b"], None)]);
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s2 = slept.clone();
        let api = HostingApi::new(script, "https://api.test", None)
            .with_clock(move |d| s2.lock().unwrap().push(d), || 1000);
        assert_eq!(api.top_starred("javascript", 5).unwrap(), vec!["a/b"]);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_secs(31)]);
    }

    #[test]
    fn hard_errors_are_reported() {
        let script = Script::new(vec![HttpResponse {
            status: 500,
            headers: vec![],
            body: "boom".into(),
        }]);
        let api = HostingApi::new(script, "https://api.test", None);
        assert!(matches!(api.top_starred("javascript", 5), Err(Error::Http(_))));
    }

    #[test]
    fn commit_account_lookup() {
        let script = Script::new(vec![
            HttpResponse {
                status: 200,
                headers: vec![],
                body: r#"{"author":{"login":"octo"}}"#.into(),
            },
            HttpResponse {
                status: 200,
                headers: vec![],
                body: r#"{"author":null}"#.into(),
            },
        ]);
        let api = HostingApi::new(script, "https://api.test", None);
        assert_eq!(api.commit_account("o/r", "abc").unwrap().as_deref(), Some("octo"));
        assert_eq!(api.commit_account("o/r", "def").unwrap(), None);
    }
}
