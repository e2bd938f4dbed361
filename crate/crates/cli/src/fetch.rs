//! Blocking HTTP fetcher for the crawler.

use std::time::Duration;

use groundform_core::corpus::crawl::{FetchError, FetchResponse, Fetcher};
use ureq::ResponseExt;
use url::Url;

const MAX_BODY_BYTES: u64 = 10 * 1024 * 1024;

pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .max_redirects(5)
            .user_agent(concat!("groundform/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpFetcher { agent }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &Url) -> Result<FetchResponse, FetchError> {
        let mut resp = self.agent.get(url.as_str()).call().map_err(|e| FetchError(e.to_string()))?;
        let final_url = Url::parse(&resp.get_uri().to_string()).unwrap_or_else(|_| url.clone());
        let status_code = resp.status().as_u16();
        let body_html = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .lossy_utf8(true)
            .read_to_string()
            .map_err(|e| FetchError(e.to_string()))?;
        Ok(FetchResponse { status_code, body_html, final_url })
    }
}
