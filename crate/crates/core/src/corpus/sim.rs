//! In-memory sites for offline crawling.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use url::Url;

use super::crawl::{normalize_url, FetchError, FetchResponse, Fetcher};

#[derive(Debug, Default)]
pub struct SimulatedSite {
    pages: Mutex<BTreeMap<String, String>>,
    failures: Mutex<HashMap<String, u32>>,
    calls: Mutex<Vec<String>>,
    /// Pages the generator linked with a priority keyword.
    priority: Mutex<BTreeMap<String, bool>>,
    links: Mutex<BTreeMap<String, Vec<String>>>,
}

const KEYWORD_TOPICS: [&str; 7] = [
    "Application Requirements",
    "Deadlines",
    "Testing Policies",
    "Financial Aid",
    "International Applicants",
    "Transcript Request",
    "Letters of Recommendation",
];

const GENERIC_TOPICS: [&str; 6] = ["Athletics Schedule", "Campus Life", "Research Centers", "Dining Halls", "Alumni News", "Library Hours"];

fn slug(s: &str) -> String {
    s.to_ascii_lowercase().replace(' ', "-")
}

impl SimulatedSite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_page(&self, url: &str, html: &str) {
        let key = normalize_url(&Url::parse(url).expect("absolute url")).to_string();
        self.pages.lock().unwrap().insert(key, html.to_owned());
    }

    /// The next `n` fetches of `url` fail.
    pub fn fail_times(&self, url: &str, n: u32) {
        self.failures.lock().unwrap().insert(url.to_owned(), n);
    }

    pub fn merge(&self, other: SimulatedSite) {
        self.pages.lock().unwrap().extend(other.pages.into_inner().unwrap());
        self.priority.lock().unwrap().extend(other.priority.into_inner().unwrap());
        self.links.lock().unwrap().extend(other.links.into_inner().unwrap());
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn page_count(&self) -> usize {
        self.pages.lock().unwrap().len()
    }

    pub fn is_priority(&self, url: &str) -> Option<bool> {
        self.priority.lock().unwrap().get(url).copied()
    }

    /// In-domain page links of a generated page, in document order.
    pub fn links_of(&self, url: &str) -> Vec<String> {
        self.links.lock().unwrap().get(url).cloned().unwrap_or_default()
    }

    /// A deterministic site of `n` pages on `domain`, wired as a ternary tree
    /// from the home page. Every fifth page is an admissions topic whose
    /// anchor and path carry a priority keyword. Each page also links to an
    /// off-domain site, a PDF and a mail address, and repeats a copyright
    /// line that boilerplate removal should strip.
    pub fn university(domain: &str, n: usize) -> Self {
        let site = SimulatedSite::new();
        let name = domain.split('.').next().unwrap_or(domain).to_uppercase();
        let base = format!("https://{domain}");
        let topic = |k: usize| -> (String, String) {
            if k == 0 {
                return ("Home".into(), format!("{base}/"));
            }
            let title =
                if k % 5 == 1 { KEYWORD_TOPICS[(k / 5) % KEYWORD_TOPICS.len()] } else { GENERIC_TOPICS[k % GENERIC_TOPICS.len()] };
            (format!("{title} {k}"), format!("{base}/{}-{k}", slug(title)))
        };
        for k in 0..n {
            let (title, url) = topic(k);
            let children: Vec<usize> = (3 * k + 1..=3 * k + 3).filter(|&c| c < n).collect();
            let mut links = String::new();
            let mut out = Vec::new();
            for &c in &children {
                let (t, u) = topic(c);
                links.push_str(&format!("<li><a href=\"{u}\">{t}</a></li>"));
                out.push(u.clone());
                site.priority.lock().unwrap().insert(u, c % 5 == 1);
            }
            let html = format!(
                "<html><head><title>{title} | {name}</title></head><body>\
                 <nav><a href=\"/\">Home</a> <a href=\"{url}#top\">Top</a></nav>\
                 <main><h1>{title}</h1>\
                 <p>The {name} office publishes details about {title} for prospective students. \
                 Page {k} of the admissions site lists dates, contacts and policies.</p>\
                 <ul>{links}</ul>\
                 <p>See the <a href=\"/viewbook-{k}.pdf\">viewbook</a>, email <a href=\"mailto:admit@{domain}\">admissions</a>, \
                 or visit the <a href=\"https://example.org/partner\">partner portal</a> for more information today.</p>\
                 </main>\
                 <p>Copyright {name} University. All rights reserved.</p></body></html>",
            );
            site.links.lock().unwrap().insert(url.clone(), out);
            site.add_page(&url, &html);
        }
        site.priority.lock().unwrap().insert(format!("{base}/"), true);
        site
    }
}

impl Fetcher for SimulatedSite {
    fn fetch(&self, url: &Url) -> Result<FetchResponse, FetchError> {
        let key = url.to_string();
        self.calls.lock().unwrap().push(key.clone());
        if let Some(n) = self.failures.lock().unwrap().get_mut(&key) {
            if *n > 0 {
                *n -= 1;
                return Err(FetchError("simulated connection reset".into()));
            }
        }
        match self.pages.lock().unwrap().get(&key) {
            Some(body) => Ok(FetchResponse { status_code: 200, body_html: body.clone(), final_url: url.clone() }),
            None => Ok(FetchResponse { status_code: 404, body_html: String::new(), final_url: url.clone() }),
        }
    }
}
