//! Synthetic page markup.
//!
//! Pages are HTML-shaped documents whose root element carries the serving
//! context as attributes, so post-processing can recover it without a real
//! HTML parser:
//!
//! ```text
//! <html data-kind="result" data-engine="google" data-category="text" data-page="2" data-terminal="false">
//! ```

use std::fmt::Write as _;

use rand::Rng;

use crate::design::SearchCategory;
use crate::engines::PageKind;
use crate::seed;

const RESULTS_PER_PAGE: usize = 10;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    s.replace("&quot;", "\"")
        .replace("&gt;", ">")
        .replace("&lt;", "<")
        .replace("&amp;", "&")
}

pub(crate) struct PageSpec<'a> {
    pub kind: PageKind,
    pub engine: &'a str,
    pub category: Option<SearchCategory>,
    pub query: &'a str,
    pub page_index: u32,
    pub terminal: bool,
    pub target_bytes: usize,
    pub seed: u64,
}

/// Renders a page padded to exactly `target_bytes`, or to the smallest possible
/// document when the target is below it.
pub(crate) fn render(spec: &PageSpec<'_>) -> Vec<u8> {
    let category = spec.category.map(|c| c.as_str()).unwrap_or("");
    let mut head = String::new();
    let _ = write!(
        head,
        "<!doctype html>\n<html data-kind=\"{}\" data-engine=\"{}\" data-category=\"{}\" data-page=\"{}\" data-terminal=\"{}\">\n\
         <head><title>{}</title><meta name=\"query\" content=\"{}\"></head>\n<body>\n<ol class=\"results\">\n",
        spec.kind.as_str(),
        escape(spec.engine),
        category,
        spec.page_index,
        spec.terminal,
        escape(spec.query),
        escape(spec.query),
    );
    let tail = "</ol>\n</body>\n</html>\n";

    let mut body = String::new();
    if spec.kind == PageKind::Result && !spec.terminal {
        let mut rng = seed::rng(
            spec.seed,
            &[
                b"results",
                spec.engine.as_bytes(),
                category.as_bytes(),
                spec.query.as_bytes(),
                &spec.page_index.to_le_bytes(),
            ],
        );
        let first_rank = (spec.page_index.max(1) as usize - 1) * RESULTS_PER_PAGE + 1;
        for rank in first_rank..first_rank + RESULTS_PER_PAGE {
            let id: u64 = rng.random();
            let line = format!(
                "<li data-rank=\"{rank}\"><a href=\"https://r{}.{}.example/{id:016x}\">result {rank} for {}</a></li>\n",
                id % 97,
                escape(spec.engine),
                escape(spec.query)
            );
            if head.len() + body.len() + line.len() + tail.len() > spec.target_bytes {
                break;
            }
            body.push_str(&line);
        }
    }

    let used = head.len() + body.len() + tail.len();
    let mut out = String::with_capacity(spec.target_bytes.max(used));
    out.push_str(&head);
    out.push_str(&body);
    if spec.target_bytes > used {
        let gap = spec.target_bytes - used;
        if gap >= 8 {
            out.push_str("<!--");
            out.extend(std::iter::repeat_n('.', gap - 8));
            out.push_str("-->\n");
        } else {
            out.extend(std::iter::repeat_n('\n', gap));
        }
    }
    out.push_str(tail);
    out.into_bytes()
}

/// Serving context recovered from a page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageInfo {
    pub kind: Option<PageKind>,
    pub engine: String,
    pub category: Option<SearchCategory>,
    pub query: String,
    pub page_index: u32,
    pub terminal: bool,
    pub result_count: usize,
}

fn attr<'a>(doc: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = doc.find(&key)? + key.len();
    let end = doc[start..].find('"')? + start;
    Some(&doc[start..end])
}

/// Parses a document rendered by this module. Returns `None` for foreign markup.
pub fn parse(payload: &[u8]) -> Option<PageInfo> {
    let doc = std::str::from_utf8(payload).ok()?;
    let header_end = doc.find("</head>")?;
    let header = &doc[..header_end];
    Some(PageInfo {
        kind: PageKind::parse(attr(header, "data-kind")?),
        engine: unescape(attr(header, "data-engine")?),
        category: SearchCategory::parse(attr(header, "data-category")?),
        query: unescape(attr(header, "content")?),
        page_index: attr(header, "data-page")?.parse().ok()?,
        terminal: attr(header, "data-terminal")? == "true",
        result_count: doc.matches("<li data-rank=").count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(target: usize) -> PageSpec<'static> {
        PageSpec {
            kind: PageKind::Result,
            engine: "google",
            category: Some(SearchCategory::Text),
            query: "a \"quoted\" <query> & more",
            page_index: 2,
            terminal: false,
            target_bytes: target,
            seed: 3,
        }
    }

    #[test]
    fn exact_size() {
        for target in [2048, 4000, 204_800, 1_000_001] {
            assert_eq!(render(&spec(target)).len(), target);
        }
    }

    #[test]
    fn parse_round_trip() {
        let page = render(&spec(50_000));
        let info = parse(&page).unwrap();
        assert_eq!(info.kind, Some(PageKind::Result));
        assert_eq!(info.engine, "google");
        assert_eq!(info.category, Some(SearchCategory::Text));
        assert_eq!(info.query, "a \"quoted\" <query> & more");
        assert_eq!(info.page_index, 2);
        assert_eq!(info.result_count, RESULTS_PER_PAGE);
        assert!(!info.terminal);
    }

    #[test]
    fn tiny_targets_give_minimal_document() {
        let page = render(&spec(10));
        assert!(page.len() > 10);
        assert_eq!(parse(&page).unwrap().result_count, 0);
    }

    #[test]
    fn unicode_queries_keep_exact_size() {
        let mut s = spec(9000);
        s.query = "manifestação";
        let page = render(&s);
        assert_eq!(page.len(), 9000);
        assert_eq!(parse(&page).unwrap().query, "manifestação");
    }
}
