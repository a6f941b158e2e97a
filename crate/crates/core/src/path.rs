//! Fragment paths: locations inside a resource body.
//!
//! Rendered form is `key.key[3].key[*]`: `.` separates map keys, `[n]` is an
//! array index and `[*]` matches every element of an array. Keys are
//! nonempty and may not contain `.`, `[` or `]`, so parse and render are
//! inverse to each other.

use std::fmt;
use std::str::FromStr;

use crate::document::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathStep {
    Key(String),
    Index(usize),
    Wildcard,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FragmentPath {
    steps: Vec<PathStep>,
}

impl FragmentPath {
    /// The empty path, addressing the whole body.
    pub fn root() -> Self {
        Self::default()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = |reason| Error::BadPath {
            path: s.to_owned(),
            reason,
        };
        let mut steps = Vec::new();
        let mut chars = s.chars().peekable();
        let mut expect_key = false;
        while let Some(&c) = chars.peek() {
            match c {
                '[' => {
                    if expect_key {
                        return Err(bad("'.' must be followed by a key"));
                    }
                    chars.next();
                    let mut inner = String::new();
                    loop {
                        match chars.next() {
                            Some(']') => break,
                            Some(ch) => inner.push(ch),
                            None => return Err(bad("unterminated '['")),
                        }
                    }
                    if inner == "*" {
                        steps.push(PathStep::Wildcard);
                    } else if !inner.is_empty()
                        && inner.bytes().all(|b| b.is_ascii_digit())
                        && (inner == "0" || !inner.starts_with('0'))
                    {
                        let index = inner.parse().map_err(|_| bad("index out of range"))?;
                        steps.push(PathStep::Index(index));
                    } else {
                        return Err(bad("index must be '*' or a decimal without leading zeros"));
                    }
                }
                '.' => {
                    if steps.is_empty() || expect_key {
                        return Err(bad("empty key"));
                    }
                    chars.next();
                    expect_key = true;
                }
                ']' => return Err(bad("unbalanced ']'")),
                _ => {
                    if !steps.is_empty() && !expect_key {
                        return Err(bad("keys must be separated by '.'"));
                    }
                    let mut key = String::new();
                    while let Some(&ch) = chars.peek() {
                        if matches!(ch, '.' | '[' | ']') {
                            break;
                        }
                        key.push(ch);
                        chars.next();
                    }
                    steps.push(PathStep::Key(key));
                    expect_key = false;
                }
            }
        }
        if expect_key {
            return Err(bad("trailing '.'"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn is_concrete(&self) -> bool {
        !self.steps.contains(&PathStep::Wildcard)
    }

    fn push(&self, step: PathStep) -> Self {
        let mut steps = self.steps.clone();
        steps.push(step);
        Self { steps }
    }

    /// Follows a concrete path; wildcards never resolve.
    pub fn navigate<'a>(&self, doc: &'a Document) -> Option<&'a Document> {
        self.steps.iter().try_fold(doc, |node, step| match (step, node) {
            (PathStep::Key(k), Document::Map(m)) => m.get(k),
            (PathStep::Index(i), Document::Array(a)) => a.get(*i),
            _ => None,
        })
    }
}

impl fmt::Display for FragmentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                PathStep::Key(k) if i == 0 => f.write_str(k)?,
                PathStep::Key(k) => write!(f, ".{k}")?,
                PathStep::Index(n) => write!(f, "[{n}]")?,
                PathStep::Wildcard => f.write_str("[*]")?,
            }
        }
        Ok(())
    }
}

impl FromStr for FragmentPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Every sub-document matched by `path`, paired with its concrete path.
///
/// Wildcards expand over array elements in index order. Missing keys,
/// out-of-range indices and type mismatches simply contribute no match.
pub fn extract_fragment<'a>(doc: &'a Document, path: &FragmentPath) -> Vec<(FragmentPath, &'a Document)> {
    let mut out = Vec::new();
    walk(doc, path.steps(), FragmentPath::root(), &mut out);
    out
}

fn walk<'a>(node: &'a Document, rest: &[PathStep], here: FragmentPath, out: &mut Vec<(FragmentPath, &'a Document)>) {
    let Some((step, rest)) = rest.split_first() else {
        out.push((here, node));
        return;
    };
    match (step, node) {
        (PathStep::Key(k), Document::Map(m)) => {
            if let Some(child) = m.get(k) {
                walk(child, rest, here.push(step.clone()), out);
            }
        }
        (PathStep::Index(i), Document::Array(a)) => {
            if let Some(child) = a.get(*i) {
                walk(child, rest, here.push(step.clone()), out);
            }
        }
        (PathStep::Wildcard, Document::Array(a)) => {
            for (i, child) in a.iter().enumerate() {
                walk(child, rest, here.push(PathStep::Index(i)), out);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> FragmentPath {
        FragmentPath::parse(s).unwrap()
    }

    fn routes(n: usize) -> Document {
        let routes = (0..n)
            .map(|i| {
                Document::map()
                    .with("name", format!("r{i}"))
                    .with("mirror", Document::map().with("host", "shadow.svc"))
            })
            .collect::<Vec<_>>();
        Document::map().with("routes", routes)
    }

    #[test]
    fn parse_render() {
        for s in ["routes[*].mirror", "rbac", "a[0][12].b", "[3]", "", "x.y.z[*]"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert_eq!(
            p("routes[*].mirror").steps(),
            [
                PathStep::Key("routes".into()),
                PathStep::Wildcard,
                PathStep::Key("mirror".into())
            ]
        );
    }

    #[test]
    fn parse_rejects() {
        for s in [".a", "a.", "a..b", "a[", "a[]", "a[01]", "a[x]", "a]", "a[0]b", "a.[0]"] {
            assert!(FragmentPath::parse(s).is_err(), "{s} should be rejected");
        }
    }

    #[test]
    fn wildcard_expands_to_concrete_indices() {
        let doc = routes(2);
        let got = extract_fragment(&doc, &p("routes[*].mirror"));
        let paths: Vec<_> = got.iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(paths, ["routes[0].mirror", "routes[1].mirror"]);
        assert!(got.iter().all(|(p, _)| p.is_concrete()));
    }

    #[test]
    fn missing_key_is_empty() {
        assert!(extract_fragment(&routes(1), &p("rbac")).is_empty());
    }

    #[test]
    fn out_of_range_is_empty() {
        assert!(extract_fragment(&routes(2), &p("routes[3]")).is_empty());
    }

    #[test]
    fn wildcard_on_map_is_empty() {
        let doc = Document::map().with("a", Document::map().with("b", 1));
        assert!(extract_fragment(&doc, &p("a[*]")).is_empty());
    }

    #[test]
    fn root_path_returns_whole_doc() {
        let doc = routes(1);
        let got = extract_fragment(&doc, &FragmentPath::root());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1, &doc);
    }

    fn arb_step() -> impl Strategy<Value = PathStep> {
        prop_oneof![
            "[a-zA-Z_\\-/:0-9é]{1,8}".prop_map(PathStep::Key),
            (0usize..1000).prop_map(PathStep::Index),
            Just(PathStep::Wildcard),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(steps in prop::collection::vec(arb_step(), 0..6)) {
            let path = FragmentPath { steps };
            prop_assert_eq!(FragmentPath::parse(&path.to_string()).unwrap(), path);
        }

        #[test]
        fn extracted_fragments_are_subtrees(n in 0usize..5, extra in 0usize..3) {
            let mut doc = routes(n);
            if extra > 0 {
                doc.as_map_mut().unwrap().insert("rbac".into(), Document::Int(extra as i64));
            }
            for pat in ["routes[*].mirror", "routes[*]", "routes[*].mirror.host", "rbac", "routes[1]"] {
                for (concrete, frag) in extract_fragment(&doc, &p(pat)) {
                    prop_assert!(concrete.is_concrete());
                    prop_assert_eq!(concrete.navigate(&doc), Some(frag));
                }
            }
        }
    }
}
