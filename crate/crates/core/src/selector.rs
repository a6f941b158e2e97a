//! The verifiable configuration: which fragment locations need an owner signature.
//!
//! Selectors name *where* a policy lives (resource type + path pattern),
//! never what it must contain.
//!
//! ```yaml
//! owner_key_id: 139e3940e64b5491
//! selectors:
//!   - label: request-mirroring
//!     resource_type: RouteConfiguration
//!     path: routes[*].mirror
//! ```

use std::collections::BTreeSet;

use crate::document::{self, Document};
use crate::error::{Error, Result};
use crate::path::{extract_fragment, FragmentPath};
use crate::resource::{ResourceConfig, ResourceRef, ResourceType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySelector {
    pub rtype: ResourceType,
    pub path: FragmentPath,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifiableConfiguration {
    selectors: Vec<PolicySelector>,
    pub owner_key_id: String,
}

impl VerifiableConfiguration {
    pub fn new(owner_key_id: impl Into<String>, selectors: Vec<PolicySelector>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &selectors {
            if !seen.insert(s.label.as_str()) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        Ok(Self {
            selectors,
            owner_key_id: owner_key_id.into(),
        })
    }

    pub fn selectors(&self) -> &[PolicySelector] {
        &self.selectors
    }

    /// Whether any selector could ever match a resource of this type.
    pub fn covers(&self, rtype: ResourceType) -> bool {
        self.selectors.iter().any(|s| s.rtype == rtype)
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let bad = |m: String| Error::MalformedConfig(m);
        let map = doc.as_map().ok_or_else(|| bad("top level must be a map".into()))?;
        if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "owner_key_id" | "selectors")) {
            return Err(bad(format!("unknown field {k:?}")));
        }
        let owner_key_id = map
            .get("owner_key_id")
            .and_then(Document::as_str)
            .ok_or_else(|| bad("owner_key_id must be a string".into()))?;
        let entries = match map.get("selectors") {
            None | Some(Document::Null) => &[][..],
            Some(Document::Array(a)) => a.as_slice(),
            Some(_) => return Err(bad("selectors must be a sequence".into())),
        };
        let mut selectors = Vec::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let e = entry
                .as_map()
                .ok_or_else(|| bad(format!("selectors[{i}] must be a map")))?;
            if let Some(k) = e
                .keys()
                .find(|k| !matches!(k.as_str(), "label" | "resource_type" | "path"))
            {
                return Err(bad(format!("selectors[{i}]: unknown field {k:?}")));
            }
            let field = |k: &str| {
                e.get(k)
                    .and_then(Document::as_str)
                    .ok_or_else(|| bad(format!("selectors[{i}].{k} must be a string")))
            };
            let label = field("label")?;
            if label.is_empty() {
                return Err(bad(format!("selectors[{i}].label must not be empty")));
            }
            let rtype = field("resource_type")?
                .parse()
                .map_err(|e: Error| bad(format!("selectors[{i}]: {e}")))?;
            selectors.push(PolicySelector {
                rtype,
                path: FragmentPath::parse(field("path")?)?,
                label: label.to_owned(),
            });
        }
        Self::new(owner_key_id, selectors)
    }

    pub fn to_document(&self) -> Document {
        let selectors = self
            .selectors
            .iter()
            .map(|s| {
                Document::map()
                    .with("label", s.label.as_str())
                    .with("resource_type", s.rtype.tag())
                    .with("path", s.path.to_string())
            })
            .collect::<Vec<_>>();
        Document::map()
            .with("owner_key_id", self.owner_key_id.as_str())
            .with("selectors", selectors)
    }
}

pub fn parse_verifiable_config(text: &str) -> Result<VerifiableConfiguration> {
    let doc = document::parse_yaml(text).map_err(|e| Error::MalformedConfig(e.to_string()))?;
    VerifiableConfiguration::from_document(&doc)
}

/// One located fragment that needs a signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentMatch {
    pub selector_label: String,
    pub rtype: ResourceType,
    pub resource_name: String,
    pub concrete_path: FragmentPath,
    pub fragment: Document,
}

impl FragmentMatch {
    pub fn resource_ref(&self) -> ResourceRef {
        ResourceRef::new(self.rtype, self.resource_name.clone())
    }
}

/// All fragments of `resource` that `vc` declares confidential.
///
/// Ordered by selector, then by concrete path in document order.
pub fn match_resource(resource: &ResourceConfig, vc: &VerifiableConfiguration) -> Vec<FragmentMatch> {
    vc.selectors
        .iter()
        .filter(|s| s.rtype == resource.rtype)
        .flat_map(|s| {
            extract_fragment(&resource.body, &s.path)
                .into_iter()
                .map(move |(concrete_path, fragment)| FragmentMatch {
                    selector_label: s.label.clone(),
                    rtype: resource.rtype,
                    resource_name: resource.name.clone(),
                    concrete_path,
                    fragment: fragment.clone(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const VC: &str = "\
owner_key_id: 139e3940e64b5491
selectors:
  - label: request-mirroring
    resource_type: RouteConfiguration
    path: routes[*].mirror
  - label: authorization
    resource_type: Listener
    path: rbac
";

    fn route_config(mirrors: usize) -> ResourceConfig {
        let routes = (0..3)
            .map(|i| {
                let r = Document::map().with("name", format!("r{i}"));
                if i < mirrors {
                    r.with("mirror", Document::map().with("host", "shadow.svc"))
                } else {
                    r
                }
            })
            .collect::<Vec<_>>();
        ResourceConfig {
            rtype: ResourceType::RouteConfiguration,
            name: "vs/reviews".into(),
            body: Document::map().with("routes", routes),
            envelopes: vec![],
        }
    }

    #[test]
    fn parses_two_selectors() {
        let vc = parse_verifiable_config(VC).unwrap();
        assert_eq!(vc.selectors().len(), 2);
        assert_eq!(vc.selectors()[0].rtype, ResourceType::RouteConfiguration);
        assert_eq!(vc.selectors()[0].path.to_string(), "routes[*].mirror");
        assert_eq!(vc.selectors()[1].label, "authorization");
        assert_eq!(vc.owner_key_id, "139e3940e64b5491");
        assert_eq!(VerifiableConfiguration::from_document(&vc.to_document()).unwrap(), vc);
    }

    #[test]
    fn empty_selector_list() {
        let vc = parse_verifiable_config("owner_key_id: abc\nselectors: []\n").unwrap();
        assert!(vc.selectors().is_empty());
        assert!(match_resource(&route_config(2), &vc).is_empty());
    }

    #[test]
    fn duplicate_label() {
        let text = "owner_key_id: k\nselectors:\n  - {label: mirror, resource_type: RouteConfiguration, path: a}\n  - {label: mirror, resource_type: Listener, path: b}\n";
        assert!(matches!(parse_verifiable_config(text), Err(Error::DuplicateLabel(l)) if l == "mirror"));
    }

    #[test]
    fn bad_path_and_type() {
        let text = "owner_key_id: k\nselectors:\n  - {label: m, resource_type: RouteConfiguration, path: 'a..b'}\n";
        assert!(matches!(parse_verifiable_config(text), Err(Error::BadPath { .. })));
        let text = "owner_key_id: k\nselectors:\n  - {label: m, resource_type: Gateway, path: a}\n";
        assert!(matches!(parse_verifiable_config(text), Err(Error::MalformedConfig(_))));
        assert!(matches!(parse_verifiable_config("[1"), Err(Error::MalformedConfig(_))));
    }

    #[test]
    fn type_mismatch_matches_nothing() {
        let vc = parse_verifiable_config(VC).unwrap();
        let cluster = ResourceConfig {
            rtype: ResourceType::Cluster,
            name: "dr/x".into(),
            body: Document::map().with("rbac", 1),
            envelopes: vec![],
        };
        assert!(match_resource(&cluster, &vc).is_empty());
    }

    #[test]
    fn wildcard_matches_each_mirror() {
        let vc = parse_verifiable_config(VC).unwrap();
        let matches = match_resource(&route_config(2), &vc);
        assert_eq!(matches.len(), 2);
        assert_eq!(matches[1].concrete_path.to_string(), "routes[1].mirror");
        assert_eq!(matches[0].selector_label, "request-mirroring");
        assert!(match_resource(&route_config(0), &vc).is_empty());
    }

    #[test]
    fn matches_are_literal_subtrees() {
        let vc = parse_verifiable_config(VC).unwrap();
        let r = route_config(3);
        for m in match_resource(&r, &vc) {
            assert_eq!(m.concrete_path.navigate(&r.body), Some(&m.fragment));
        }
    }

    #[test]
    fn adding_selectors_is_monotone() {
        let small = parse_verifiable_config(VC).unwrap();
        let mut selectors = small.selectors().to_vec();
        selectors.push(PolicySelector {
            rtype: ResourceType::RouteConfiguration,
            path: FragmentPath::parse("routes[*]").unwrap(),
            label: "all-routes".into(),
        });
        let big = VerifiableConfiguration::new("k", selectors).unwrap();
        let r = route_config(2);
        let before = match_resource(&r, &small);
        let after = match_resource(&r, &big);
        assert!(before.iter().all(|m| after.contains(m)));
        assert_eq!(after.len(), before.len() + 3);
    }
}
