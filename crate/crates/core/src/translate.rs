//! Manifest → wire resource translation.
//!
//! | manifest kind         | resource            | name      |
//! |-----------------------|---------------------|-----------|
//! | `VirtualService`      | `RouteConfiguration`| `vs/<n>`  |
//! | `AuthorizationPolicy` | `Listener`          | `ap/<n>`  |
//! | `DestinationRule`     | `Cluster`           | `dr/<n>`  |
//!
//! Every signature annotation on the manifest is decoded and attached to the
//! resulting resource. Whether an envelope actually belongs to that resource
//! is the verifier's business, not the translator's.

use crate::document::{Document, Map};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestKind};
use crate::resource::{ResourceConfig, ResourceType};

const BASIS_POINTS_FULL: i64 = 10_000;

pub fn resource_type_for(kind: ManifestKind) -> ResourceType {
    match kind {
        ManifestKind::VirtualService => ResourceType::RouteConfiguration,
        ManifestKind::AuthorizationPolicy => ResourceType::Listener,
        ManifestKind::DestinationRule => ResourceType::Cluster,
    }
}

pub fn resource_name_for(kind: ManifestKind, name: &str) -> String {
    format!("{}/{}", kind.tag(), name)
}

pub fn translate(manifest: &Manifest) -> Result<Vec<ResourceConfig>> {
    let fail = |reason: String| Error::Translation {
        manifest: manifest.display_name(),
        reason,
    };
    let body = match manifest.kind {
        ManifestKind::VirtualService => virtual_service(&manifest.spec),
        ManifestKind::AuthorizationPolicy => authorization_policy(&manifest.spec),
        ManifestKind::DestinationRule => destination_rule(&manifest.spec),
    }
    .map_err(fail)?;
    let envelopes = manifest.signature_envelopes().map_err(|e| fail(e.to_string()))?;
    Ok(vec![ResourceConfig {
        rtype: resource_type_for(manifest.kind),
        name: resource_name_for(manifest.kind, &manifest.name),
        body,
        envelopes,
    }])
}

type Schema<T> = std::result::Result<T, String>;

/// Reads typed fields out of one map and rejects anything it was not asked about.
struct Fields<'a> {
    at: String,
    map: &'a Map,
    seen: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(doc: &'a Document, at: impl Into<String>) -> Schema<Self> {
        let at = at.into();
        let map = doc
            .as_map()
            .ok_or_else(|| format!("{at} must be a map, got {}", doc.type_name()))?;
        Ok(Self {
            at,
            map,
            seen: Vec::new(),
        })
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.at)
    }

    fn opt(&mut self, key: &'static str) -> Option<&'a Document> {
        self.seen.push(key);
        self.map.get(key).filter(|d| !d.is_null())
    }

    fn req(&mut self, key: &'static str) -> Schema<&'a Document> {
        self.opt(key).ok_or_else(|| format!("{} is required", self.path(key)))
    }

    fn opt_str(&mut self, key: &'static str) -> Schema<Option<&'a str>> {
        self.opt(key)
            .map(|d| d.as_str().ok_or_else(|| format!("{} must be a string", self.path(key))))
            .transpose()
    }

    fn req_str(&mut self, key: &'static str) -> Schema<&'a str> {
        let s = self.req(key)?;
        let s = s
            .as_str()
            .ok_or_else(|| format!("{} must be a string", self.path(key)))?;
        if s.is_empty() {
            return Err(format!("{} must not be empty", self.path(key)));
        }
        Ok(s)
    }

    fn opt_int(&mut self, key: &'static str, min: i64, max: i64) -> Schema<Option<i64>> {
        let Some(d) = self.opt(key) else {
            return Ok(None);
        };
        let v = d
            .as_int()
            .ok_or_else(|| format!("{} must be an integer", self.path(key)))?;
        if !(min..=max).contains(&v) {
            return Err(format!("{} must be within {min}..={max}, got {v}", self.path(key)));
        }
        Ok(Some(v))
    }

    fn opt_array(&mut self, key: &'static str) -> Schema<Option<&'a [Document]>> {
        self.opt(key)
            .map(|d| {
                d.as_array()
                    .ok_or_else(|| format!("{} must be a sequence", self.path(key)))
            })
            .transpose()
    }

    fn req_array(&mut self, key: &'static str) -> Schema<&'a [Document]> {
        self.opt_array(key)?
            .ok_or_else(|| format!("{} is required", self.path(key)))
    }

    fn opt_strings(&mut self, key: &'static str) -> Schema<Vec<Document>> {
        let path = self.path(key);
        self.opt_array(key)?
            .unwrap_or_default()
            .iter()
            .enumerate()
            .map(|(i, d)| match d.as_str() {
                Some(s) if !s.is_empty() => Ok(Document::from(s)),
                _ => Err(format!("{path}[{i}] must be a nonempty string")),
            })
            .collect()
    }

    fn finish(self) -> Schema<()> {
        match self.map.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(k) => Err(format!("unknown field {}", self.path(k))),
            None => Ok(()),
        }
    }
}

fn virtual_service(spec: &Document) -> Schema<Document> {
    let mut f = Fields::new(spec, "spec")?;
    let domains = f.opt_strings("hosts")?;
    if domains.is_empty() {
        return Err("spec.hosts must list at least one host".into());
    }
    let routes = f
        .req_array("http")?
        .iter()
        .enumerate()
        .map(|(i, r)| http_route(r, &format!("spec.http[{i}]")))
        .collect::<Schema<Vec<_>>>()?;
    f.finish()?;
    Ok(Document::map().with("domains", domains).with("routes", routes))
}

fn http_route(doc: &Document, at: &str) -> Schema<Document> {
    let mut f = Fields::new(doc, at)?;
    let mut out = Document::map();
    if let Some(name) = f.opt_str("name")? {
        out = out.with("name", name);
    }
    let prefix = match f.opt("match") {
        Some(m) => {
            let mut mf = Fields::new(m, format!("{at}.match"))?;
            let prefix = mf.opt_str("prefix")?.unwrap_or("/").to_owned();
            mf.finish()?;
            prefix
        }
        None => "/".to_owned(),
    };
    out = out.with("match", Document::map().with("prefix", prefix));

    let destinations = f.req_array("route")?;
    if destinations.is_empty() {
        return Err(format!("{at}.route must list at least one destination"));
    }
    let clusters = destinations
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut df = Fields::new(d, format!("{at}.route[{i}]"))?;
            let mut c = Document::map().with("name", df.req_str("host")?);
            if let Some(port) = df.opt_int("port", 1, 65_535)? {
                c = c.with("port", port);
            }
            if let Some(weight) = df.opt_int("weight", 0, 100)? {
                c = c.with("weight", weight);
            }
            df.finish()?;
            Ok(c)
        })
        .collect::<Schema<Vec<_>>>()?;
    out = out.with("clusters", clusters);

    let percent = f.opt_int("mirrorPercentBp", 0, BASIS_POINTS_FULL)?;
    match f.opt("mirror") {
        Some(m) => {
            let mut mf = Fields::new(m, format!("{at}.mirror"))?;
            let mut mirror = Document::map().with("host", mf.req_str("host")?);
            if let Some(port) = mf.opt_int("port", 1, 65_535)? {
                mirror = mirror.with("port", port);
            }
            mf.finish()?;
            out = out.with(
                "mirror",
                mirror.with("percent_bp", percent.unwrap_or(BASIS_POINTS_FULL)),
            );
        }
        None if percent.is_some() => {
            return Err(format!("{at}.mirrorPercentBp requires {at}.mirror"));
        }
        None => {}
    }
    if let Some(timeout) = f.opt_int("timeoutMs", 0, i64::MAX)? {
        out = out.with("timeout_ms", timeout);
    }
    f.finish()?;
    Ok(out)
}

fn authorization_policy(spec: &Document) -> Schema<Document> {
    let mut f = Fields::new(spec, "spec")?;
    let mut workload = Map::new();
    if let Some(sel) = f.opt("selector") {
        let sel = sel.as_map().ok_or_else(|| "spec.selector must be a map".to_string())?;
        for (k, v) in sel {
            let v = v
                .as_str()
                .ok_or_else(|| format!("spec.selector.{k} must be a string"))?;
            workload.insert(k.clone(), v.into());
        }
    }
    let deny = match f.opt_str("action")?.unwrap_or("ALLOW") {
        "ALLOW" => false,
        "DENY" => true,
        other => return Err(format!("spec.action must be ALLOW or DENY, got {other:?}")),
    };
    let rules = f
        .req_array("rules")?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let at = format!("spec.rules[{i}]");
            let mut rf = Fields::new(r, at.clone())?;
            let principals = rf.opt_strings("from")?;
            let (paths, methods) = match rf.opt("to") {
                Some(to) => {
                    let mut tf = Fields::new(to, format!("{at}.to"))?;
                    let out = (tf.opt_strings("paths")?, tf.opt_strings("methods")?);
                    tf.finish()?;
                    out
                }
                None => (Vec::new(), Vec::new()),
            };
            rf.finish()?;
            Ok(Document::map()
                .with("principals", principals)
                .with("paths", paths)
                .with("methods", methods))
        })
        .collect::<Schema<Vec<_>>>()?;
    f.finish()?;
    let (allow, deny) = if deny { (Vec::new(), rules) } else { (rules, Vec::new()) };
    Ok(Document::map()
        .with("workload_selector", workload)
        .with("rbac", Document::map().with("allow", allow).with("deny", deny)))
}

fn destination_rule(spec: &Document) -> Schema<Document> {
    let mut f = Fields::new(spec, "spec")?;
    let mut out = Document::map().with("service", f.req_str("host")?);
    let mut lb = "ROUND_ROBIN";
    let mut outlier = None;
    if let Some(tp) = f.opt("trafficPolicy") {
        let mut tf = Fields::new(tp, "spec.trafficPolicy")?;
        if let Some(policy) = tf.opt_str("loadBalancer")? {
            lb = match policy {
                "ROUND_ROBIN" | "LEAST_REQUEST" | "RANDOM" => policy,
                other => {
                    return Err(format!(
                        "spec.trafficPolicy.loadBalancer must be ROUND_ROBIN, LEAST_REQUEST or RANDOM, got {other:?}"
                    ))
                }
            };
        }
        if let Some(od) = tf.opt("outlierDetection") {
            let mut of = Fields::new(od, "spec.trafficPolicy.outlierDetection")?;
            let doc = Document::map()
                .with(
                    "consecutive_errors",
                    of.opt_int("consecutiveErrors", 1, i64::MAX)?.unwrap_or(5),
                )
                .with("interval_ms", of.opt_int("intervalMs", 1, i64::MAX)?.unwrap_or(10_000))
                .with(
                    "base_ejection_ms",
                    of.opt_int("baseEjectionMs", 1, i64::MAX)?.unwrap_or(30_000),
                )
                .with(
                    "max_ejection_bp",
                    of.opt_int("maxEjectionBp", 0, BASIS_POINTS_FULL)?.unwrap_or(1_000),
                );
            of.finish()?;
            outlier = Some(doc);
        }
        tf.finish()?;
    }
    f.finish()?;
    out = out.with("lb_policy", lb);
    if let Some(od) = outlier {
        out = out.with("outlier_detection", od);
    }
    Ok(out)
}
