use std::fmt;
use std::time::Duration;

use meshguard_core::Document;

use super::OUT_OF_SCOPE_TECHNIQUES;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub step: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub steps: Vec<StepOutcome>,
    pub passed: bool,
    pub technique_refs: Vec<String>,
    pub proxies: usize,
    pub elapsed: Duration,
}

impl ScenarioReport {
    pub fn first_failure(&self) -> Option<&StepOutcome> {
        self.steps.iter().find(|s| !s.ok)
    }

    pub fn to_document(&self) -> Document {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                Document::map()
                    .with("step", s.step.as_str())
                    .with("ok", s.ok)
                    .with("detail", s.detail.as_str())
            })
            .collect::<Vec<_>>();
        Document::map()
            .with("name", self.name.as_str())
            .with("passed", self.passed)
            .with("proxies", self.proxies as i64)
            .with("elapsed_ms", self.elapsed.as_millis() as i64)
            .with("technique_refs", strings(&self.technique_refs))
            .with("steps", steps)
    }
}

fn strings<S: AsRef<str>>(items: &[S]) -> Vec<Document> {
    items.iter().map(|s| Document::from(s.as_ref())).collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub filter: String,
    pub scenarios: Vec<ScenarioReport>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.scenarios.iter().all(|s| s.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.scenarios
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.name.as_str())
            .collect()
    }

    pub fn to_document(&self) -> Document {
        Document::map()
            .with("filter", self.filter.as_str())
            .with("passed", self.passed())
            .with(
                "scenarios",
                self.scenarios
                    .iter()
                    .map(ScenarioReport::to_document)
                    .collect::<Vec<_>>(),
            )
            .with("out_of_scope_techniques", strings(OUT_OF_SCOPE_TECHNIQUES))
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:<6} {:>8}  techniques", "scenario", "result", "ms")?;
        for s in &self.scenarios {
            writeln!(
                f,
                "{:<32} {:<6} {:>8}  {}",
                s.name,
                if s.passed { "PASS" } else { "FAIL" },
                s.elapsed.as_millis(),
                s.technique_refs.join(", ")
            )?;
            if let Some(step) = s.first_failure() {
                writeln!(f, "    failed at: {}: {}", step.step, step.detail)?;
            }
        }
        let passed = self.scenarios.iter().filter(|s| s.passed).count();
        writeln!(f, "{passed}/{} passed (filter: {})", self.scenarios.len(), self.filter)?;
        writeln!(
            f,
            "not covered (needs confidential containers): {}",
            OUT_OF_SCOPE_TECHNIQUES.join(", ")
        )
    }
}
