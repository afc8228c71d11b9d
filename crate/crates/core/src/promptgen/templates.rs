//! Prompt template files with `{{name}}` placeholders.
//!
//! Each file holds role sections introduced by a line `[system]`, `[user]`
//! or `[assistant]`. Files are named `{application}_{backend}_{purpose}.txt`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Application, Message, PromptError, Role};
use crate::sandbox::ExecBackendKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Purpose {
    Codegen,
    Strawman,
    Selfdebug,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Codegen => "codegen",
            Purpose::Strawman => "strawman",
            Purpose::Selfdebug => "selfdebug",
        }
    }
}

macro_rules! embedded {
    ($($name:literal),+ $(,)?) => {
        &[$(($name, include_str!(concat!("../../prompts/", $name, ".txt")))),+]
    };
}

const EMBEDDED: &[(&str, &str)] = embedded!(
    "traffic_graph_api_codegen",
    "traffic_tabular_codegen",
    "traffic_relational_codegen",
    "traffic_direct_answer_strawman",
    "traffic_graph_api_selfdebug",
    "traffic_tabular_selfdebug",
    "traffic_relational_selfdebug",
    "malt_graph_api_codegen",
    "malt_tabular_codegen",
    "malt_relational_codegen",
    "malt_direct_answer_strawman",
    "malt_graph_api_selfdebug",
    "malt_tabular_selfdebug",
    "malt_relational_selfdebug",
);

pub fn template_name(app: Application, backend: ExecBackendKind, purpose: Purpose) -> String {
    format!("{}_{}_{}", app.as_str(), backend.as_str(), purpose.as_str())
}

#[derive(Debug, Clone)]
pub struct Template {
    sections: Vec<(Role, String)>,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: Vec<(Role, String)> = Vec::new();
        for line in text.lines() {
            let header = match line.trim_end() {
                "[system]" => Some(Role::System),
                "[user]" => Some(Role::User),
                "[assistant]" => Some(Role::Assistant),
                _ => None,
            };
            match (header, sections.last_mut()) {
                (Some(role), _) => sections.push((role, String::new())),
                (None, Some((_, body))) => {
                    body.push_str(line);
                    body.push('\n');
                }
                (None, None) if line.trim().is_empty() => {}
                (None, None) => {
                    return Err(PromptError::Template("text before the first role header".into()))
                }
            }
        }
        if sections.is_empty() {
            return Err(PromptError::Template("template has no sections".into()));
        }
        for (_, body) in sections.iter_mut() {
            let trimmed = body.trim_end_matches('\n').to_string();
            *body = trimmed;
        }
        Ok(Self { sections })
    }

    /// Substitutes every placeholder; an unknown placeholder is an error.
    pub fn render(&self, vars: &BTreeMap<&str, &str>) -> Result<Vec<Message>, PromptError> {
        self.sections
            .iter()
            .map(|(role, body)| Ok(Message { role: *role, content: substitute(body, vars)? }))
            .collect()
    }
}

fn substitute(body: &str, vars: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| PromptError::Template("unterminated placeholder".into()))?;
        let name = after[..end].trim();
        let value = vars
            .get(name)
            .ok_or_else(|| PromptError::Template(format!("no value for placeholder `{name}`")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl TemplateSet {
    /// Templates compiled into the crate from its `prompts/` directory.
    pub fn embedded() -> Self {
        let templates = EMBEDDED
            .iter()
            .map(|(name, text)| (name.to_string(), Template::parse(text).expect("embedded template parses")))
            .collect();
        Self { templates }
    }

    /// Embedded templates overridden by any `*.txt` files found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::embedded();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Template(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| PromptError::Template(e.to_string()))?.path();
            if path.extension().is_some_and(|x| x == "txt") {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
                set.templates.insert(name, Template::parse(&text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, app: Application, backend: ExecBackendKind, purpose: Purpose) -> Result<&Template, PromptError> {
        let name = template_name(app, backend, purpose);
        self.templates
            .get(&name)
            .ok_or_else(|| PromptError::Template(format!("missing template `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_substitutes() {
        let t = Template::parse("[system]\nhello {{who}}\n[user]\nq: {{ q }}\n").unwrap();
        let vars = BTreeMap::from([("who", "ops"), ("q", "why?")]);
        let msgs = t.render(&vars).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].content, "hello ops");
        assert_eq!(msgs[1].role, Role::User);
        assert_eq!(msgs[1].content, "q: why?");
    }

    #[test]
    fn missing_placeholder_value_is_an_error() {
        let t = Template::parse("[user]\n{{nope}}").unwrap();
        assert!(t.render(&BTreeMap::new()).is_err());
        assert!(Template::parse("stray\n[user]\nx").is_err());
    }

    #[test]
    fn every_embedded_template_is_present() {
        let set = TemplateSet::embedded();
        for app in [Application::Traffic, Application::Malt] {
            for backend in ExecBackendKind::CODE_BACKENDS {
                set.get(app, backend, Purpose::Codegen).unwrap();
                set.get(app, backend, Purpose::Selfdebug).unwrap();
            }
            set.get(app, ExecBackendKind::DirectAnswer, Purpose::Strawman).unwrap();
        }
    }
}
