//! Prompt templates and few-shot prompt assembly.
//!
//! A template file has up to three sections, each introduced by a header
//! line:
//!
//! ```text
//! ### system
//! <instructions sent as the system message>
//! ### prompt
//! <user message; must contain {{demonstrations}}, {{query}} and FINAL: once>
//! ### demonstration
//! <one few-shot block; must contain {{src}} and {{tgt}}, may use {{n}}>
//! ```
//!
//! Substitution is single-pass, so sentence text that happens to contain
//! `{{...}}` is never expanded.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieve::RetrievedExample;

pub const FINAL_MARKER: &str = "FINAL:";
pub const MAX_DEMONSTRATIONS: usize = 3;

const DEFAULT_COT: &str = include_str!("templates/cot.txt");
const DEFAULT_BASELINE: &str = include_str!("templates/baseline.txt");
const DEFAULT_DEMONSTRATION: &str = "Vietnamese: {{src}}\nJapanese: {{tgt}}";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template is missing required placeholder {0}")]
    MissingPlaceholder(&'static str),
    #[error("placeholder {0} must appear exactly once")]
    RepeatedPlaceholder(&'static str),
    #[error("unknown placeholder {{{{{0}}}}} in {1} section")]
    UnknownPlaceholder(String, &'static str),
    #[error("unknown template section header {0:?}")]
    UnknownSection(String),
    #[error("unterminated placeholder in {0} section")]
    Unterminated(&'static str),
    #[error("too many demonstrations: {0} (at most {MAX_DEMONSTRATIONS})")]
    TooManyDemonstrations(usize),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system: String,
    prompt: String,
    demonstration: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut system = String::new();
        let mut prompt: Option<String> = None;
        let mut demonstration: Option<String> = None;
        // text before any header is treated as the prompt section
        let mut current = String::new();
        let mut section: Option<&'static str> = None;

        let mut commit = |section: Option<&'static str>, body: String| match section {
            Some("system") => system = body,
            Some("demonstration") => demonstration = Some(body),
            _ => {
                if section.is_some() || !body.trim().is_empty() {
                    prompt = Some(body)
                }
            }
        };

        for line in text.lines() {
            if let Some(name) = line.strip_prefix("### ") {
                let next = match name.trim() {
                    "system" => "system",
                    "prompt" => "prompt",
                    "demonstration" => "demonstration",
                    other => return Err(TemplateError::UnknownSection(other.to_owned())),
                };
                commit(section, trim_block(&current));
                current.clear();
                section = Some(next);
                continue;
            }
            current.push_str(line);
            current.push('\n');
        }
        commit(section, trim_block(&current));

        let template = Self {
            system,
            prompt: prompt.ok_or(TemplateError::MissingPlaceholder("{{query}}"))?,
            demonstration: demonstration.unwrap_or_else(|| DEFAULT_DEMONSTRATION.to_owned()),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The shipped chain-of-thought template.
    pub fn default_cot() -> Self {
        Self::parse(DEFAULT_COT).expect("bundled CoT template is valid")
    }

    /// Plain, zero-shot template for first-pass baseline translation.
    pub fn baseline() -> Self {
        Self::parse(DEFAULT_BASELINE).expect("bundled baseline template is valid")
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    fn validate(&self) -> Result<(), TemplateError> {
        let prompt_names = placeholders(&self.prompt, "prompt")?;
        for required in ["demonstrations", "query"] {
            match prompt_names.iter().filter(|n| *n == required).count() {
                0 => return Err(TemplateError::MissingPlaceholder(placeholder_label(required))),
                1 => {}
                _ => return Err(TemplateError::RepeatedPlaceholder(placeholder_label(required))),
            }
        }
        if let Some(other) = prompt_names
            .iter()
            .find(|n| !["demonstrations", "query"].contains(&n.as_str()))
        {
            return Err(TemplateError::UnknownPlaceholder(other.clone(), "prompt"));
        }

        let demo_names = placeholders(&self.demonstration, "demonstration")?;
        for required in ["src", "tgt"] {
            if !demo_names.iter().any(|n| n == required) {
                return Err(TemplateError::MissingPlaceholder(placeholder_label(required)));
            }
        }
        if let Some(other) = demo_names.iter().find(|n| !["src", "tgt", "n"].contains(&n.as_str())) {
            return Err(TemplateError::UnknownPlaceholder(other.clone(), "demonstration"));
        }
        if let Some(name) = placeholders(&self.system, "system")?.into_iter().next() {
            return Err(TemplateError::UnknownPlaceholder(name, "system"));
        }

        let markers = self.prompt.matches(FINAL_MARKER).count() + self.system.matches(FINAL_MARKER).count();
        match markers {
            0 => Err(TemplateError::MissingPlaceholder(FINAL_MARKER)),
            1 if !self.demonstration.contains(FINAL_MARKER) => Ok(()),
            _ => Err(TemplateError::RepeatedPlaceholder(FINAL_MARKER)),
        }
    }
}

fn placeholder_label(name: &str) -> &'static str {
    match name {
        "demonstrations" => "{{demonstrations}}",
        "query" => "{{query}}",
        "src" => "{{src}}",
        "tgt" => "{{tgt}}",
        _ => "{{?}}",
    }
}

fn trim_block(text: &str) -> String {
    text.trim_matches('\n').to_owned()
}

/// Names of every `{{name}}` in `text`, in order.
fn placeholders(text: &str, section: &'static str) -> Result<Vec<String>, TemplateError> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(TemplateError::Unterminated(section))?;
        names.push(after[..end].to_owned());
        rest = &after[end + 2..];
    }
    Ok(names)
}

/// Replaces each `{{name}}` with `lookup(name)` in one pass.
fn substitute(text: &str, lookup: impl Fn(&str) -> String) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push_str(&lookup(&after[..end]));
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// A fully rendered few-shot chain-of-thought prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    /// `(source_vi, target_ja)` in retrieval rank order.
    pub demonstrations: Vec<(String, String)>,
    pub query_vi: String,
    /// User-message part of the prompt (everything after the system text).
    pub user_text: String,
    /// Full prompt: system text, blank line, user text.
    pub render: String,
}

pub fn assemble_prompt(
    query_vi: &str,
    examples: &[RetrievedExample],
    template: &PromptTemplate,
) -> Result<PromptBundle, TemplateError> {
    if examples.len() > MAX_DEMONSTRATIONS {
        return Err(TemplateError::TooManyDemonstrations(examples.len()));
    }
    let demonstrations: Vec<(String, String)> = examples
        .iter()
        .map(|e| (e.source_vi.clone(), e.target_ja.clone()))
        .collect();

    let blocks: Vec<String> = demonstrations
        .iter()
        .enumerate()
        .map(|(i, (src, tgt))| {
            substitute(&template.demonstration, |name| match name {
                "src" => src.clone(),
                "tgt" => tgt.clone(),
                "n" => (i + 1).to_string(),
                _ => String::new(),
            })
        })
        .collect();
    let joined = blocks.join("\n\n");

    let user_text = substitute(&template.prompt, |name| match name {
        "demonstrations" => joined.clone(),
        "query" => query_vi.to_owned(),
        _ => String::new(),
    });
    let render = if template.system.is_empty() {
        user_text.clone()
    } else {
        format!("{}\n\n{}", template.system, user_text)
    };

    Ok(PromptBundle {
        system_text: template.system.clone(),
        demonstrations,
        query_vi: query_vi.to_owned(),
        user_text,
        render,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: u64, score: f64, src: &str, tgt: &str) -> RetrievedExample {
        RetrievedExample {
            doc_id: id,
            score,
            source_vi: src.into(),
            target_ja: tgt.into(),
        }
    }

    #[test]
    fn bundled_templates_parse() {
        let cot = PromptTemplate::default_cot();
        assert!(!cot.system().is_empty());
        PromptTemplate::baseline();
    }

    #[test]
    fn zero_shot_still_has_final_instruction() {
        let bundle = assemble_prompt("xin chào", &[], &PromptTemplate::default_cot()).unwrap();
        assert!(bundle.demonstrations.is_empty());
        assert!(!bundle.render.contains("Example 1"));
        assert_eq!(bundle.render.matches(FINAL_MARKER).count(), 1);
        assert_eq!(bundle.render.matches("xin chào").count(), 1);
    }

    #[test]
    fn demonstrations_in_rank_order() {
        let examples = [
            example(4, 9.1, "một", "一"),
            example(1, 4.2, "hai", "二"),
            example(7, 1.0, "ba", "三"),
        ];
        let bundle = assemble_prompt("bốn", &examples, &PromptTemplate::default_cot()).unwrap();
        let p1 = bundle.render.find("Vietnamese: một").unwrap();
        let p2 = bundle.render.find("Vietnamese: hai").unwrap();
        let p3 = bundle.render.find("Vietnamese: ba").unwrap();
        assert!(p1 < p2 && p2 < p3);
        assert!(bundle.render.contains("Example 3\nVietnamese: ba\nJapanese: 三"));
        assert_eq!(bundle.render.matches(FINAL_MARKER).count(), 1);
    }

    #[test]
    fn rendering_is_deterministic() {
        let examples = [example(0, 2.0, "a", "あ")];
        let t = PromptTemplate::default_cot();
        let a = assemble_prompt("b", &examples, &t).unwrap();
        let b = assemble_prompt("b", &examples, &t).unwrap();
        assert_eq!(a.render.as_bytes(), b.render.as_bytes());
    }

    #[test]
    fn sentence_text_is_not_expanded() {
        let examples = [example(0, 2.0, "{{query}}", "{{tgt}}")];
        let bundle = assemble_prompt("{{src}}", &examples, &PromptTemplate::default_cot()).unwrap();
        assert!(bundle.render.contains("Vietnamese: {{query}}"));
        assert!(bundle.render.contains("Japanese: {{tgt}}"));
        assert!(bundle.render.contains("{{src}}"));
    }

    #[test]
    fn too_many_examples() {
        let examples: Vec<_> = (0..4).map(|i| example(i, 1.0, "a", "b")).collect();
        assert_eq!(
            assemble_prompt("q", &examples, &PromptTemplate::default_cot()),
            Err(TemplateError::TooManyDemonstrations(4))
        );
    }

    #[test]
    fn missing_placeholders_named() {
        assert_eq!(
            PromptTemplate::parse("### prompt\n{{demonstrations}} FINAL:"),
            Err(TemplateError::MissingPlaceholder("{{query}}"))
        );
        assert_eq!(
            PromptTemplate::parse("### prompt\n{{query}} FINAL:"),
            Err(TemplateError::MissingPlaceholder("{{demonstrations}}"))
        );
        assert_eq!(
            PromptTemplate::parse("### prompt\n{{demonstrations}}{{query}}"),
            Err(TemplateError::MissingPlaceholder(FINAL_MARKER))
        );
        assert_eq!(
            PromptTemplate::parse("### prompt\n{{demonstrations}}{{query}} FINAL:\n### demonstration\n{{src}}"),
            Err(TemplateError::MissingPlaceholder("{{tgt}}"))
        );
    }

    #[test]
    fn repeated_and_unknown_placeholders() {
        assert_eq!(
            PromptTemplate::parse("{{demonstrations}}{{query}}{{query}} FINAL:"),
            Err(TemplateError::RepeatedPlaceholder("{{query}}"))
        );
        assert_eq!(
            PromptTemplate::parse("{{demonstrations}}{{query}} FINAL: FINAL:"),
            Err(TemplateError::RepeatedPlaceholder(FINAL_MARKER))
        );
        assert!(matches!(
            PromptTemplate::parse("{{demonstrations}}{{query}}{{lang}} FINAL:"),
            Err(TemplateError::UnknownPlaceholder(name, "prompt")) if name == "lang"
        ));
        assert!(matches!(
            PromptTemplate::parse("### intro\n{{query}}"),
            Err(TemplateError::UnknownSection(_))
        ));
    }

    #[test]
    fn headerless_template_is_prompt_only() {
        let t = PromptTemplate::parse("{{demonstrations}}\n{{query}}\nFINAL: <ja>\n").unwrap();
        let bundle = assemble_prompt("q", &[example(0, 1.0, "s", "t")], &t).unwrap();
        assert_eq!(bundle.system_text, "");
        assert_eq!(bundle.render, "Vietnamese: s\nJapanese: t\nq\nFINAL: <ja>");
    }
}
