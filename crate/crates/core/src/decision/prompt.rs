use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template has no value for placeholder `{{{0}}}`")]
    MissingValue(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Prompt texts with `{placeholder}` slots. Only `{identifier}` sequences are
/// slots, so literal JSON braces in the templates pass through untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub bounded_preamble: String,
    pub rational_preamble: String,
    pub work_hours: String,
    pub order_selection: String,
    pub detector: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            bounded_preamble: include_str!("../../prompts/bounded_preamble.txt").trim_end().to_string(),
            rational_preamble: include_str!("../../prompts/rational_preamble.txt").trim_end().to_string(),
            work_hours: include_str!("../../prompts/work_hours.txt").to_string(),
            order_selection: include_str!("../../prompts/order_selection.txt").to_string(),
            detector: include_str!("../../prompts/detector.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Defaults overridden by any `<name>.txt` present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::default();
        let slots: [(&str, &mut String); 5] = [
            ("bounded_preamble", &mut t.bounded_preamble),
            ("rational_preamble", &mut t.rational_preamble),
            ("work_hours", &mut t.work_hours),
            ("order_selection", &mut t.order_selection),
            ("detector", &mut t.detector),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(t)
    }
}

/// Substitute every `{name}` slot in `template` from `values`.
pub fn render(template: &str, values: &[(&str, String)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        if ident_len > 0 && after.as_bytes().get(ident_len) == Some(&b'}') {
            let name = &after[..ident_len];
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| TemplateError::MissingValue(name.to_string()))?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}
