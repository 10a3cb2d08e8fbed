//! `{slot}` substitution for the bundled text templates.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template references unknown slot {{{0}}}")]
    UnknownSlot(String),
    #[error("unclosed slot in template")]
    Unclosed,
}

/// Replaces every `{name}` with `lookup(name)`. `{{` and `}}` are not special.
pub fn fill<'a, F>(template: &str, mut lookup: F) -> Result<String, TemplateError>
where
    F: FnMut(&str) -> Option<&'a str>,
{
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or(TemplateError::Unclosed)?;
        let name = &after[..close];
        let value = lookup(name).ok_or_else(|| TemplateError::UnknownSlot(String::from(name)))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Looks a slot up in a fixed list of pairs.
pub fn fill_pairs(template: &str, pairs: &[(&str, &str)]) -> Result<String, TemplateError> {
    fill(template, |name| {
        pairs.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_and_rejects() {
        assert_eq!(fill_pairs("a {x} b {y}{x}", &[("x", "1"), ("y", "2")]).unwrap(), "a 1 b 21");
        assert_eq!(fill_pairs("plain", &[]).unwrap(), "plain");
        assert_eq!(
            fill_pairs("{z}", &[]),
            Err(TemplateError::UnknownSlot("z".into()))
        );
        assert_eq!(fill_pairs("oops {x", &[("x", "1")]), Err(TemplateError::Unclosed));
    }
}
