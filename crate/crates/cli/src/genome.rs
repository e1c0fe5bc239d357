//! Genome files: one flat genome per line, fields separated by commas (or
//! the `-` used in printed genome strings). `#` starts a comment.

use std::fmt;

use hwnas_core::search_space::{field_name, validate, SearchSpace, SubNetwork, FLAT_LEN};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    /// Field name, or `None` for whole-line problems.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}, field {}: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl std::error::Error for ParseError {}

/// Parses one genome; `line` is only used for error locations.
pub fn parse_genome(text: &str, line: usize, space: &SearchSpace) -> Result<SubNetwork, ParseError> {
    let sep = if text.contains(',') { ',' } else { '-' };
    let parts: Vec<&str> = text.split(sep).map(str::trim).collect();
    if parts.len() != FLAT_LEN {
        return Err(ParseError {
            line,
            field: None,
            message: format!("expected {FLAT_LEN} fields, found {}", parts.len()),
        });
    }
    let mut flat = Vec::with_capacity(FLAT_LEN);
    for (i, p) in parts.iter().enumerate() {
        let v = p.parse::<u32>().map_err(|_| ParseError {
            line,
            field: Some(field_name(i)),
            message: format!("`{p}` is not a non-negative integer"),
        })?;
        flat.push(v);
    }
    let net = SubNetwork::from_flat(&flat).map_err(|e| ParseError {
        line,
        field: membership_field(&e),
        message: e.to_string(),
    })?;
    validate(space, &net).map_err(|e| ParseError {
        line,
        field: membership_field(&e),
        message: e.to_string(),
    })?;
    Ok(net)
}

fn membership_field(e: &hwnas_core::search_space::SpaceError) -> Option<String> {
    use hwnas_core::search_space::SpaceError;
    match e {
        SpaceError::MembershipViolation { stage, field, .. } => Some(match stage {
            Some(s) => format!("stage{s}.{field}"),
            None => field.to_string(),
        }),
        _ => None,
    }
}

/// Parses every non-empty, non-comment line.
pub fn parse_genome_file(text: &str, space: &SearchSpace) -> Result<Vec<SubNetwork>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        out.push(parse_genome(body, i + 1, space)?);
    }
    Ok(out)
}

/// Comma-separated flat form.
pub fn format_genome(net: &SubNetwork) -> String {
    net.to_flat().iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}
