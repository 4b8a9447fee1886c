//! Strict comma-separated reader.
//!
//! Standard double-quote rules: `""` inside a quoted field is a literal
//! quote, quoted fields may span lines, and an unterminated quote is an
//! error rather than a field that silently swallows the rest of the file.

use super::CorpusError;

/// One physical record with the line it started on (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

pub(crate) fn read_rows(text: &str) -> Result<Vec<Row>, CorpusError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut rows = Vec::new();
    let mut fields: Vec<String> = Vec::new();
    let mut field = String::new();
    let mut line = 1usize;
    let mut record_line = 1usize;
    let mut at_field_start = true;
    let mut chars = text.chars().peekable();

    while let Some(c) = chars.next() {
        if at_field_start && c == '"' {
            let open_line = line;
            loop {
                match chars.next() {
                    None => return Err(CorpusError::UnterminatedQuote { line: open_line }),
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.push('"');
                    }
                    Some('"') => break,
                    Some(ch) => {
                        if ch == '\n' {
                            line += 1;
                        }
                        field.push(ch);
                    }
                }
            }
            match chars.peek() {
                None | Some(',') | Some('\n') | Some('\r') => {}
                Some(_) => {
                    return Err(CorpusError::Malformed {
                        line,
                        reason: "unexpected character after closing quote".into(),
                    })
                }
            }
            at_field_start = false;
            continue;
        }
        match c {
            ',' => {
                fields.push(std::mem::take(&mut field));
                at_field_start = true;
            }
            '\r' if chars.peek() == Some(&'\n') => {}
            '\n' => {
                fields.push(std::mem::take(&mut field));
                let done = std::mem::take(&mut fields);
                if !is_blank(&done) {
                    rows.push(Row {
                        line: record_line,
                        fields: done,
                    });
                }
                line += 1;
                record_line = line;
                at_field_start = true;
            }
            _ => {
                field.push(c);
                at_field_start = false;
            }
        }
    }
    if !fields.is_empty() || !field.is_empty() || !at_field_start {
        fields.push(field);
        if !is_blank(&fields) {
            rows.push(Row {
                line: record_line,
                fields,
            });
        }
    }
    Ok(rows)
}

fn is_blank(fields: &[String]) -> bool {
    fields.len() == 1 && fields[0].is_empty()
}
