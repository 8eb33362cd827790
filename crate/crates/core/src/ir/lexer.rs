use super::IrError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Local(String),
    Global(String),
    Word(String),
    Number(String),
    Str(String),
    Metadata(String),
    AttrGroup(String),
    Punct(char),
    Ellipsis,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub column: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_')
}

/// Removes a trailing `;` comment, respecting quoted strings.
pub(crate) fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            ';' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn read_quoted(chars: &[char], start: usize) -> Option<(String, usize)> {
    // chars[start] == '"'
    let mut i = start + 1;
    let mut s = String::new();
    while i < chars.len() {
        if chars[i] == '"' {
            return Some((s, i + 1));
        }
        s.push(chars[i]);
        i += 1;
    }
    None
}

pub(crate) fn lex(text: &str, line: usize) -> Result<Vec<Token>, IrError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| IrError::Parse {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '%' | '@' => {
                let (name, next) = if chars.get(i + 1) == Some(&'"') {
                    read_quoted(&chars, i + 1)
                        .ok_or_else(|| err(column, "unterminated quoted identifier".into()))?
                } else {
                    let mut j = i + 1;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    if j == i + 1 {
                        return Err(err(column, format!("empty identifier after `{c}`")));
                    }
                    (chars[i + 1..j].iter().collect(), j)
                };
                i = next;
                if c == '%' {
                    Tok::Local(name)
                } else {
                    Tok::Global(name)
                }
            }
            '!' => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                let name: String = chars[i + 1..j].iter().collect();
                i = j;
                Tok::Metadata(name)
            }
            '#' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let name: String = chars[i + 1..j].iter().collect();
                i = j;
                Tok::AttrGroup(name)
            }
            '"' => {
                let (s, next) = read_quoted(&chars, i)
                    .ok_or_else(|| err(column, "unterminated string".into()))?;
                i = next;
                Tok::Str(s)
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                i += 3;
                Tok::Ellipsis
            }
            c if c.is_ascii_digit()
                || ((c == '-' || c == '+')
                    && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric()
                        || chars[j] == '.'
                        || ((chars[j] == '+' || chars[j] == '-')
                            && matches!(chars[j - 1], 'e' | 'E')))
                {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                i = j;
                Tok::Number(s)
            }
            c if c.is_ascii_alphabetic() || c == '_' || c == '$' => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                let w: String = chars[i..j].iter().collect();
                // `c"..."` string constants
                if w == "c" && chars.get(j) == Some(&'"') {
                    let (s, next) = read_quoted(&chars, j)
                        .ok_or_else(|| err(column, "unterminated string".into()))?;
                    i = next;
                    Tok::Str(format!("c\"{s}\""))
                } else {
                    i = j;
                    Tok::Word(w)
                }
            }
            ',' | '=' | '*' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | ':' | '|' => {
                i += 1;
                Tok::Punct(c)
            }
            other => return Err(err(column, format!("unexpected character `{other}`"))),
        };
        out.push(Token { tok, column });
    }
    Ok(out)
}
