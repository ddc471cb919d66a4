use crate::error::SqlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Int(i64),
    Decimal(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    NotEq,
    Lt,
    Gt,
    LtEq,
    GtEq,
    Semicolon,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    Distinct,
    From,
    Where,
    Group,
    Order,
    By,
    Asc,
    Desc,
    And,
    Or,
    Not,
    Between,
    In,
    Like,
    As,
    Null,
    /// Recognized so the parser can report it by name; never accepted.
    Unsupported(&'static str),
}

const UNSUPPORTED: &[&str] = &[
    "JOIN",
    "INNER",
    "LEFT",
    "RIGHT",
    "OUTER",
    "CROSS",
    "ON",
    "LIMIT",
    "OFFSET",
    "HAVING",
    "UNION",
    "INTERSECT",
    "EXCEPT",
    "WITH",
    "CASE",
    "WHEN",
    "THEN",
    "ELSE",
    "END",
    "IS",
    "EXISTS",
    "CAST",
    "INSERT",
    "UPDATE",
    "DELETE",
    "CREATE",
    "DROP",
    "ALTER",
    "ESCAPE",
    "GLOB",
    "COLLATE",
];

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        let upper = word.to_ascii_uppercase();
        let kw = match upper.as_str() {
            "SELECT" => Keyword::Select,
            "DISTINCT" => Keyword::Distinct,
            "FROM" => Keyword::From,
            "WHERE" => Keyword::Where,
            "GROUP" => Keyword::Group,
            "ORDER" => Keyword::Order,
            "BY" => Keyword::By,
            "ASC" => Keyword::Asc,
            "DESC" => Keyword::Desc,
            "AND" => Keyword::And,
            "OR" => Keyword::Or,
            "NOT" => Keyword::Not,
            "BETWEEN" => Keyword::Between,
            "IN" => Keyword::In,
            "LIKE" => Keyword::Like,
            "AS" => Keyword::As,
            "NULL" => Keyword::Null,
            other => {
                return UNSUPPORTED.iter().find(|u| **u == other).map(|u| Keyword::Unsupported(u));
            }
        };
        Some(kw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset into the source.
    pub pos: usize,
    /// Source text of the token, used in error messages.
    pub text: String,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    let byte_at = |i: usize| chars.get(i).map(|c| c.0).unwrap_or(src.len());
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            '(' => {
                i += 1;
                TokenKind::LParen
            }
            ')' => {
                i += 1;
                TokenKind::RParen
            }
            ',' => {
                i += 1;
                TokenKind::Comma
            }
            '*' => {
                i += 1;
                TokenKind::Star
            }
            '+' => {
                i += 1;
                TokenKind::Plus
            }
            '-' => {
                i += 1;
                TokenKind::Minus
            }
            '/' => {
                i += 1;
                TokenKind::Slash
            }
            '%' => {
                i += 1;
                TokenKind::Percent
            }
            ';' => {
                i += 1;
                TokenKind::Semicolon
            }
            '=' => {
                i += 1;
                if chars.get(i).map(|c| c.1) == Some('=') {
                    i += 1;
                }
                TokenKind::Eq
            }
            '!' => {
                if chars.get(i + 1).map(|c| c.1) == Some('=') {
                    i += 2;
                    TokenKind::NotEq
                } else {
                    return Err(SqlError::parse("unexpected character", "!", pos));
                }
            }
            '<' => match chars.get(i + 1).map(|c| c.1) {
                Some('=') => {
                    i += 2;
                    TokenKind::LtEq
                }
                Some('>') => {
                    i += 2;
                    TokenKind::NotEq
                }
                _ => {
                    i += 1;
                    TokenKind::Lt
                }
            },
            '>' => {
                if chars.get(i + 1).map(|c| c.1) == Some('=') {
                    i += 2;
                    TokenKind::GtEq
                } else {
                    i += 1;
                    TokenKind::Gt
                }
            }
            '\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i).map(|c| c.1) {
                        None => return Err(SqlError::parse("unterminated string literal", "'", pos)),
                        Some('\'') => {
                            if chars.get(i + 1).map(|c| c.1) == Some('\'') {
                                s.push('\'');
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                TokenKind::Str(s)
            }
            '"' | '`' => {
                let close = c;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i).map(|c| c.1) {
                        None => return Err(SqlError::parse("unterminated quoted identifier", &c.to_string(), pos)),
                        Some(ch) if ch == close => {
                            i += 1;
                            break;
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                TokenKind::Ident(s)
            }
            '.' if chars.get(i + 1).map(|c| c.1.is_ascii_digit()).unwrap_or(false) => lex_number(&chars, &mut i, src)?,
            '.' => {
                i += 1;
                TokenKind::Dot
            }
            d if d.is_ascii_digit() => lex_number(&chars, &mut i, src)?,
            a if a.is_alphabetic() || a == '_' => {
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let word = &src[pos..byte_at(i)];
                match Keyword::lookup(word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word.to_string()),
                }
            }
            other => return Err(SqlError::parse("unexpected character", &other.to_string(), pos)),
        };
        out.push(Token { kind, pos, text: src[pos..byte_at(i.max(start + 1))].to_string() });
    }
    out.push(Token { kind: TokenKind::Eof, pos: src.len(), text: String::from("<end of input>") });
    Ok(out)
}

fn lex_number(chars: &[(usize, char)], i: &mut usize, src: &str) -> Result<TokenKind, SqlError> {
    let start = *i;
    let pos = chars[start].0;
    let mut seen_dot = false;
    while *i < chars.len() {
        let ch = chars[*i].1;
        if ch.is_ascii_digit() {
            *i += 1;
        } else if ch == '.' && !seen_dot {
            seen_dot = true;
            *i += 1;
        } else {
            break;
        }
    }
    let end = chars.get(*i).map(|c| c.0).unwrap_or(src.len());
    let text = &src[pos..end];
    if let Some(next) = chars.get(*i) {
        if next.1.is_alphabetic() || next.1 == '_' {
            return Err(SqlError::parse("malformed number", &src[pos..=next.0], pos));
        }
    }
    if seen_dot {
        Ok(TokenKind::Decimal(text.to_string()))
    } else {
        text.parse::<i64>().map(TokenKind::Int).map_err(|_| SqlError::parse("integer literal out of range", text, pos))
    }
}
