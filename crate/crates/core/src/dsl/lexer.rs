use super::{CompareOp, DslError, DslErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Param(String),
    Op(CompareOp),
    LParen,
    RParen,
    Comma,
    Colon,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub(super) fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, column, msg: String| DslError { kind: DslErrorKind::Syntax(msg), line, column };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            *i += n;
            col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i),
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(1, &mut i);
                }
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, line: tl, column: tc });
                advance(1, &mut i);
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, line: tl, column: tc });
                advance(1, &mut i);
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, line: tl, column: tc });
                advance(1, &mut i);
            }
            ':' => {
                out.push(Token { tok: Tok::Colon, line: tl, column: tc });
                advance(1, &mut i);
            }
            '=' | '!' | '<' | '>' | '≠' | '≤' | '≥' => {
                let next = chars.get(i + 1).copied();
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (CompareOp::Eq, 2),
                    ('=', _) => (CompareOp::Eq, 1),
                    ('!', Some('=')) => (CompareOp::Ne, 2),
                    ('<', Some('>')) => (CompareOp::Ne, 2),
                    ('<', Some('=')) => (CompareOp::Le, 2),
                    ('<', _) => (CompareOp::Lt, 1),
                    ('>', Some('=')) => (CompareOp::Ge, 2),
                    ('>', _) => (CompareOp::Gt, 1),
                    ('≠', _) => (CompareOp::Ne, 1),
                    ('≤', _) => (CompareOp::Le, 1),
                    ('≥', _) => (CompareOp::Ge, 1),
                    _ => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
                };
                out.push(Token { tok: Tok::Op(op), line: tl, column: tc });
                advance(len, &mut i);
            }
            '\'' | '"' => {
                let quote = c;
                let mut s = String::new();
                advance(1, &mut i);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(tl, tc, "unterminated string literal".into())),
                        Some(&ch) if ch == quote => {
                            advance(1, &mut i);
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i);
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), line: tl, column: tc });
            }
            '$' => {
                advance(1, &mut i);
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i);
                }
                if start == i || chars[start].is_ascii_digit() {
                    return Err(err(tl, tc, "expected parameter name after `$`".into()));
                }
                out.push(Token { tok: Tok::Param(chars[start..i].iter().collect()), line: tl, column: tc });
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())) => {
                let start = i;
                advance(1, &mut i);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i);
                }
                if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
                    advance(1, &mut i);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(1, &mut i);
                    }
                }
                out.push(Token { tok: Tok::Number(chars[start..i].iter().collect()), line: tl, column: tc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i);
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, column: tc });
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}
