use super::DslError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    /// `@fresh3`
    Fresh(String),
    /// `?n1`
    LNull(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    Eq,
    Ne,
    Arrow,
    LArrow,
    Star,
    Bar,
    Amp,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number {s}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Fresh(s) => format!("`{s}`"),
            Tok::LNull(s) => format!("`?{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::LArrow => "`<-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn lex(src: &str) -> Result<Vec<Spanned>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut k, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |pos: Pos, expected: &str, found: String| DslError::Syntax {
        line: pos.line,
        col: pos.col,
        expected: expected.into(),
        found,
    };
    while k < chars.len() {
        let c = chars[k];
        let pos = Pos { line, col };
        let advance = |n: usize, k: &mut usize, col: &mut usize| {
            *k += n;
            *col += n;
        };
        match c {
            '\n' => {
                k += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut k, &mut col),
            '#' => {
                while k < chars.len() && chars[k] != '\n' {
                    k += 1;
                }
            }
            '"' => {
                let mut text = String::new();
                let mut j = k + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => return Err(err(pos, "closing `\"`", "end of line".into())),
                        Some('"') => break,
                        Some('\\') => {
                            let e = match chars.get(j + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                other => {
                                    return Err(err(
                                        Pos { line, col: col + (j - k) },
                                        "escape sequence",
                                        format!("{other:?}"),
                                    ))
                                }
                            };
                            text.push(e);
                            j += 2;
                        }
                        Some(&c) => {
                            text.push(c);
                            j += 1;
                        }
                    }
                }
                out.push(Spanned { tok: Tok::Str(text), pos });
                advance(j + 1 - k, &mut k, &mut col);
            }
            '?' => {
                let mut j = k + 1;
                while j < chars.len() && ident_char(chars[j]) {
                    j += 1;
                }
                if j == k + 1 {
                    return Err(err(pos, "null label after `?`", describe_char(chars.get(j))));
                }
                out.push(Spanned { tok: Tok::LNull(chars[k + 1..j].iter().collect()), pos });
                advance(j - k, &mut k, &mut col);
            }
            '@' => {
                let mut j = k + 1;
                while j < chars.len() && ident_char(chars[j]) {
                    j += 1;
                }
                let text: String = chars[k..j].iter().collect();
                let digits = text.strip_prefix("@fresh").filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()));
                if digits.is_none() {
                    return Err(err(pos, "fresh constant `@fresh<k>`", format!("`{text}`")));
                }
                out.push(Spanned { tok: Tok::Fresh(text), pos });
                advance(j - k, &mut k, &mut col);
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(k + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut j = k + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                out.push(Spanned { tok: Tok::Number(chars[k..j].iter().collect()), pos });
                advance(j - k, &mut k, &mut col);
            }
            c if ident_start(c) => {
                let mut j = k + 1;
                while j < chars.len() && ident_char(chars[j]) {
                    j += 1;
                }
                out.push(Spanned { tok: Tok::Ident(chars[k..j].iter().collect()), pos });
                advance(j - k, &mut k, &mut col);
            }
            _ => {
                let two: String = chars[k..(k + 2).min(chars.len())].iter().collect();
                let (tok, n) = match two.as_str() {
                    "->" => (Tok::Arrow, 2),
                    "<-" => (Tok::LArrow, 2),
                    "!=" => (Tok::Ne, 2),
                    _ => match c {
                        '{' => (Tok::LBrace, 1),
                        '}' => (Tok::RBrace, 1),
                        '(' => (Tok::LParen, 1),
                        ')' => (Tok::RParen, 1),
                        '[' => (Tok::LBracket, 1),
                        ']' => (Tok::RBracket, 1),
                        ',' => (Tok::Comma, 1),
                        ';' => (Tok::Semi, 1),
                        ':' => (Tok::Colon, 1),
                        '.' => (Tok::Dot, 1),
                        '=' => (Tok::Eq, 1),
                        '*' => (Tok::Star, 1),
                        '|' => (Tok::Bar, 1),
                        '&' => (Tok::Amp, 1),
                        other => return Err(err(pos, "a token", format!("`{other}`"))),
                    },
                };
                out.push(Spanned { tok, pos });
                advance(n, &mut k, &mut col);
            }
        }
    }
    out.push(Spanned { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

fn describe_char(c: Option<&char>) -> String {
    match c {
        None => "end of input".into(),
        Some(c) => format!("`{c}`"),
    }
}
