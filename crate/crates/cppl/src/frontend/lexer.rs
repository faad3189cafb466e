//! Hand-rolled lexer. Tracks line/column for error reporting.

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    UpIdent(String),
    Int(i64),
    Float(f64),
    Str(String),
    // keywords
    Lam,
    Let,
    In,
    Recursive,
    Match,
    With,
    Then,
    Else,
    If,
    True,
    False,
    Assume,
    Observe,
    Weight,
    Resample,
    Type,
    Con,
    // punctuation
    Dot,
    Eq,
    Semi,
    Colon,
    Comma,
    Arrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! push {
        ($tok:expr, $pos:expr) => {
            out.push(Spanned { tok: $tok, pos: $pos })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '-' if i + 1 < chars.len() && chars[i + 1] == '-' => {
                // line comment
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '-' if i + 1 < chars.len() && (chars[i + 1].is_ascii_digit() || chars[i + 1] == '.') => {
                let (tok, adv) = lex_number(&chars[i..], pos)?;
                push!(tok, pos);
                i += adv;
                col += adv;
            }
            '-' if i + 1 < chars.len() && chars[i + 1] == '>' => {
                push!(Tok::Arrow, pos);
                i += 2;
                col += 2;
            }
            c if c.is_ascii_digit() => {
                let (tok, adv) = lex_number(&chars[i..], pos)?;
                push!(tok, pos);
                i += adv;
                col += adv;
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                while j < chars.len() && chars[j] != '"' {
                    if chars[j] == '\n' {
                        return Err(ParseError::new(pos.line, pos.col, "unterminated string"));
                    }
                    s.push(chars[j]);
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(ParseError::new(pos.line, pos.col, "unterminated string"));
                }
                let adv = j + 1 - i;
                push!(Tok::Str(s), pos);
                i += adv;
                col += adv;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric() || chars[j] == '_' || chars[j] == '\'')
                {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let adv = j - i;
                let tok = match word.as_str() {
                    "lam" => Tok::Lam,
                    "let" => Tok::Let,
                    "in" => Tok::In,
                    "recursive" => Tok::Recursive,
                    "match" => Tok::Match,
                    "with" => Tok::With,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "if" => Tok::If,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "assume" => Tok::Assume,
                    "observe" => Tok::Observe,
                    "weight" => Tok::Weight,
                    "resample" => Tok::Resample,
                    "type" => Tok::Type,
                    "con" => Tok::Con,
                    _ => {
                        if word.chars().next().unwrap().is_ascii_uppercase() {
                            Tok::UpIdent(word)
                        } else {
                            Tok::Ident(word)
                        }
                    }
                };
                push!(tok, pos);
                i += adv;
                col += adv;
            }
            '.' => {
                push!(Tok::Dot, pos);
                i += 1;
                col += 1;
            }
            '=' => {
                push!(Tok::Eq, pos);
                i += 1;
                col += 1;
            }
            ';' => {
                push!(Tok::Semi, pos);
                i += 1;
                col += 1;
            }
            ':' => {
                push!(Tok::Colon, pos);
                i += 1;
                col += 1;
            }
            ',' => {
                push!(Tok::Comma, pos);
                i += 1;
                col += 1;
            }
            '(' => {
                push!(Tok::LParen, pos);
                i += 1;
                col += 1;
            }
            ')' => {
                push!(Tok::RParen, pos);
                i += 1;
                col += 1;
            }
            '[' => {
                push!(Tok::LBracket, pos);
                i += 1;
                col += 1;
            }
            ']' => {
                push!(Tok::RBracket, pos);
                i += 1;
                col += 1;
            }
            '{' => {
                push!(Tok::LBrace, pos);
                i += 1;
                col += 1;
            }
            '}' => {
                push!(Tok::RBrace, pos);
                i += 1;
                col += 1;
            }
            c => {
                return Err(ParseError::new(
                    pos.line,
                    pos.col,
                    format!("unexpected character '{}'", c),
                ))
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

/// Lexes an integer or float, with optional leading minus, fraction, and
/// exponent. `1.` and `1.0` are both floats; `1` is an integer.
fn lex_number(chars: &[char], pos: Pos) -> Result<(Tok, usize), ParseError> {
    let mut j = 0;
    if chars[j] == '-' {
        j += 1;
    }
    while j < chars.len() && chars[j].is_ascii_digit() {
        j += 1;
    }
    let mut is_float = false;
    if j < chars.len() && chars[j] == '.' {
        // distinguish `1.5`/`1.` from a method-like `1.foo` (not valid anyway)
        is_float = true;
        j += 1;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
    }
    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
        let mut k = j + 1;
        if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_digit() {
            is_float = true;
            j = k;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
        }
    }
    let text: String = chars[..j].iter().collect();
    if is_float {
        let v: f64 = text
            .parse()
            .map_err(|_| ParseError::new(pos.line, pos.col, format!("bad float literal '{}'", text)))?;
        Ok((Tok::Float(v), j))
    } else {
        let v: i64 = text
            .parse()
            .map_err(|_| ParseError::new(pos.line, pos.col, format!("bad int literal '{}'", text)))?;
        Ok((Tok::Int(v), j))
    }
}
