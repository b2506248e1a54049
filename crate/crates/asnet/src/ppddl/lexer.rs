//! Tokenizer for PPDDL s-expressions. Identifiers are case-insensitive and
//! normalized to lower case; `;` starts a comment running to end of line.

use super::SrcPos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokKind {
    LParen,
    RParen,
    Sym(String),
}

#[derive(Debug, Clone)]
pub struct Tok {
    pub kind: TokKind,
    pub pos: SrcPos,
}

pub fn lex(text: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = SrcPos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                chars.next();
                col += 1;
                toks.push(Tok { kind: TokKind::LParen, pos });
            }
            ')' => {
                chars.next();
                col += 1;
                toks.push(Tok { kind: TokKind::RParen, pos });
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.extend(c.to_lowercase());
                    chars.next();
                    col += 1;
                }
                toks.push(Tok { kind: TokKind::Sym(s), pos });
            }
        }
    }
    toks
}
