//! Tokenizer shared by the schema and ASG text formats.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Number(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Dot,
    Arrow,
    Minus,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Number(n) => write!(f, "number `{n}`"),
            TokenKind::Str(s) => write!(f, "string {s:?}"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::LBracket => f.write_str("`[`"),
            TokenKind::RBracket => f.write_str("`]`"),
            TokenKind::Semi => f.write_str("`;`"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::Arrow => f.write_str("`->`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::EqEq => f.write_str("`==`"),
            TokenKind::NotEq => f.write_str("`!=`"),
            TokenKind::Lt => f.write_str("`<`"),
            TokenKind::Le => f.write_str("`<=`"),
            TokenKind::Gt => f.write_str("`>`"),
            TokenKind::Ge => f.write_str("`>=`"),
            TokenKind::AndAnd => f.write_str("`&&`"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

struct Scanner<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: u32,
    col: u32,
}

impl<'a> Scanner<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next();
        if let Some((_, c)) = next {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        next
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }
}

/// Splits `src` into tokens. The last token is always [`TokenKind::Eof`].
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut sc = Scanner {
        chars: src.char_indices().peekable(),
        src,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();

    while let Some(c) = sc.peek() {
        let span = Span::new(sc.line, sc.col);
        if c.is_whitespace() {
            sc.bump();
            continue;
        }
        if c == '/' && sc.peek2() == Some('/') {
            while let Some(c) = sc.peek() {
                if c == '\n' {
                    break;
                }
                sc.bump();
            }
            continue;
        }
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            let start = sc.offset();
            while matches!(sc.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                sc.bump();
            }
            let end = sc.offset();
            TokenKind::Ident(src[start..end].to_string())
        } else if c.is_ascii_digit() {
            lex_number(&mut sc, span)?
        } else if c == '"' {
            lex_string(&mut sc, span)?
        } else {
            sc.bump();
            let two = |sc: &mut Scanner<'_>, next: char, yes: TokenKind, no: TokenKind| {
                if sc.peek() == Some(next) {
                    sc.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                '{' => TokenKind::LBrace,
                '}' => TokenKind::RBrace,
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                '[' => TokenKind::LBracket,
                ']' => TokenKind::RBracket,
                ';' => TokenKind::Semi,
                ':' => TokenKind::Colon,
                ',' => TokenKind::Comma,
                '.' => TokenKind::Dot,
                '-' => two(&mut sc, '>', TokenKind::Arrow, TokenKind::Minus),
                '<' => two(&mut sc, '=', TokenKind::Le, TokenKind::Lt),
                '>' => two(&mut sc, '=', TokenKind::Ge, TokenKind::Gt),
                '=' if sc.peek() == Some('=') => {
                    sc.bump();
                    TokenKind::EqEq
                }
                '!' if sc.peek() == Some('=') => {
                    sc.bump();
                    TokenKind::NotEq
                }
                '&' if sc.peek() == Some('&') => {
                    sc.bump();
                    TokenKind::AndAnd
                }
                other => {
                    return Err(LexError {
                        span,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            }
        };
        out.push(Token { kind, span });
    }

    out.push(Token {
        kind: TokenKind::Eof,
        span: Span::new(sc.line, sc.col),
    });
    Ok(out)
}

fn lex_number(sc: &mut Scanner<'_>, span: Span) -> Result<TokenKind, LexError> {
    let start = sc.offset();
    let digits = |sc: &mut Scanner<'_>| {
        while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            sc.bump();
        }
    };
    digits(sc);
    if sc.peek() == Some('.') && matches!(sc.peek2(), Some(c) if c.is_ascii_digit()) {
        sc.bump();
        digits(sc);
    }
    if matches!(sc.peek(), Some('e' | 'E')) {
        let exp_ok = match sc.peek2() {
            Some(c) if c.is_ascii_digit() => true,
            Some('+' | '-') => {
                let mut it = sc.chars.clone();
                it.next();
                it.next();
                matches!(it.next(), Some((_, c)) if c.is_ascii_digit())
            }
            _ => false,
        };
        if exp_ok {
            sc.bump();
            if matches!(sc.peek(), Some('+' | '-')) {
                sc.bump();
            }
            digits(sc);
        }
    }
    let end = sc.offset();
    let text = &sc.src[start..end];
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(TokenKind::Number(v)),
        _ => Err(LexError {
            span,
            message: format!("number `{text}` is out of range"),
        }),
    }
}

fn lex_string(sc: &mut Scanner<'_>, span: Span) -> Result<TokenKind, LexError> {
    sc.bump();
    let mut s = String::new();
    loop {
        match sc.bump() {
            Some((_, '"')) => return Ok(TokenKind::Str(s)),
            Some((_, '\\')) => match sc.bump() {
                Some((_, '"')) => s.push('"'),
                Some((_, '\\')) => s.push('\\'),
                Some((_, 'n')) => s.push('\n'),
                Some((_, c)) => {
                    return Err(LexError {
                        span,
                        message: format!("unknown escape `\\{c}` in string"),
                    })
                }
                None => break,
            },
            Some((_, '\n')) | None => break,
            Some((_, c)) => s.push(c),
        }
    }
    Err(LexError {
        span,
        message: "unterminated string literal".into(),
    })
}

/// Quotes `s` so that [`tokenize`] reads it back as the same string.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Cursor over a token vector with the usual peek/expect helpers.
pub(crate) struct TokenStream {
    tokens: Vec<Token>,
    pos: usize,
}

impl TokenStream {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenStream { tokens, pos: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    pub fn next(&mut self) -> Token {
        let tok = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    pub fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    pub fn eat(&mut self, kind: &TokenKind) -> bool {
        if &self.peek().kind == kind {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == kw)
    }

    pub fn expect(&mut self, kind: &TokenKind) -> Result<Token, LexError> {
        if &self.peek().kind == kind {
            Ok(self.next())
        } else {
            let tok = self.peek();
            Err(LexError {
                span: tok.span,
                message: format!("expected {kind}, found {}", tok.kind),
            })
        }
    }

    pub fn expect_ident(&mut self, what: &str) -> Result<(String, Span), LexError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Ident(name) => {
                self.next();
                Ok((name, tok.span))
            }
            other => Err(LexError {
                span: tok.span,
                message: format!("expected {what}, found {other}"),
            }),
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<Span, LexError> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Ident(s) if s == kw => {
                self.next();
                Ok(tok.span)
            }
            other => Err(LexError {
                span: tok.span,
                message: format!("expected `{kw}`, found {other}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(
            kinds("a->b // trailing\n<= >= == != && - <"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Arrow,
                TokenKind::Ident("b".into()),
                TokenKind::Le,
                TokenKind::Ge,
                TokenKind::EqEq,
                TokenKind::NotEq,
                TokenKind::AndAnd,
                TokenKind::Minus,
                TokenKind::Lt,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("20 0.5 1e3 2.5E-1"),
            vec![
                TokenKind::Number(20.0),
                TokenKind::Number(0.5),
                TokenKind::Number(1000.0),
                TokenKind::Number(0.25),
                TokenKind::Eof
            ]
        );
        // `1.` is a number followed by a dot, `1e` an identifier tail.
        assert_eq!(
            kinds("1.x"),
            vec![
                TokenKind::Number(1.0),
                TokenKind::Dot,
                TokenKind::Ident("x".into()),
                TokenKind::Eof
            ]
        );
        assert!(tokenize("1e999").is_err());
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("a\n  b").unwrap();
        assert_eq!(toks[0].span, Span::new(1, 1));
        assert_eq!(toks[1].span, Span::new(2, 3));
    }

    #[test]
    fn string_quoting_round_trips() {
        let s = "P2-1 \"quoted\" \\ back";
        let toks = tokenize(&quote(s)).unwrap();
        assert_eq!(toks[0].kind, TokenKind::Str(s.to_string()));
    }

    #[test]
    fn bad_input_is_located() {
        let err = tokenize("ok\n  $").unwrap_err();
        assert_eq!(err.span, Span::new(2, 3));
        let err = tokenize("\"open").unwrap_err();
        assert_eq!(err.span, Span::new(1, 1));
    }
}
