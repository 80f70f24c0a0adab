//! A small C/C++ tokenizer. It understands comments, string and character
//! literals (including raw strings and encoding prefixes), line splices and
//! preprocessor directives, which is all the construct detectors need.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    /// Text is the literal body as written, without quotes or prefix.
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub in_directive: bool,
}

impl Token {
    pub fn is_ident(&self, s: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == s
    }

    pub fn is_punct(&self, s: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Include {
    pub header: String,
    pub angled: bool,
    pub line: u32,
}

#[derive(Debug, Default, Clone)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub includes: Vec<Include>,
}

const STRING_PREFIXES: &[&str] = &["L", "u", "U", "u8"];
const RAW_PREFIXES: &[&str] = &["R", "LR", "uR", "UR", "u8R"];

pub fn lex(src: &str) -> Lexed {
    Lexer::new(src).run()
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    line_start: bool,
    in_directive: bool,
    out: Lexed,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'$' || b >= 0x80
}

fn is_ident_continue(b: u8) -> bool {
    is_ident_start(b) || b.is_ascii_digit()
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            line_start: true,
            in_directive: false,
            out: Lexed::default(),
        }
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn slice(&self, start: usize, end: usize) -> String {
        String::from_utf8_lossy(&self.src[start..end]).into_owned()
    }

    fn push(&mut self, kind: TokenKind, text: String, line: u32) {
        self.out.tokens.push(Token {
            kind,
            text,
            line,
            in_directive: self.in_directive,
        });
        self.line_start = false;
    }

    /// Consumes a backslash-newline splice if one starts here.
    fn splice(&mut self) -> bool {
        if self.peek(0) != Some(b'\\') {
            return false;
        }
        match (self.peek(1), self.peek(2)) {
            (Some(b'\n'), _) => {
                self.pos += 2;
                self.line += 1;
                true
            }
            (Some(b'\r'), Some(b'\n')) => {
                self.pos += 3;
                self.line += 1;
                true
            }
            _ => false,
        }
    }

    fn run(mut self) -> Lexed {
        while let Some(b) = self.peek(0) {
            if self.splice() {
                continue;
            }
            match b {
                b'\n' => {
                    self.pos += 1;
                    self.line += 1;
                    self.line_start = true;
                    self.in_directive = false;
                }
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'/' if self.peek(1) == Some(b'/') => self.line_comment(),
                b'/' if self.peek(1) == Some(b'*') => self.block_comment(),
                b'#' if self.line_start => {
                    let line = self.line;
                    self.pos += 1;
                    self.in_directive = true;
                    self.push(TokenKind::Punct, "#".into(), line);
                    self.directive_head();
                }
                b'"' => {
                    self.pos += 1;
                    self.quoted(b'"', TokenKind::Str);
                }
                b'\'' => {
                    self.pos += 1;
                    self.quoted(b'\'', TokenKind::Char);
                }
                b'0'..=b'9' => self.number(),
                b'.' if self.peek(1).is_some_and(|c| c.is_ascii_digit()) => self.number(),
                _ if is_ident_start(b) => self.ident_or_prefixed(),
                b':' if self.peek(1) == Some(b':') => {
                    let line = self.line;
                    self.pos += 2;
                    self.push(TokenKind::Punct, "::".into(), line);
                }
                _ => {
                    let line = self.line;
                    self.pos += 1;
                    self.push(TokenKind::Punct, (b as char).to_string(), line);
                }
            }
        }
        self.out
    }

    fn line_comment(&mut self) {
        self.pos += 2;
        while let Some(b) = self.peek(0) {
            if self.splice() {
                continue;
            }
            if b == b'\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn block_comment(&mut self) {
        self.pos += 2;
        while let Some(b) = self.peek(0) {
            if b == b'*' && self.peek(1) == Some(b'/') {
                self.pos += 2;
                return;
            }
            if b == b'\n' {
                self.line += 1;
            }
            self.pos += 1;
        }
    }

    /// Reads a quoted literal body after the opening quote. Unterminated
    /// literals end at the newline, like compilers recover.
    fn quoted(&mut self, quote: u8, kind: TokenKind) {
        let line = self.line;
        let start = self.pos;
        let mut end = start;
        while let Some(b) = self.peek(0) {
            if self.splice() {
                continue;
            }
            match b {
                b'\\' => {
                    self.pos += if self.peek(1).is_some() { 2 } else { 1 };
                    end = self.pos;
                }
                b'\n' => break,
                _ if b == quote => {
                    end = self.pos;
                    self.pos += 1;
                    break;
                }
                _ => {
                    self.pos += 1;
                    end = self.pos;
                }
            }
        }
        let text = self.slice(start, end).replace("\\\r\n", "").replace("\\\n", "");
        self.push(kind, text, line);
    }

    /// `R"delim( ... )delim"`, positioned just after the opening quote.
    fn raw_string(&mut self) {
        let line = self.line;
        let delim_start = self.pos;
        while let Some(b) = self.peek(0) {
            if b == b'(' || b == b'\n' || b == b'"' {
                break;
            }
            self.pos += 1;
        }
        if self.peek(0) != Some(b'(') {
            // Not a valid raw string; treat what follows as an ordinary literal.
            self.pos = delim_start;
            self.quoted(b'"', TokenKind::Str);
            return;
        }
        let mut closing = vec![b')'];
        closing.extend_from_slice(&self.src[delim_start..self.pos]);
        closing.push(b'"');
        self.pos += 1;
        let body_start = self.pos;
        let body_end = match self.src[self.pos..]
            .windows(closing.len())
            .position(|w| w == closing.as_slice())
        {
            Some(off) => body_start + off,
            None => self.src.len(),
        };
        self.line += self.src[body_start..body_end]
            .iter()
            .filter(|&&b| b == b'\n')
            .count() as u32;
        self.pos = (body_end + closing.len()).min(self.src.len());
        let text = self.slice(body_start, body_end);
        self.push(TokenKind::Str, text, line);
    }

    fn number(&mut self) {
        let line = self.line;
        let start = self.pos;
        while let Some(b) = self.peek(0) {
            let exp_sign = (b == b'+' || b == b'-')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E' | b'p' | b'P');
            // C++14 digit separator
            let separator = b == b'\'' && self.peek(1).is_some_and(|c| c.is_ascii_alphanumeric());
            if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exp_sign || separator {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = self.slice(start, self.pos);
        self.push(TokenKind::Number, text, line);
    }

    fn ident_or_prefixed(&mut self) {
        let line = self.line;
        let start = self.pos;
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
        let word = self.slice(start, self.pos);
        match self.peek(0) {
            Some(b'"') if RAW_PREFIXES.contains(&word.as_str()) => {
                self.pos += 1;
                self.raw_string();
            }
            Some(b'"') if STRING_PREFIXES.contains(&word.as_str()) => {
                self.pos += 1;
                self.quoted(b'"', TokenKind::Str);
            }
            Some(b'\'') if STRING_PREFIXES.contains(&word.as_str()) => {
                self.pos += 1;
                self.quoted(b'\'', TokenKind::Char);
            }
            _ => self.push(TokenKind::Ident, word, line),
        }
    }

    fn skip_inline_space(&mut self) {
        loop {
            if self.splice() {
                continue;
            }
            match self.peek(0) {
                Some(b' ' | b'\t') => self.pos += 1,
                Some(b'/') if self.peek(1) == Some(b'*') => self.block_comment(),
                _ => break,
            }
        }
    }

    /// After `#`: reads the directive name and, for includes, the header
    /// operand (which is recorded separately rather than tokenized).
    fn directive_head(&mut self) {
        self.skip_inline_space();
        if !self.peek(0).is_some_and(is_ident_start) {
            return;
        }
        let line = self.line;
        let start = self.pos;
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
        let name = self.slice(start, self.pos);
        let is_include = matches!(name.as_str(), "include" | "include_next" | "import");
        self.push(TokenKind::Ident, name, line);
        if !is_include {
            return;
        }
        self.skip_inline_space();
        let (close, angled) = match self.peek(0) {
            Some(b'<') => (b'>', true),
            Some(b'"') => (b'"', false),
            _ => return,
        };
        self.pos += 1;
        let hstart = self.pos;
        while let Some(b) = self.peek(0) {
            if b == close || b == b'\n' {
                break;
            }
            self.pos += 1;
        }
        let header = self.slice(hstart, self.pos).trim().to_string();
        if self.peek(0) == Some(close) {
            self.pos += 1;
        }
        self.out.includes.push(Include {
            header,
            angled,
            line,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).tokens.into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn comments_are_dropped() {
        let toks = texts("a // throw\n/* try { } */ b");
        assert_eq!(toks, vec!["a", "b"]);
    }

    #[test]
    fn strings_are_single_tokens() {
        let l = lex(r#"x = "a \"throw\" b"; c = 'x';"#);
        let strs: Vec<_> = l.tokens.iter().filter(|t| t.kind == TokenKind::Str).collect();
        assert_eq!(strs.len(), 1);
        assert_eq!(strs[0].text, r#"a \"throw\" b"#);
        assert!(l.tokens.iter().any(|t| t.kind == TokenKind::Char && t.text == "x"));
        assert!(!l.tokens.iter().any(|t| t.is_ident("throw")));
    }

    #[test]
    fn raw_string_with_delimiter() {
        let l = lex("auto s = R\"xy(throw \"q\" )\n)xy\"; next");
        let s = l.tokens.iter().find(|t| t.kind == TokenKind::Str).unwrap();
        assert_eq!(s.text, "throw \"q\" )\n");
        let next = l.tokens.iter().find(|t| t.is_ident("next")).unwrap();
        assert_eq!(next.line, 2);
    }

    #[test]
    fn prefixed_literals() {
        let l = lex(r#"L"wide" u8"utf" U'c'"#);
        let kinds: Vec<_> = l.tokens.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, vec![TokenKind::Str, TokenKind::Str, TokenKind::Char]);
    }

    #[test]
    fn includes_recorded() {
        let l = lex("#include <thread>\n  #  include \"data/x.h\"\nint y;");
        assert_eq!(
            l.includes,
            vec![
                Include { header: "thread".into(), angled: true, line: 1 },
                Include { header: "data/x.h".into(), angled: false, line: 2 },
            ]
        );
        assert!(!l.tokens.iter().any(|t| t.kind == TokenKind::Str));
        let y = l.tokens.iter().find(|t| t.is_ident("y")).unwrap();
        assert!(!y.in_directive);
        assert_eq!(y.line, 3);
    }

    #[test]
    fn directive_continues_over_splice() {
        let l = lex("#define X \\\n  throw\nint z;");
        let t = l.tokens.iter().find(|t| t.is_ident("throw")).unwrap();
        assert!(t.in_directive);
        assert_eq!(t.line, 2);
        assert!(!l.tokens.iter().find(|t| t.is_ident("z")).unwrap().in_directive);
    }

    #[test]
    fn digit_separators_and_exponents() {
        assert_eq!(texts("1'000'000 + 1e-5 + 0x1p+3"), vec!["1'000'000", "+", "1e-5", "+", "0x1p+3"]);
    }

    #[test]
    fn scope_operator() {
        assert_eq!(texts("std::thread t;"), vec!["std", "::", "thread", "t", ";"]);
    }

    #[test]
    fn unterminated_string_stops_at_newline() {
        let l = lex("\"abc\nint q;");
        assert!(l.tokens.iter().any(|t| t.is_ident("q") && t.line == 2));
    }
}
