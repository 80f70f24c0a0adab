//! Construct detectors. Each works on the token stream of one file and
//! reports the lines where its trigger was seen; an empty list means the
//! construct is absent.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::lexer::{Lexed, Token, TokenKind};

/// Aliases that name function-pointer types (`typedef R (*name)(..)`,
/// `using name = R (*)(..)`) or plain function types (`typedef R name(..)`).
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct TypedefTable {
    pub pointer_aliases: BTreeSet<String>,
    pub function_aliases: BTreeSet<String>,
}

impl TypedefTable {
    pub fn is_empty(&self) -> bool {
        self.pointer_aliases.is_empty() && self.function_aliases.is_empty()
    }

    pub fn merge(&mut self, other: TypedefTable) {
        self.pointer_aliases.extend(other.pointer_aliases);
        self.function_aliases.extend(other.function_aliases);
    }

    /// Collects aliases declared in one file.
    pub fn collect(&mut self, lexed: &Lexed) {
        let toks = &lexed.tokens;
        let mut i = 0;
        while i < toks.len() {
            if toks[i].is_ident("typedef") {
                let end = statement_end(toks, i + 1);
                self.typedef_decl(&toks[i + 1..end]);
                i = end;
            } else if toks[i].is_ident("using")
                && toks.get(i + 1).is_some_and(|t| t.kind == TokenKind::Ident)
                && toks.get(i + 2).is_some_and(|t| t.is_punct("="))
            {
                let end = statement_end(toks, i + 3);
                let name = toks[i + 1].text.clone();
                let rhs = &toks[i + 3..end];
                if is_syntactic_fn_ptr(rhs) {
                    self.pointer_aliases.insert(name);
                } else if is_function_type(rhs) {
                    self.function_aliases.insert(name);
                }
                i = end;
            } else {
                i += 1;
            }
        }
    }

    fn typedef_decl(&mut self, decl: &[Token]) {
        // Only declarators at brace depth 0 belong to the typedef itself.
        let mut depth = 0i32;
        let top: Vec<&Token> = decl
            .iter()
            .filter(|t| {
                if t.is_punct("{") {
                    depth += 1;
                    return false;
                }
                if t.is_punct("}") {
                    depth -= 1;
                    return false;
                }
                depth == 0
            })
            .collect();

        // `( [cc] * [quals] name ) (`
        let mut found_pointer = false;
        for i in 0..top.len() {
            if !top[i].is_punct("(") {
                continue;
            }
            let mut j = i + 1;
            while j < top.len() && top[j].kind == TokenKind::Ident && !top[j].is_punct("*") {
                j += 1;
            }
            if !top.get(j).is_some_and(|t| t.is_punct("*")) {
                continue;
            }
            j += 1;
            while top.get(j).is_some_and(|t| is_cv(t)) {
                j += 1;
            }
            if let (Some(name), Some(close), Some(open)) = (top.get(j), top.get(j + 1), top.get(j + 2)) {
                if name.kind == TokenKind::Ident
                    && close.is_punct(")")
                    && open.is_punct("(")
                {
                    self.pointer_aliases.insert(name.text.clone());
                    found_pointer = true;
                }
            }
        }
        if found_pointer {
            return;
        }
        // `R name ( params )`
        if let Some(p) = top.iter().position(|t| t.is_punct("(")) {
            if p >= 2 && top[p - 1].kind == TokenKind::Ident && !is_cv(top[p - 1]) {
                self.function_aliases.insert(top[p - 1].text.clone());
            }
        }
    }
}

fn is_cv(t: &Token) -> bool {
    t.is_ident("const") || t.is_ident("volatile") || t.is_ident("__restrict")
}

/// Index of the `;` closing the statement starting at `from` (or the end).
fn statement_end(toks: &[Token], from: usize) -> usize {
    let mut depth = 0i32;
    for (k, t) in toks.iter().enumerate().skip(from) {
        match t.text.as_str() {
            "{" | "(" | "[" if t.kind == TokenKind::Punct => depth += 1,
            "}" | ")" | "]" if t.kind == TokenKind::Punct => depth -= 1,
            ";" if t.kind == TokenKind::Punct && depth <= 0 => return k,
            _ => {}
        }
    }
    toks.len()
}

/// Index of the token closing the bracket opened at `open`.
fn matching(toks: &[Token], open: usize, left: &str, right: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        if t.text == left {
            depth += 1;
        } else if t.text == right {
            depth -= 1;
            if depth == 0 {
                return Some(k);
            }
        }
    }
    None
}

/// `R ( [Scope ::] * [cv] ) ( ...`: an abstract function-pointer declarator.
pub fn is_syntactic_fn_ptr(toks: &[Token]) -> bool {
    for i in 0..toks.len() {
        if !toks[i].is_punct("(") {
            continue;
        }
        let mut j = i + 1;
        while toks
            .get(j)
            .is_some_and(|t| t.kind == TokenKind::Ident || t.is_punct("::"))
        {
            j += 1;
        }
        if !toks.get(j).is_some_and(|t| t.is_punct("*")) {
            continue;
        }
        j += 1;
        while toks.get(j).is_some_and(is_cv) {
            j += 1;
        }
        if toks.get(j).is_some_and(|t| t.is_punct(")"))
            && toks.get(j + 1).is_some_and(|t| t.is_punct("("))
        {
            return true;
        }
    }
    false
}

/// `R ( params )` with no declarator parens, e.g. the RHS of `using f = void(int);`.
fn is_function_type(toks: &[Token]) -> bool {
    match toks.iter().position(|t| t.is_punct("(")) {
        Some(p) if p >= 1 => {
            toks[p - 1].kind == TokenKind::Ident
                && matching(toks, p, "(", ")") == Some(toks.len() - 1)
        }
        _ => false,
    }
}

fn dedup(mut lines: Vec<u32>) -> Vec<u32> {
    lines.sort_unstable();
    lines.dedup();
    lines
}

/// `try {` / `try :`, `catch (`, or any `throw`.
pub fn detect_exceptions(lexed: &Lexed) -> Vec<u32> {
    let toks = &lexed.tokens;
    let hits = toks
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            let next = toks.get(i + 1);
            if t.is_ident("try") {
                next.is_some_and(|n| n.is_punct("{") || n.is_punct(":"))
            } else if t.is_ident("catch") {
                next.is_some_and(|n| n.is_punct("("))
            } else {
                t.is_ident("throw")
            }
        })
        .map(|(_, t)| t.line)
        .collect();
    dedup(hits)
}

const CAST_KEYWORDS: &[&str] = &["static_cast", "reinterpret_cast"];

/// Keywords that may directly precede a parenthesized cast.
const CAST_CONTEXT_KEYWORDS: &[&str] = &["return", "case", "else", "throw", "co_return", "co_yield", "do"];

/// Casts whose target type is a function pointer.
pub fn detect_function_pointer_casts(lexed: &Lexed, table: &TypedefTable) -> Vec<u32> {
    let toks = &lexed.tokens;
    let mut hits = Vec::new();
    for i in 0..toks.len() {
        let t = &toks[i];
        if t.kind == TokenKind::Ident && CAST_KEYWORDS.contains(&t.text.as_str()) {
            if toks.get(i + 1).is_some_and(|n| n.is_punct("<")) {
                if let Some(close) = template_close(toks, i + 1) {
                    if is_fn_ptr_target(&toks[i + 2..close], table) {
                        hits.push(t.line);
                    }
                }
            }
            continue;
        }
        if !t.is_punct("(") || !paren_may_be_cast(toks, i) {
            continue;
        }
        let Some(close) = matching(toks, i, "(", ")") else {
            continue;
        };
        if close == i + 1 || !toks.get(close + 1).is_some_and(starts_operand) {
            continue;
        }
        if is_fn_ptr_target(&toks[i + 1..close], table) {
            hits.push(t.line);
        }
    }
    dedup(hits)
}

fn paren_may_be_cast(toks: &[Token], open: usize) -> bool {
    match open.checked_sub(1).map(|p| &toks[p]) {
        None => true,
        Some(prev) => match prev.kind {
            TokenKind::Ident => CAST_CONTEXT_KEYWORDS.contains(&prev.text.as_str()),
            TokenKind::Punct => !matches!(prev.text.as_str(), ")" | "]"),
            _ => false,
        },
    }
}

fn starts_operand(t: &Token) -> bool {
    match t.kind {
        TokenKind::Ident => !matches!(t.text.as_str(), "const" | "volatile"),
        TokenKind::Number | TokenKind::Str | TokenKind::Char => true,
        TokenKind::Punct => matches!(t.text.as_str(), "(" | "&" | "*" | "::" | "!" | "~"),
    }
}

/// Closing `>` of a template argument list opened at `open`, ignoring
/// angle brackets nested inside parentheses.
fn template_close(toks: &[Token], open: usize) -> Option<usize> {
    let mut angle = 0i32;
    let mut paren = 0i32;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text.as_str() {
            "(" => paren += 1,
            ")" => paren -= 1,
            "<" if paren == 0 => angle += 1,
            ">" if paren == 0 => {
                angle -= 1;
                if angle == 0 {
                    return Some(k);
                }
            }
            ";" | "{" | "}" => return None,
            _ => {}
        }
    }
    None
}

fn is_fn_ptr_target(ty: &[Token], table: &TypedefTable) -> bool {
    if is_syntactic_fn_ptr(ty) {
        return true;
    }
    let core: Vec<&Token> = ty
        .iter()
        .filter(|t| !is_cv(t) && !t.is_ident("typename"))
        .collect();
    // Qualified name followed by zero or more `*`.
    let stars = core.iter().rev().take_while(|t| t.is_punct("*")).count();
    let name_part = &core[..core.len() - stars];
    let Some(last) = name_part.last() else {
        return false;
    };
    let well_formed = name_part.iter().enumerate().all(|(k, t)| {
        let from_end = name_part.len() - 1 - k;
        if from_end.is_multiple_of(2) {
            t.kind == TokenKind::Ident
        } else {
            t.is_punct("::")
        }
    }) || (name_part.first().is_some_and(|t| t.is_punct("::"))
        && name_part[1..].iter().enumerate().all(|(k, t)| {
            if k.is_multiple_of(2) {
                t.kind == TokenKind::Ident
            } else {
                t.is_punct("::")
            }
        }));
    if !well_formed || last.kind != TokenKind::Ident {
        return false;
    }
    (stars == 0 && table.pointer_aliases.contains(&last.text))
        || (stars == 1 && table.function_aliases.contains(&last.text))
}

const THREAD_HEADERS: &[&str] = &["pthread.h", "thread"];

/// `<pthread.h>`, `<thread>`, `pthread_create` or `std::thread`.
pub fn detect_threads(lexed: &Lexed) -> Vec<u32> {
    let mut hits: Vec<u32> = lexed
        .includes
        .iter()
        .filter(|inc| inc.angled && THREAD_HEADERS.contains(&inc.header.as_str()))
        .map(|inc| inc.line)
        .collect();
    let toks = &lexed.tokens;
    for (i, t) in toks.iter().enumerate() {
        let std_thread = t.is_ident("thread") && i >= 2 && toks[i - 1].is_punct("::") && toks[i - 2].is_ident("std");
        if std_thread || t.is_ident("pthread_create") {
            hits.push(t.line);
        }
    }
    dedup(hits)
}

static LONG_DOUBLE_FORMAT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"%[-+ #0']*(?:\d+|\*)?(?:\.(?:\d+|\*)?)?L[fFeEgGaA]").unwrap()
});

/// Adjacent `long double`, or a `%Lf`-style conversion inside a string literal.
pub fn detect_long_double(lexed: &Lexed) -> Vec<u32> {
    let toks = &lexed.tokens;
    let mut hits = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        let keyword = t.is_ident("long") && toks.get(i + 1).is_some_and(|n| n.is_ident("double"));
        if keyword || (t.kind == TokenKind::Str && LONG_DOUBLE_FORMAT.is_match(&t.text)) {
            hits.push(t.line);
        }
    }
    dedup(hits)
}
