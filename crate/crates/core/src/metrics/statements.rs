//! Statement-level scan of a method or initializer body.
//!
//! Drives NOS, NL and NLE and identifies the `while` that closes a
//! `do ... while` so it is not counted as a second loop.

use crate::java::{TokenKind, TokenStream};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BodyStats {
    pub statements: u32,
    pub nesting: u32,
    pub nesting_else_if: u32,
    /// Token indices of `while` keywords that close a `do` loop.
    pub do_while_tails: Vec<usize>,
}

struct Scanner<'a> {
    ts: &'a TokenStream,
    toks: Vec<usize>,
    p: usize,
    counting: bool,
    stats: BodyStats,
}

/// Scans the significant tokens strictly between the braces `open` and
/// `close` (token indices).
pub fn scan_body(ts: &TokenStream, open: usize, close: usize) -> BodyStats {
    let toks: Vec<usize> = (open + 1..close)
        .filter(|&i| !ts.tokens()[i].kind.is_trivia())
        .collect();
    let mut s = Scanner {
        ts,
        toks,
        p: 0,
        counting: true,
        stats: BodyStats::default(),
    };
    while s.p < s.toks.len() {
        let before = s.p;
        s.block_items(0, 0);
        if s.p == before {
            // Stray closing brace inside the body text.
            s.p += 1;
        }
    }
    s.stats
}

impl<'a> Scanner<'a> {
    fn lx(&self, p: usize) -> &'a str {
        self.toks
            .get(p)
            .map_or("", |&i| self.ts.lexeme(&self.ts.tokens()[i]))
    }

    fn kind(&self, p: usize) -> Option<TokenKind> {
        self.toks.get(p).map(|&i| self.ts.tokens()[i].kind)
    }

    fn at_brace(&self, b: &str) -> bool {
        self.kind(self.p) == Some(TokenKind::Brace) && self.lx(self.p) == b
    }

    fn done(&self) -> bool {
        self.p >= self.toks.len()
    }

    fn note(&mut self, nl: u32, nle: u32) {
        if self.counting {
            self.stats.nesting = self.stats.nesting.max(nl);
            self.stats.nesting_else_if = self.stats.nesting_else_if.max(nle);
        }
    }

    fn count(&mut self) {
        if self.counting {
            self.stats.statements += 1;
        }
    }

    fn block_items(&mut self, nl: u32, nle: u32) {
        while !self.done() && !self.at_brace("}") {
            let before = self.p;
            self.statement(nl, nle);
            if self.p == before {
                self.p += 1;
            }
        }
    }

    fn skip_parens(&mut self) {
        if self.lx(self.p) != "(" {
            return;
        }
        let mut depth = 0usize;
        while !self.done() {
            match self.lx(self.p) {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        self.p += 1;
                        return;
                    }
                }
                "{" if self.kind(self.p) == Some(TokenKind::Brace) => {
                    // Lambda body inside a header; scan it for do-loops only.
                    self.nested_block();
                    continue;
                }
                _ => {}
            }
            self.p += 1;
        }
    }

    /// Consumes `{ ... }` without contributing to the counts.
    fn nested_block(&mut self) {
        let saved = self.counting;
        self.counting = false;
        self.p += 1;
        self.block_items(0, 0);
        if self.at_brace("}") {
            self.p += 1;
        }
        self.counting = saved;
    }

    fn statement(&mut self, nl: u32, nle: u32) {
        if self.done() {
            return;
        }
        if self.at_brace("{") {
            self.p += 1;
            self.block_items(nl, nle);
            if self.at_brace("}") {
                self.p += 1;
            }
            return;
        }
        let t = self.lx(self.p);
        let keyword = self.kind(self.p) == Some(TokenKind::Keyword);
        match t {
            ";" => self.p += 1,
            "if" if keyword => {
                self.count();
                self.if_statement(nl, nle);
            }
            "for" | "while" | "switch" | "synchronized" if keyword => {
                self.count();
                self.note(nl + 1, nle + 1);
                self.p += 1;
                self.skip_parens();
                self.statement(nl + 1, nle + 1);
            }
            "do" if keyword => {
                self.count();
                self.note(nl + 1, nle + 1);
                self.p += 1;
                self.statement(nl + 1, nle + 1);
                if self.lx(self.p) == "while" {
                    let tok = self.toks[self.p];
                    self.stats.do_while_tails.push(tok);
                    self.p += 1;
                    self.skip_parens();
                    if self.lx(self.p) == ";" {
                        self.p += 1;
                    }
                }
            }
            "try" if keyword => {
                self.count();
                self.note(nl + 1, nle + 1);
                self.p += 1;
                self.skip_parens();
                self.statement(nl + 1, nle + 1);
                while self.lx(self.p) == "catch" {
                    self.p += 1;
                    self.skip_parens();
                    self.statement(nl + 1, nle + 1);
                }
                if self.lx(self.p) == "finally" {
                    self.p += 1;
                    self.statement(nl + 1, nle + 1);
                }
            }
            "case" | "default" if keyword && self.is_switch_label() => self.label(nl, nle),
            "else" if keyword => self.p += 1,
            _ if self.kind(self.p) == Some(TokenKind::Identifier) && self.lx(self.p + 1) == ":" => {
                self.p += 2;
            }
            _ if self.local_type_ahead() => self.skip_local_type(),
            _ => {
                self.count();
                self.simple_statement();
            }
        }
    }

    fn if_statement(&mut self, nl: u32, nle: u32) {
        self.note(nl + 1, nle + 1);
        self.p += 1;
        self.skip_parens();
        self.statement(nl + 1, nle + 1);
        if self.lx(self.p) == "else" {
            self.p += 1;
            if self.lx(self.p) == "if" {
                // else-if nests for NL but stays level for NLE.
                self.count();
                self.if_statement(nl + 1, nle);
            } else {
                self.statement(nl + 1, nle + 1);
            }
        }
    }

    fn is_switch_label(&self) -> bool {
        // `default` is also a modifier in interfaces; labels end in `:` or `->`.
        if self.lx(self.p) == "case" {
            return true;
        }
        matches!(self.lx(self.p + 1), ":" | "->")
    }

    fn label(&mut self, nl: u32, nle: u32) {
        let mut depth = 0i32;
        self.p += 1;
        while !self.done() {
            match self.lx(self.p) {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                ":" if depth == 0 => {
                    self.p += 1;
                    return;
                }
                "->" if depth == 0 => {
                    self.p += 1;
                    self.statement(nl, nle);
                    return;
                }
                _ if self.at_brace("}") => return,
                _ => {}
            }
            self.p += 1;
        }
    }

    fn local_type_ahead(&self) -> bool {
        let mut q = self.p;
        while matches!(self.lx(q), "final" | "abstract" | "static" | "strictfp") {
            q += 1;
        }
        let t = self.lx(q);
        let prev_dot = q > 0 && self.lx(q - 1) == ".";
        (matches!(t, "class" | "interface" | "enum") && self.kind(q) == Some(TokenKind::Keyword) && !prev_dot)
            || (t == "record"
                && self.kind(q + 1) == Some(TokenKind::Identifier)
                && matches!(self.lx(q + 2), "(" | "<"))
    }

    fn skip_local_type(&mut self) {
        while !self.done() && !self.at_brace("{") {
            self.p += 1;
        }
        if !self.done() {
            self.nested_block();
        }
    }

    fn simple_statement(&mut self) {
        let mut depth = 0i32;
        while !self.done() {
            if self.at_brace("{") {
                self.nested_block();
                continue;
            }
            if self.at_brace("}") {
                return;
            }
            match self.lx(self.p) {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                ";" if depth <= 0 => {
                    self.p += 1;
                    return;
                }
                _ => {}
            }
            self.p += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::java::tokenize;

    fn stats(body: &str) -> BodyStats {
        let src = format!("{{{body}}}");
        let ts = tokenize(&src);
        let close = ts.tokens().len() - 1;
        scan_body(&ts, 0, close)
    }

    #[test]
    fn counts_statements() {
        let s = stats(" if(a>0) return a; return 0; ");
        assert_eq!(s.statements, 3);
        assert_eq!(s.nesting, 1);
        assert_eq!(stats("").statements, 0);
        assert_eq!(stats("for(int i=0;i<n;i++){ x++; }").statements, 2);
    }

    #[test]
    fn else_if_chain_nesting() {
        let s = stats("if(a){x();} else if(b){ if(c) y(); } else { z(); }");
        assert_eq!(s.statements, 6);
        assert_eq!(s.nesting, 3);
        assert_eq!(s.nesting_else_if, 2);
    }

    #[test]
    fn do_while_tail_recorded_once() {
        let s = stats("do { i++; } while (i < 3); while(x) y();");
        assert_eq!(s.do_while_tails.len(), 1);
        assert_eq!(s.statements, 4);
    }

    #[test]
    fn switch_labels_and_lambdas() {
        let s = stats(
            "switch (k) { case 1: a(); break; case 2 -> b(); default: { c(); } }
             run(() -> { do { q(); } while (z); });
             class L { void f() { if (x) {} } }",
        );
        // switch + a + break + b + c + run
        assert_eq!(s.statements, 6);
        assert_eq!(s.nesting, 1);
        assert_eq!(s.do_while_tails.len(), 1);
    }

    #[test]
    fn try_catch_finally() {
        let s = stats("try (R r = open()) { use(r); } catch (E e) { log(e); } finally { close(); }");
        assert_eq!(s.statements, 4);
        assert_eq!(s.nesting, 1);
    }
}
