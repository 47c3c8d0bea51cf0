use super::lexer::{CommentKind, TokenKind, TokenStream};
use super::{ElementKind, SourceElement};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Modifiers {
    pub public: bool,
    pub protected: bool,
    pub private: bool,
    pub is_static: bool,
    pub is_abstract: bool,
    pub is_final: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub modifiers: Modifiers,
    pub documented: bool,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub element: SourceElement,
    pub kind: TypeKind,
    pub modifiers: Modifiers,
    /// Token index of the attached `/** */` comment.
    pub doc: Option<usize>,
    /// Token indices of the body braces; `close` is `None` when unbalanced.
    pub open: usize,
    pub close: Option<usize>,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<usize>,
    pub nested: Vec<usize>,
    pub parent: Option<usize>,
    /// Brace token pairs of initializer blocks and unrecognized member bodies.
    pub initializers: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub element: SourceElement,
    pub name: String,
    pub params: Vec<String>,
    /// `None` for constructors.
    pub return_type: Option<String>,
    pub modifiers: Modifiers,
    pub doc: Option<usize>,
    /// Token indices of the body braces; `None` for abstract/native methods.
    pub body: Option<(usize, Option<usize>)>,
    pub class: usize,
}

impl MethodDecl {
    pub fn is_constructor(&self) -> bool {
        self.return_type.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub path: String,
    pub package: Option<String>,
    pub file: SourceElement,
    pub classes: Vec<ClassDecl>,
    pub methods: Vec<MethodDecl>,
    /// Set when braces do not balance; elements before the imbalance remain.
    pub degraded: bool,
}

impl ParsedFile {
    pub fn elements(&self) -> Vec<SourceElement> {
        let mut all: Vec<(u32, u8, &SourceElement)> = Vec::new();
        for c in &self.classes {
            all.push((c.element.start_line, 0, &c.element));
        }
        for m in &self.methods {
            all.push((m.element.start_line, 1, &m.element));
        }
        all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out = Vec::with_capacity(all.len() + 1);
        out.push(self.file.clone());
        out.extend(all.into_iter().map(|(_, _, e)| e.clone()));
        out
    }
}

const MODIFIER_WORDS: &[&str] = &[
    "public",
    "protected",
    "private",
    "static",
    "abstract",
    "final",
    "native",
    "synchronized",
    "transient",
    "volatile",
    "strictfp",
    "default",
    "sealed",
];

enum Terminator {
    Body,
    Semi,
    Init,
    Close,
    Eof,
}

struct Parser<'a> {
    ts: &'a TokenStream,
    /// Indices of significant tokens.
    sig: Vec<usize>,
    path: String,
    package: Option<String>,
    classes: Vec<ClassDecl>,
    methods: Vec<MethodDecl>,
    degraded: bool,
    last_line: u32,
}

/// Parses one file into structural declarations.
pub fn parse_file(path: &str, ts: &TokenStream) -> ParsedFile {
    let sig: Vec<usize> = ts.significant().map(|(i, _)| i).collect();
    let mut p = Parser {
        ts,
        sig,
        path: path.to_string(),
        package: None,
        classes: Vec::new(),
        methods: Vec::new(),
        degraded: false,
        last_line: ts.line_count().max(1),
    };
    p.compilation_unit();
    let file = SourceElement {
        kind: ElementKind::File,
        fqn: path.to_string(),
        path: path.to_string(),
        start_line: 1,
        end_line: p.last_line,
        parent_fqn: None,
    };
    ParsedFile {
        path: p.path,
        package: p.package,
        file,
        classes: p.classes,
        methods: p.methods,
        degraded: p.degraded,
    }
}

impl<'a> Parser<'a> {
    fn n(&self) -> usize {
        self.sig.len()
    }

    fn lx(&self, p: usize) -> &'a str {
        match self.sig.get(p) {
            Some(&i) => self.ts.lexeme(&self.ts.tokens()[i]),
            None => "",
        }
    }

    fn kind(&self, p: usize) -> Option<TokenKind> {
        self.sig.get(p).map(|&i| self.ts.tokens()[i].kind)
    }

    fn line(&self, p: usize) -> u32 {
        self.sig
            .get(p)
            .map_or(self.last_line, |&i| self.ts.tokens()[i].line)
    }

    fn is_brace(&self, p: usize, b: &str) -> bool {
        self.kind(p) == Some(TokenKind::Brace) && self.lx(p) == b
    }

    fn compilation_unit(&mut self) {
        let mut p = 0;
        while p < self.n() {
            match self.lx(p) {
                "package" if self.kind(p) == Some(TokenKind::Keyword) => {
                    let mut q = p + 1;
                    let mut name = String::new();
                    while q < self.n() && self.lx(q) != ";" {
                        if self.lx(q) == "@" {
                            q = self.skip_annotation(q);
                            continue;
                        }
                        name.push_str(self.lx(q));
                        q += 1;
                    }
                    self.package = Some(name);
                    p = q + 1;
                }
                "import" if self.kind(p) == Some(TokenKind::Keyword) => {
                    while p < self.n() && self.lx(p) != ";" {
                        p += 1;
                    }
                    p += 1;
                }
                ";" => p += 1,
                "}" => {
                    self.degraded = true;
                    p += 1;
                }
                _ => {
                    let next = self.member(p, None);
                    p = if next == p { p + 1 } else { next };
                }
            }
        }
    }

    /// Skips `@Name(.Name)*` and an optional argument list.
    fn skip_annotation(&self, p: usize) -> usize {
        let mut q = p + 1;
        if self.kind(q) == Some(TokenKind::Identifier) || self.kind(q) == Some(TokenKind::Keyword) {
            q += 1;
        }
        while self.lx(q) == "." && self.kind(q + 1) == Some(TokenKind::Identifier) {
            q += 2;
        }
        if self.lx(q) == "(" {
            q = self.skip_balanced(q, "(", ")");
        }
        q
    }

    fn is_annotation_start(&self, p: usize) -> bool {
        self.lx(p) == "@" && self.lx(p + 1) != "interface"
    }

    /// Given `p` at an opener, returns the position after its matching closer.
    fn skip_balanced(&self, p: usize, open: &str, close: &str) -> usize {
        let mut depth = 0usize;
        let mut q = p;
        while q < self.n() {
            let t = self.lx(q);
            if t == open {
                depth += 1;
            } else if t == close {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return q + 1;
                }
            }
            q += 1;
        }
        self.n()
    }

    /// Position of the `}` matching the `{` at `p`.
    fn match_brace(&self, p: usize) -> Option<usize> {
        let mut depth = 0usize;
        for q in p..self.n() {
            if self.kind(q) == Some(TokenKind::Brace) {
                if self.lx(q) == "{" {
                    depth += 1;
                } else {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return Some(q);
                    }
                }
            }
        }
        None
    }

    fn doc_before(&self, p: usize) -> Option<usize> {
        let &tok = self.sig.get(p)?;
        let tokens = self.ts.tokens();
        let mut i = tok;
        while i > 0 {
            i -= 1;
            match tokens[i].kind {
                TokenKind::Whitespace => continue,
                TokenKind::Comment(CommentKind::Doc) => return Some(i),
                _ => return None,
            }
        }
        None
    }

    /// Header positions from `start` up to `end`, annotations removed.
    fn header(&self, start: usize, end: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut q = start;
        while q < end {
            if self.is_annotation_start(q) {
                q = self.skip_annotation(q);
                continue;
            }
            out.push(q);
            q += 1;
        }
        out
    }

    fn modifiers(&self, header: &[usize]) -> (Modifiers, usize) {
        let mut m = Modifiers::default();
        let mut i = 0;
        while i < header.len() {
            let t = self.lx(header[i]);
            if !MODIFIER_WORDS.contains(&t) {
                break;
            }
            match t {
                "public" => m.public = true,
                "protected" => m.protected = true,
                "private" => m.private = true,
                "static" => m.is_static = true,
                "abstract" => m.is_abstract = true,
                "final" => m.is_final = true,
                _ => {}
            }
            i += 1;
        }
        (m, i)
    }

    fn scan_header(&self, start: usize) -> (usize, Terminator) {
        let mut q = start;
        let mut paren = 0usize;
        while q < self.n() {
            if self.is_annotation_start(q) {
                q = self.skip_annotation(q);
                continue;
            }
            let t = self.lx(q);
            match t {
                "(" => paren += 1,
                ")" => paren = paren.saturating_sub(1),
                _ if paren > 0 => {}
                "{" if self.kind(q) == Some(TokenKind::Brace) => return (q, Terminator::Body),
                "}" if self.kind(q) == Some(TokenKind::Brace) => return (q, Terminator::Close),
                ";" => return (q, Terminator::Semi),
                "=" => return (q, Terminator::Init),
                _ => {}
            }
            q += 1;
        }
        (self.n(), Terminator::Eof)
    }

    /// Parses one member declaration and returns the position after it.
    fn member(&mut self, start: usize, enclosing: Option<usize>) -> usize {
        let (q, term) = self.scan_header(start);
        let header = self.header(start, q);
        if let Terminator::Eof = term {
            if !header.is_empty() {
                self.degraded = true;
            }
            return self.n();
        }
        if let Terminator::Close = term {
            return q;
        }

        if let Some((kind, name_pos)) = self.type_decl(&header) {
            if let Terminator::Body = term {
                return self.class_decl(start, &header, kind, name_pos, q, enclosing);
            }
            return q + 1;
        }

        let Some(class_idx) = enclosing else {
            // Not a type at top level; skip whatever it is.
            return match term {
                Terminator::Body => self.match_brace(q).map_or(self.n(), |c| c + 1),
                _ => q + 1,
            };
        };

        if !matches!(term, Terminator::Init) {
            if let Some(i) = header.iter().position(|&h| {
                self.kind(h) == Some(TokenKind::Identifier) && self.lx(h + 1) == "("
            }) {
                return self.method_decl(start, &header, i, q, term, class_idx);
            }
        }

        match term {
            Terminator::Body => {
                let close = self.match_brace(q);
                let open_tok = self.sig[q];
                match close {
                    Some(c) => {
                        self.classes[class_idx]
                            .initializers
                            .push((open_tok, self.sig[c]));
                        c + 1
                    }
                    None => {
                        self.degraded = true;
                        self.n()
                    }
                }
            }
            Terminator::Semi | Terminator::Init => self.field_decl(start, &header, q, class_idx),
            Terminator::Close | Terminator::Eof => q,
        }
    }

    fn type_decl(&self, header: &[usize]) -> Option<(TypeKind, usize)> {
        for (i, &h) in header.iter().enumerate() {
            let t = self.lx(h);
            let prev_dot = i > 0 && self.lx(header[i - 1]) == ".";
            let kind = match t {
                "class" if !prev_dot && self.kind(h) == Some(TokenKind::Keyword) => TypeKind::Class,
                "interface" if self.kind(h) == Some(TokenKind::Keyword) => {
                    if i > 0 && self.lx(header[i - 1]) == "@" {
                        TypeKind::Annotation
                    } else {
                        TypeKind::Interface
                    }
                }
                "enum" if self.kind(h) == Some(TokenKind::Keyword) => TypeKind::Enum,
                "record"
                    if self.kind(h) == Some(TokenKind::Identifier)
                        && header.get(i + 1).is_some_and(|&n| {
                            self.kind(n) == Some(TokenKind::Identifier)
                                && matches!(self.lx(n + 1), "(" | "<")
                        }) =>
                {
                    TypeKind::Record
                }
                _ => continue,
            };
            let name = *header.get(i + 1)?;
            if self.kind(name) != Some(TokenKind::Identifier) {
                return None;
            }
            return Some((kind, name));
        }
        None
    }

    fn class_decl(
        &mut self,
        start: usize,
        header: &[usize],
        kind: TypeKind,
        name_pos: usize,
        open: usize,
        enclosing: Option<usize>,
    ) -> usize {
        let name = self.lx(name_pos).to_string();
        let (mut modifiers, _) = self.modifiers(header);
        let (fqn, parent_fqn) = match enclosing {
            Some(e) => {
                let outer = &self.classes[e];
                if outer.kind == TypeKind::Interface || outer.kind == TypeKind::Annotation {
                    modifiers.public |= !modifiers.private;
                }
                (
                    format!("{}.{}", outer.element.fqn, name),
                    Some(outer.element.fqn.clone()),
                )
            }
            None => (
                match &self.package {
                    Some(pkg) if !pkg.is_empty() => format!("{pkg}.{name}"),
                    _ => name.clone(),
                },
                None,
            ),
        };
        let idx = self.classes.len();
        self.classes.push(ClassDecl {
            element: SourceElement {
                kind: ElementKind::Class,
                fqn,
                path: self.path.clone(),
                start_line: self.line(start),
                end_line: self.last_line,
                parent_fqn,
            },
            kind,
            modifiers,
            doc: self.doc_before(start),
            open: self.sig[open],
            close: None,
            fields: Vec::new(),
            methods: Vec::new(),
            nested: Vec::new(),
            parent: enclosing,
            initializers: Vec::new(),
        });
        if let Some(e) = enclosing {
            self.classes[e].nested.push(idx);
        }

        let mut p = open + 1;
        if kind == TypeKind::Enum {
            p = self.enum_constants(p);
        }
        loop {
            if p >= self.n() {
                self.degraded = true;
                return self.n();
            }
            if self.is_brace(p, "}") {
                self.classes[idx].close = Some(self.sig[p]);
                self.classes[idx].element.end_line = self.line(p);
                return p + 1;
            }
            if self.lx(p) == ";" {
                p += 1;
                continue;
            }
            let next = self.member(p, Some(idx));
            p = if next == p { p + 1 } else { next };
        }
    }

    fn enum_constants(&mut self, mut p: usize) -> usize {
        while p < self.n() {
            if self.is_annotation_start(p) {
                p = self.skip_annotation(p);
                continue;
            }
            match self.lx(p) {
                ";" => return p + 1,
                "}" if self.kind(p) == Some(TokenKind::Brace) => return p,
                "," => p += 1,
                "(" => p = self.skip_balanced(p, "(", ")"),
                "{" if self.kind(p) == Some(TokenKind::Brace) => {
                    p = self.match_brace(p).map_or(self.n(), |c| c + 1);
                }
                _ if self.kind(p) == Some(TokenKind::Identifier) => p += 1,
                _ => return p,
            }
        }
        p
    }

    fn method_decl(
        &mut self,
        start: usize,
        header: &[usize],
        name_idx: usize,
        term_pos: usize,
        term: Terminator,
        class_idx: usize,
    ) -> usize {
        let name_pos = header[name_idx];
        let name = self.lx(name_pos).to_string();
        let (mut modifiers, mods_end) = self.modifiers(&header[..name_idx]);
        let mut type_start = mods_end;
        if type_start < name_idx && self.lx(header[type_start]) == "<" {
            let mut depth = 0i32;
            while type_start < name_idx {
                depth += angle_delta(self.lx(header[type_start]));
                type_start += 1;
                if depth <= 0 {
                    break;
                }
            }
        }
        let ret_tokens = &header[type_start..name_idx];
        let return_type = if ret_tokens.is_empty() {
            None
        } else {
            Some(self.render_type(ret_tokens))
        };

        let params_open = name_pos + 1;
        let params_end = self.skip_balanced(params_open, "(", ")");
        let params = self.params(params_open + 1, params_end.saturating_sub(1));

        let class = &self.classes[class_idx];
        if matches!(class.kind, TypeKind::Interface | TypeKind::Annotation) && !modifiers.private {
            modifiers.public = true;
            if matches!(term, Terminator::Semi) && !modifiers.is_static {
                modifiers.is_abstract = true;
            }
        }
        let ret_suffix = return_type.clone().unwrap_or_default();
        let fqn = format!(
            "{}.{}({}){}",
            class.element.fqn,
            name,
            params.join(","),
            ret_suffix
        );
        let parent_fqn = Some(class.element.fqn.clone());

        let (body, end_line, next) = match term {
            Terminator::Body => match self.match_brace(term_pos) {
                Some(c) => (
                    Some((self.sig[term_pos], Some(self.sig[c]))),
                    self.line(c),
                    c + 1,
                ),
                None => {
                    self.degraded = true;
                    (Some((self.sig[term_pos], None)), self.last_line, self.n())
                }
            },
            _ => (None, self.line(term_pos), term_pos + 1),
        };

        let idx = self.methods.len();
        self.methods.push(MethodDecl {
            element: SourceElement {
                kind: ElementKind::Method,
                fqn,
                path: self.path.clone(),
                start_line: self.line(start),
                end_line,
                parent_fqn,
            },
            name,
            params,
            return_type,
            modifiers,
            doc: self.doc_before(start),
            body,
            class: class_idx,
        });
        self.classes[class_idx].methods.push(idx);
        next
    }

    /// Parameter types between positions `from` and `to` (exclusive).
    fn params(&self, from: usize, to: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        let mut angle = 0i32;
        let mut paren = 0i32;
        let mut q = from;
        while q < to {
            if self.is_annotation_start(q) {
                q = self.skip_annotation(q);
                continue;
            }
            let t = self.lx(q);
            angle += angle_delta(t);
            match t {
                "(" => paren += 1,
                ")" => paren -= 1,
                "," if angle <= 0 && paren == 0 => {
                    if !current.is_empty() {
                        out.push(self.param_type(&current));
                    }
                    current.clear();
                    q += 1;
                    continue;
                }
                _ => {}
            }
            current.push(q);
            q += 1;
        }
        if !current.is_empty() {
            out.push(self.param_type(&current));
        }
        out
    }

    fn param_type(&self, toks: &[usize]) -> String {
        let toks: Vec<usize> = toks
            .iter()
            .copied()
            .filter(|&t| self.lx(t) != "final")
            .collect();
        // The name is the last identifier outside generic brackets,
        // optionally followed by array brackets.
        let mut name_at = None;
        let mut angle = 0i32;
        for (i, &t) in toks.iter().enumerate() {
            angle += angle_delta(self.lx(t));
            if angle <= 0 && self.kind(t) == Some(TokenKind::Identifier) {
                name_at = Some(i);
            }
        }
        let Some(name_at) = name_at.filter(|&i| i > 0) else {
            return self.render_type(&toks);
        };
        let mut ty: Vec<usize> = toks[..name_at].to_vec();
        ty.extend_from_slice(&toks[name_at + 1..]);
        self.render_type(&ty)
    }

    /// Concatenates type tokens with generic arguments erased.
    fn render_type(&self, toks: &[usize]) -> String {
        let mut out = String::new();
        let mut depth = 0i32;
        for &t in toks {
            let lx = self.lx(t);
            let d = angle_delta(lx);
            if d > 0 {
                depth += d;
                continue;
            }
            if d < 0 {
                depth = (depth + d).max(0);
                continue;
            }
            if depth == 0 {
                out.push_str(lx);
            }
        }
        out
    }

    fn field_decl(&mut self, start: usize, header: &[usize], term_pos: usize, class_idx: usize) -> usize {
        let (mut modifiers, mods_end) = self.modifiers(header);
        if matches!(
            self.classes[class_idx].kind,
            TypeKind::Interface | TypeKind::Annotation
        ) {
            modifiers.public = true;
            modifiers.is_static = true;
            modifiers.is_final = true;
        }
        let documented = self.doc_before(start).is_some();
        let line = self.line(start);

        // Walk declarators: `T a, b[] = x, c;`
        let mut names = Vec::new();
        // Commas before the first `=` or `;` already sit in the header.
        let mut decl: Vec<usize> = Vec::new();
        let mut angle = 0i32;
        for &h in &header[mods_end..] {
            angle += angle_delta(self.lx(h));
            if angle <= 0 && self.lx(h) == "," {
                if let Some(name) = self.declarator_name(&decl) {
                    names.push(name);
                }
                decl.clear();
            } else {
                decl.push(h);
            }
        }
        let mut q = term_pos;
        loop {
            if let Some(name) = self.declarator_name(&decl) {
                names.push(name);
            }
            decl.clear();
            let t = self.lx(q);
            if t == "=" {
                q = self.skip_initializer(q + 1);
            }
            if q >= self.n() {
                break;
            }
            match self.lx(q) {
                "," => {
                    q += 1;
                    while q < self.n() && !matches!(self.lx(q), "," | ";" | "=") {
                        if self.is_brace(q, "}") {
                            break;
                        }
                        decl.push(q);
                        q += 1;
                    }
                    if q >= self.n() || self.is_brace(q, "}") {
                        if let Some(name) = self.declarator_name(&decl) {
                            names.push(name);
                        }
                        break;
                    }
                }
                ";" => {
                    q += 1;
                    break;
                }
                _ => break,
            }
        }
        for name in names {
            self.classes[class_idx].fields.push(FieldDecl {
                name,
                modifiers,
                documented,
                line,
            });
        }
        q
    }

    fn declarator_name(&self, toks: &[usize]) -> Option<String> {
        let mut angle = 0i32;
        let mut name = None;
        for &t in toks {
            angle += angle_delta(self.lx(t));
            if angle <= 0 && self.kind(t) == Some(TokenKind::Identifier) {
                name = Some(self.lx(t).to_string());
            }
        }
        name
    }

    /// Skips an initializer expression up to the `,` or `;` ending it.
    fn skip_initializer(&self, mut q: usize) -> usize {
        let mut depth = 0i32;
        let mut angle = 0i32;
        while q < self.n() {
            let t = self.lx(q);
            match t {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "{" | "}" if self.kind(q) == Some(TokenKind::Brace) => {
                    if t == "{" {
                        depth += 1;
                    } else {
                        if depth == 0 {
                            return q;
                        }
                        depth -= 1;
                    }
                }
                "<" if q > 0
                    && self.kind(q - 1) == Some(TokenKind::Identifier)
                    && (self.kind(q + 1) == Some(TokenKind::Identifier)
                        || matches!(self.lx(q + 1), "?" | ">")) =>
                {
                    angle += 1
                }
                ">" | ">>" | ">>>" if angle > 0 => angle = (angle + angle_delta(t)).max(0),
                "," if depth == 0 && angle == 0 => return q,
                ";" if depth <= 0 => return q,
                _ => {}
            }
            q += 1;
        }
        q
    }
}

fn angle_delta(lexeme: &str) -> i32 {
    match lexeme {
        "<" => 1,
        ">" => -1,
        ">>" => -2,
        ">>>" => -3,
        _ => 0,
    }
}
