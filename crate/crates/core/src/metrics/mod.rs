//! Source code metrics for files, classes and methods.
//!
//! Each level has a fixed column set. Metrics that
//! need type resolution (coupling, inheritance, cohesion) are part of the
//! column set but left empty. See METRICS.md for the exact definitions.

mod statements;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::java::{
    parse_file, tokenize, ClassDecl, ElementKind, MethodDecl, ParsedFile,
    SourceElement, TokenKind, TokenStream,
};

pub use statements::{scan_body, BodyStats};

pub const METHOD_COLUMNS: &[&str] = &[
    "CLOC", "LOC", "LLOC", "NL", "NLE", "NII", "NOI", "CD", "DLOC", "TCD", "TCLOC", "NOS", "TLOC",
    "TLLOC", "TNOS", "McCC", "HCPL", "HDIF", "HEFF", "HNDB", "HPL", "HPV", "HTRP", "HVOL", "MIMS",
    "MI", "MISEI", "MISM", "NUMPAR",
];

pub const CLASS_COLUMNS: &[&str] = &[
    "CLOC", "LOC", "LLOC", "NL", "NLE", "NII", "NOI", "CD", "DLOC", "TCD", "TCLOC", "NOS", "TLOC",
    "TLLOC", "TNOS", "PDA", "PUA", "LCOM5", "WMC", "CBO", "CBOI", "RFC", "AD", "DIT", "NOA", "NOC",
    "NOD", "NOP", "NA", "NG", "NLA", "NLG", "NLM", "NLPA", "NLPM", "NLS", "NM", "NPA", "NPM", "NS",
    "TNA", "TNG", "TNLA", "TNLG", "TNLM", "TNLPA", "TNLPM", "TNLS", "TNM", "TNPA", "TNPM", "TNS",
];

pub const FILE_COLUMNS: &[&str] = &["CLOC", "LOC", "LLOC", "McCC", "PDA", "PUA"];

/// Columns present in the schema but never computed.
pub const UNRESOLVED_COLUMNS: &[&str] = &[
    "NII", "NOI", "LCOM5", "CBO", "CBOI", "RFC", "DIT", "NOA", "NOC", "NOD", "NOP",
];

pub fn columns(level: ElementKind) -> &'static [&'static str] {
    match level {
        ElementKind::File => FILE_COLUMNS,
        ElementKind::Class => CLASS_COLUMNS,
        ElementKind::Method => METHOD_COLUMNS,
    }
}

/// Metric values aligned with [`columns`] of the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector {
    pub level: ElementKind,
    pub values: Vec<Option<f64>>,
}

impl MetricsVector {
    fn empty(level: ElementKind) -> Self {
        Self {
            level,
            values: vec![None; columns(level).len()],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = columns(self.level).iter().position(|c| *c == name)?;
        self.values[i]
    }

    fn set(&mut self, name: &str, v: f64) {
        let i = columns(self.level)
            .iter()
            .position(|c| *c == name)
            .unwrap_or_else(|| panic!("no column {name} at {} level", self.level));
        self.values[i] = Some(v);
    }
}

/// Per-file line and token facts shared by the element metrics.
pub struct FileContext<'a> {
    pub tokens: &'a TokenStream,
    pub parsed: &'a ParsedFile,
    code: Vec<bool>,
    comment: Vec<bool>,
    method_stats: Vec<BodyStats>,
    tails: HashSet<usize>,
}

impl<'a> FileContext<'a> {
    pub fn new(tokens: &'a TokenStream, parsed: &'a ParsedFile) -> Self {
        let n = tokens.line_count() as usize + 2;
        let mut code = vec![false; n];
        let mut comment = vec![false; n];
        for t in tokens.tokens() {
            let target = match t.kind {
                TokenKind::Whitespace => continue,
                TokenKind::Comment(_) => &mut comment,
                _ => &mut code,
            };
            for l in t.line..=t.end_line {
                if let Some(slot) = target.get_mut(l as usize) {
                    *slot = true;
                }
            }
        }
        let end = tokens.tokens().len();
        let method_stats: Vec<BodyStats> = parsed
            .methods
            .iter()
            .map(|m| match m.body {
                Some((open, close)) => scan_body(tokens, open, close.unwrap_or(end)),
                None => BodyStats::default(),
            })
            .collect();
        let mut tails: HashSet<usize> = method_stats
            .iter()
            .flat_map(|s| s.do_while_tails.iter().copied())
            .collect();
        for c in &parsed.classes {
            for &(open, close) in &c.initializers {
                tails.extend(scan_body(tokens, open, close).do_while_tails);
            }
        }
        Self {
            tokens,
            parsed,
            code,
            comment,
            method_stats,
            tails,
        }
    }

    fn count(&self, set: &[bool], start: u32, end: u32, skip: &[(u32, u32)]) -> u32 {
        (start..=end)
            .filter(|&l| set.get(l as usize).copied().unwrap_or(false))
            .filter(|&l| !skip.iter().any(|&(a, b)| a <= l && l <= b))
            .count() as u32
    }

    fn doc_lines(&self, doc: Option<usize>) -> Option<(u32, u32)> {
        doc.map(|i| {
            let t = &self.tokens.tokens()[i];
            (t.line, t.end_line)
        })
    }

    /// Comment lines in the span plus the attached doc comment.
    fn cloc(&self, start: u32, end: u32, doc: Option<(u32, u32)>, skip: &[(u32, u32)]) -> u32 {
        let mut lines: BTreeSet<u32> = (start..=end)
            .filter(|&l| self.comment.get(l as usize).copied().unwrap_or(false))
            .filter(|&l| !skip.iter().any(|&(a, b)| a <= l && l <= b))
            .collect();
        if let Some((a, b)) = doc {
            lines.extend(a..=b);
        }
        lines.len() as u32
    }

    fn decisions(&self, from: usize, to: usize) -> u32 {
        let toks = self.tokens.tokens();
        let sig: Vec<usize> = (from..to.min(toks.len()))
            .filter(|&i| !toks[i].kind.is_trivia())
            .collect();
        let lx = |k: usize| -> &str { sig.get(k).map_or("", |&i| self.tokens.lexeme(&toks[i])) };
        let mut n = 0;
        for (k, &i) in sig.iter().enumerate() {
            let t = &toks[i];
            let s = self.tokens.lexeme(t);
            match t.kind {
                TokenKind::Keyword => match s {
                    "if" | "for" | "do" | "case" | "catch" => n += 1,
                    "while" if !self.tails.contains(&i) => n += 1,
                    _ => {}
                },
                TokenKind::Operator => match s {
                    "&&" | "||" => n += 1,
                    "?" => {
                        // Skip generic wildcards like `List<? extends T>`.
                        let next = lx(k + 1);
                        let prev = if k == 0 { "" } else { lx(k - 1) };
                        if !matches!(next, "extends" | "super" | ">" | ">>" | ">>>" | "," | "&")
                            && prev != "<"
                        {
                            n += 1;
                        }
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Halstead {
    pub distinct_operators: u32,
    pub distinct_operands: u32,
    pub total_operators: u32,
    pub total_operands: u32,
}

impl Halstead {
    /// Counts over the significant tokens strictly inside `open`..`close`.
    pub fn of_range(ts: &TokenStream, open: usize, close: usize) -> Self {
        let mut ops: HashSet<&str> = HashSet::new();
        let mut opnds: HashSet<&str> = HashSet::new();
        let mut h = Halstead::default();
        let toks = ts.tokens();
        for t in &toks[(open + 1).min(toks.len())..close.min(toks.len())] {
            let s = ts.lexeme(t);
            let operand = match t.kind {
                TokenKind::Whitespace | TokenKind::Comment(_) => continue,
                TokenKind::Identifier | TokenKind::Literal => true,
                TokenKind::Keyword => matches!(s, "this" | "super"),
                TokenKind::Operator if matches!(s, ")" | "]") => continue,
                TokenKind::Brace if s == "}" => continue,
                _ => false,
            };
            if operand {
                h.total_operands += 1;
                opnds.insert(s);
            } else {
                h.total_operators += 1;
                ops.insert(s);
            }
        }
        h.distinct_operators = ops.len() as u32;
        h.distinct_operands = opnds.len() as u32;
        h
    }

    pub fn vocabulary(&self) -> f64 {
        f64::from(self.distinct_operators + self.distinct_operands)
    }

    pub fn length(&self) -> f64 {
        f64::from(self.total_operators + self.total_operands)
    }

    pub fn volume(&self) -> f64 {
        let v = self.vocabulary();
        if v > 0.0 {
            self.length() * v.log2()
        } else {
            0.0
        }
    }

    pub fn calculated_length(&self) -> f64 {
        xlog2x(self.distinct_operators) + xlog2x(self.distinct_operands)
    }

    pub fn difficulty(&self) -> f64 {
        if self.distinct_operands == 0 {
            0.0
        } else {
            f64::from(self.distinct_operators) / 2.0 * f64::from(self.total_operands)
                / f64::from(self.distinct_operands)
        }
    }

    pub fn effort(&self) -> f64 {
        self.difficulty() * self.volume()
    }
}

fn xlog2x(n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        f64::from(n) * f64::from(n).log2()
    }
}

fn ln0(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        0.0
    }
}

fn log20(x: f64) -> f64 {
    if x > 0.0 {
        x.log2()
    } else {
        0.0
    }
}

fn density(cloc: u32, lloc: u32) -> f64 {
    if cloc + lloc == 0 {
        0.0
    } else {
        f64::from(cloc) / f64::from(cloc + lloc)
    }
}

/// Maintainability index variants: (MI, MISEI, MIMS, MISM).
pub fn maintainability(hvol: f64, mccc: f64, lloc: f64, cd: f64) -> (f64, f64, f64, f64) {
    let mi = 171.0 - 5.2 * ln0(hvol) - 0.23 * mccc - 16.2 * ln0(lloc);
    let comment_term = 50.0 * (2.4 * cd).sqrt().sin();
    let misei = 171.0 - 5.2 * log20(hvol) - 0.23 * mccc - 16.2 * log20(lloc) + comment_term;
    let mims = (mi * 100.0 / 171.0).max(0.0);
    let mism = mi + comment_term;
    (mi, misei, mims, mism)
}

pub fn method_metrics(ctx: &FileContext, index: usize) -> MetricsVector {
    let m: &MethodDecl = &ctx.parsed.methods[index];
    let stats = &ctx.method_stats[index];
    let (start, end) = (m.element.start_line, m.element.end_line);
    let doc = ctx.doc_lines(m.doc);
    let loc = end - start + 1;
    let lloc = ctx.count(&ctx.code, start, end, &[]);
    let cloc = ctx.cloc(start, end, doc, &[]);
    let dloc = doc.map_or(0, |(a, b)| b - a + 1);
    let cd = density(cloc, lloc);

    let (mccc, h) = match m.body {
        Some((open, close)) => {
            let close = close.unwrap_or(ctx.tokens.tokens().len());
            (1 + ctx.decisions(open + 1, close), Halstead::of_range(ctx.tokens, open, close))
        }
        None => (1, Halstead::default()),
    };
    let mccc = f64::from(mccc);
    let hvol = h.volume();
    let (mi, misei, mims, mism) = maintainability(hvol, mccc, f64::from(lloc), cd);

    let mut v = MetricsVector::empty(ElementKind::Method);
    v.set("CLOC", cloc.into());
    v.set("LOC", loc.into());
    v.set("LLOC", lloc.into());
    v.set("NL", stats.nesting.into());
    v.set("NLE", stats.nesting_else_if.into());
    v.set("CD", cd);
    v.set("DLOC", dloc.into());
    v.set("TCD", cd);
    v.set("TCLOC", cloc.into());
    v.set("NOS", stats.statements.into());
    v.set("TLOC", loc.into());
    v.set("TLLOC", lloc.into());
    v.set("TNOS", stats.statements.into());
    v.set("McCC", mccc);
    v.set("HCPL", h.calculated_length());
    v.set("HDIF", h.difficulty());
    v.set("HEFF", h.effort());
    v.set("HNDB", hvol / 3000.0);
    v.set("HPL", h.length());
    v.set("HPV", h.vocabulary());
    v.set("HTRP", h.effort() / 18.0);
    v.set("HVOL", hvol);
    v.set("MIMS", mims);
    v.set("MI", mi);
    v.set("MISEI", misei);
    v.set("MISM", mism);
    v.set("NUMPAR", m.params.len() as f64);
    v
}

fn is_getter(m: &MethodDecl) -> bool {
    let ret = m.return_type.as_deref();
    m.params.is_empty()
        && ret.is_some_and(|r| r != "void")
        && (accessor_name(&m.name, "get") || accessor_name(&m.name, "is"))
}

fn is_setter(m: &MethodDecl) -> bool {
    m.params.len() == 1 && m.return_type.is_some() && accessor_name(&m.name, "set")
}

fn accessor_name(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .and_then(|rest| rest.chars().next())
        .is_some_and(|c| c.is_uppercase())
}

#[derive(Debug, Clone, Copy, Default)]
struct MemberCounts {
    attrs: u32,
    public_attrs: u32,
    getters: u32,
    methods: u32,
    public_methods: u32,
    setters: u32,
    documented_public: u32,
    undocumented_public: u32,
}

impl MemberCounts {
    fn add(&mut self, o: &MemberCounts) {
        self.attrs += o.attrs;
        self.public_attrs += o.public_attrs;
        self.getters += o.getters;
        self.methods += o.methods;
        self.public_methods += o.public_methods;
        self.setters += o.setters;
        self.documented_public += o.documented_public;
        self.undocumented_public += o.undocumented_public;
    }
}

fn local_members(ctx: &FileContext, c: &ClassDecl) -> MemberCounts {
    let mut mc = MemberCounts::default();
    for f in &c.fields {
        mc.attrs += 1;
        if f.modifiers.public {
            mc.public_attrs += 1;
            if f.documented {
                mc.documented_public += 1;
            } else {
                mc.undocumented_public += 1;
            }
        }
    }
    for &mi in &c.methods {
        let m = &ctx.parsed.methods[mi];
        mc.methods += 1;
        if is_getter(m) {
            mc.getters += 1;
        }
        if is_setter(m) {
            mc.setters += 1;
        }
        if m.modifiers.public {
            mc.public_methods += 1;
            if m.doc.is_some() {
                mc.documented_public += 1;
            } else {
                mc.undocumented_public += 1;
            }
        }
    }
    mc
}

/// Lines covered by a class including its doc comment.
fn class_extent(ctx: &FileContext, c: &ClassDecl) -> (u32, u32) {
    let start = ctx
        .doc_lines(c.doc)
        .map_or(c.element.start_line, |(a, _)| a.min(c.element.start_line));
    (start, c.element.end_line)
}

struct ClassTotals {
    members: MemberCounts,
    statements: u32,
}

fn class_totals(ctx: &FileContext, ci: usize, cache: &mut HashMap<usize, (MemberCounts, u32)>) -> ClassTotals {
    if let Some(&(members, statements)) = cache.get(&ci) {
        return ClassTotals { members, statements };
    }
    let c = &ctx.parsed.classes[ci];
    let mut members = local_members(ctx, c);
    let mut statements = local_statements(ctx, c).0;
    for &n in &c.nested {
        let t = class_totals(ctx, n, cache);
        members.add(&t.members);
        statements += t.statements;
    }
    cache.insert(ci, (members, statements));
    ClassTotals { members, statements }
}

/// (NOS, NL, NLE) over local methods and initializer blocks.
fn local_statements(ctx: &FileContext, c: &ClassDecl) -> (u32, u32, u32) {
    let mut nos = 0;
    let mut nl = 0;
    let mut nle = 0;
    for &mi in &c.methods {
        let s = &ctx.method_stats[mi];
        nos += s.statements;
        nl = nl.max(s.nesting);
        nle = nle.max(s.nesting_else_if);
    }
    for &(open, close) in &c.initializers {
        let s = scan_body(ctx.tokens, open, close);
        nos += s.statements;
        nl = nl.max(s.nesting);
        nle = nle.max(s.nesting_else_if);
    }
    (nos, nl, nle)
}

pub fn class_metrics(ctx: &FileContext, index: usize) -> MetricsVector {
    let c = &ctx.parsed.classes[index];
    let (start, end) = (c.element.start_line, c.element.end_line);
    let doc = ctx.doc_lines(c.doc);
    let nested: Vec<(u32, u32)> = c
        .nested
        .iter()
        .map(|&n| class_extent(ctx, &ctx.parsed.classes[n]))
        .collect();

    let tloc = end - start + 1;
    let nested_lines: BTreeSet<u32> = nested
        .iter()
        .flat_map(|&(a, b)| a.max(start)..=b.min(end))
        .collect();
    let loc = tloc - nested_lines.len() as u32;
    let lloc = ctx.count(&ctx.code, start, end, &nested);
    let tlloc = ctx.count(&ctx.code, start, end, &[]);
    let cloc = ctx.cloc(start, end, doc, &nested);
    let tcloc = ctx.cloc(start, end, doc, &[]);
    let dloc = doc.map_or(0, |(a, b)| b - a + 1);
    let (nos, nl, nle) = local_statements(ctx, c);

    let local = local_members(ctx, c);
    let total = class_totals(ctx, index, &mut HashMap::new());
    let wmc: f64 = c
        .methods
        .iter()
        .map(|&m| method_metrics(ctx, m).get("McCC").unwrap_or(1.0))
        .fold(0.0, |a, b| a + b);
    let pda = local.documented_public;
    let pua = local.undocumented_public;

    let mut v = MetricsVector::empty(ElementKind::Class);
    v.set("CLOC", cloc.into());
    v.set("LOC", loc.into());
    v.set("LLOC", lloc.into());
    v.set("NL", nl.into());
    v.set("NLE", nle.into());
    v.set("CD", density(cloc, lloc));
    v.set("DLOC", dloc.into());
    v.set("TCD", density(tcloc, tlloc));
    v.set("TCLOC", tcloc.into());
    v.set("NOS", nos.into());
    v.set("TLOC", tloc.into());
    v.set("TLLOC", tlloc.into());
    v.set("TNOS", total.statements.into());
    v.set("PDA", pda.into());
    v.set("PUA", pua.into());
    v.set("WMC", wmc);
    v.set("AD", if pda + pua == 0 { 0.0 } else { f64::from(pda) / f64::from(pda + pua) });
    for (prefix, m) in [("", &local), ("T", &total.members)] {
        // Without inheritance resolution the inherited and local counts agree.
        for scope in ["N", "NL"] {
            v.set(&format!("{prefix}{scope}A"), m.attrs.into());
            v.set(&format!("{prefix}{scope}G"), m.getters.into());
            v.set(&format!("{prefix}{scope}M"), m.methods.into());
            v.set(&format!("{prefix}{scope}PA"), m.public_attrs.into());
            v.set(&format!("{prefix}{scope}PM"), m.public_methods.into());
            v.set(&format!("{prefix}{scope}S"), m.setters.into());
        }
    }
    v
}

pub fn file_metrics(ctx: &FileContext) -> MetricsVector {
    let n = ctx.tokens.line_count();
    let lloc = ctx.count(&ctx.code, 1, n, &[]);
    let cloc = ctx.count(&ctx.comment, 1, n, &[]);
    let mut documented = 0;
    let mut undocumented = 0;
    for c in &ctx.parsed.classes {
        let m = local_members(ctx, c);
        documented += m.documented_public;
        undocumented += m.undocumented_public;
    }
    // McCC of the file: one plus every decision point in it.
    let mccc = 1 + ctx.decisions(0, ctx.tokens.tokens().len());
    let mut v = MetricsVector::empty(ElementKind::File);
    v.set("CLOC", cloc.into());
    v.set("LOC", n.into());
    v.set("LLOC", lloc.into());
    v.set("McCC", mccc.into());
    v.set("PDA", documented.into());
    v.set("PUA", undocumented.into());
    v
}

/// Elements of one file with their metrics, file first.
#[derive(Debug, Clone)]
pub struct FileAnalysis {
    pub elements: Vec<(SourceElement, MetricsVector)>,
    pub degraded: bool,
}

pub fn analyze_source(path: &str, source: &str) -> FileAnalysis {
    let ts = tokenize(source);
    let parsed = parse_file(path, &ts);
    let ctx = FileContext::new(&ts, &parsed);
    let mut elements = vec![(parsed.file.clone(), file_metrics(&ctx))];
    let mut members: Vec<(SourceElement, MetricsVector)> = Vec::new();
    for i in 0..parsed.classes.len() {
        members.push((parsed.classes[i].element.clone(), class_metrics(&ctx, i)));
    }
    for i in 0..parsed.methods.len() {
        members.push((parsed.methods[i].element.clone(), method_metrics(&ctx, i)));
    }
    members.sort_by(|a, b| {
        (a.0.start_line, a.0.kind, &a.0.fqn).cmp(&(b.0.start_line, b.0.kind, &b.0.fqn))
    });
    elements.extend(members);
    FileAnalysis {
        elements,
        degraded: parsed.degraded || !ts.diagnostics().is_empty(),
    }
}
