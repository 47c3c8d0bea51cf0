//! Random Java programs whose per-method counts are known by construction.

use std::collections::HashMap;

use fixstate::java::{ElementKind, SourceElement};
use fixstate::metrics::{analyze_source, maintainability, MetricsVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Default, Clone)]
pub struct Expect {
    pub nos: u32,
    pub nl: u32,
    pub nle: u32,
    pub decisions: u32,
    pub params: u32,
    pub loc: u32,
}

pub struct Gen {
    rng: StdRng,
    lines: Vec<String>,
    methods: HashMap<String, Expect>,
    class_methods: HashMap<String, Vec<String>>,
    next_method: usize,
    next_class: usize,
    decisions: u32,
}

/// Tracks the statement counts of the method being generated.
#[derive(Default)]
struct Body {
    nos: u32,
    nl: u32,
    nle: u32,
    decisions: u32,
}

impl Body {
    fn note(&mut self, nl: u32, nle: u32) {
        self.nl = self.nl.max(nl);
        self.nle = self.nle.max(nle);
    }
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: StdRng::seed_from_u64(seed),
            lines: Vec::new(),
            methods: HashMap::new(),
            class_methods: HashMap::new(),
            next_method: 0,
            next_class: 0,
            decisions: 0,
        }
    }

    fn push(&mut self, indent: usize, text: impl AsRef<str>) {
        let mut line = "    ".repeat(indent) + text.as_ref();
        if self.rng.random_bool(0.05) {
            line.push_str(" // trailing");
        }
        self.lines.push(line);
    }

    /// An expression and its decision points.
    fn expr(&mut self, depth: u32) -> (String, u32) {
        let choice = if depth > 2 { self.rng.random_range(0..5) } else { self.rng.random_range(0..10) };
        match choice {
            0 => ("a".into(), 0),
            1 => (format!("a + {}", self.rng.random_range(0..100)), 0),
            2 => ("\"x ? y && z // no comment\"".into(), 0),
            3 => ("'?'".into(), 0),
            4 => ("s.length() * 2".into(), 0),
            5 => {
                let (l, dl) = self.expr(depth + 1);
                let (r, dr) = self.expr(depth + 1);
                (format!("({l}) == ({r}) && b"), dl + dr + 1)
            }
            6 => {
                let (l, dl) = self.expr(depth + 1);
                (format!("b || ({l}) != null"), dl + 1)
            }
            7 => {
                let (l, dl) = self.expr(depth + 1);
                let (r, dr) = self.expr(depth + 1);
                (format!("b ? ({l}) : ({r})"), dl + dr + 1)
            }
            8 => ("run(() -> { if (b) { a++; } })".into(), 1),
            _ => ("\"esc \\\" quote\".trim()".into(), 0),
        }
    }

    fn cond(&mut self) -> (String, u32) {
        match self.rng.random_range(0..3) {
            0 => ("b".into(), 0),
            1 => ("a > 0 && b".into(), 1),
            _ => {
                let (e, d) = self.expr(2);
                (format!("({e}) != null"), d)
            }
        }
    }

    fn block(&mut self, body: &mut Body, indent: usize, nl: u32, nle: u32, budget: u32) {
        let n = self.rng.random_range(0..=budget.min(4));
        for _ in 0..n {
            self.statement(body, indent, nl, nle, budget.saturating_sub(1));
        }
    }

    fn statement(&mut self, body: &mut Body, indent: usize, nl: u32, nle: u32, budget: u32) {
        let kind = if budget == 0 { self.rng.random_range(0..3) } else { self.rng.random_range(0..12) };
        match kind {
            0 => {
                let (e, d) = self.expr(0);
                body.nos += 1;
                body.decisions += d;
                let v = self.rng.random_range(0..1000);
                self.push(indent, format!("Object v{v} = {e};"));
            }
            1 => {
                let (e, d) = self.expr(0);
                body.nos += 1;
                body.decisions += d;
                self.push(indent, format!("use({e});"));
            }
            2 => match self.rng.random_range(0..3) {
                0 => self.push(indent, "// a comment line"),
                1 => {
                    self.push(indent, "/*");
                    self.push(indent, " * block");
                    self.push(indent, " */");
                }
                _ => self.lines.push(String::new()),
            },
            3 | 4 => {
                let (c, d) = self.cond();
                body.nos += 1;
                body.decisions += d + 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, format!("if ({c}) {{"));
                self.block(body, indent + 1, nl + 1, nle + 1, budget);
                let chain = self.rng.random_range(0..3);
                for k in 1..=chain {
                    let (c, d) = self.cond();
                    body.nos += 1;
                    body.decisions += d + 1;
                    body.note(nl + k + 1, nle + 1);
                    self.push(indent, format!("}} else if ({c}) {{"));
                    self.block(body, indent + 1, nl + k + 1, nle + 1, budget);
                }
                if self.rng.random_bool(0.5) {
                    self.push(indent, "} else {");
                    self.block(body, indent + 1, nl + chain + 1, nle + 1, budget);
                }
                self.push(indent, "}");
            }
            5 => {
                body.nos += 1;
                body.decisions += 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, "for (int i = 0; i < n; i++) {");
                self.block(body, indent + 1, nl + 1, nle + 1, budget);
                self.push(indent, "}");
            }
            6 => {
                let (c, d) = self.cond();
                body.nos += 1;
                body.decisions += d + 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, format!("while ({c}) {{"));
                self.block(body, indent + 1, nl + 1, nle + 1, budget);
                self.push(indent, "}");
            }
            7 => {
                let (c, d) = self.cond();
                body.nos += 1;
                body.decisions += d + 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, "do {");
                self.block(body, indent + 1, nl + 1, nle + 1, budget);
                self.push(indent, format!("}} while ({c});"));
            }
            8 => {
                body.nos += 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, "switch (a) {");
                let cases = self.rng.random_range(1..4);
                for c in 0..cases {
                    body.decisions += 1;
                    self.push(indent + 1, format!("case {c}:"));
                    self.block(body, indent + 2, nl + 1, nle + 1, budget);
                    body.nos += 1;
                    self.push(indent + 2, "break;");
                }
                if self.rng.random_bool(0.5) {
                    self.push(indent + 1, "default:");
                    self.block(body, indent + 2, nl + 1, nle + 1, budget);
                }
                self.push(indent, "}");
            }
            9 => {
                body.nos += 1;
                body.note(nl + 1, nle + 1);
                self.push(indent, "try {");
                self.block(body, indent + 1, nl + 1, nle + 1, budget);
                let catches = self.rng.random_range(1..3);
                for _ in 0..catches {
                    body.decisions += 1;
                    self.push(indent, "} catch (IllegalStateException e) {");
                    self.block(body, indent + 1, nl + 1, nle + 1, budget);
                }
                if self.rng.random_bool(0.3) {
                    self.push(indent, "} finally {");
                    self.block(body, indent + 1, nl + 1, nle + 1, budget);
                }
                self.push(indent, "}");
            }
            10 => {
                self.push(indent, "{");
                self.block(body, indent + 1, nl, nle, budget);
                self.push(indent, "}");
            }
            _ => {
                body.nos += 1;
                let (c, d) = self.cond();
                body.decisions += d;
                self.push(indent, format!("return {c};"));
            }
        }
    }

    fn method(&mut self, class_fqn: &str, indent: usize) {
        let name = format!("m{}", self.next_method);
        self.next_method += 1;
        if self.rng.random_bool(0.3) {
            self.push(indent, "/**");
            self.push(indent, " * Does things.");
            self.push(indent, " */");
        }
        let params = self.rng.random_range(0..4u32);
        let plist: Vec<String> = (0..params).map(|i| format!("int p{i}")).collect();
        let start = self.lines.len();
        self.push(indent, format!("public Object {name}({}) {{", plist.join(", ")));
        let mut body = Body::default();
        self.block(&mut body, indent + 1, 0, 0, 3);
        self.push(indent, "}");
        let loc = (self.lines.len() - start) as u32;
        self.decisions += body.decisions;
        self.methods.insert(
            name.clone(),
            Expect {
                nos: body.nos,
                nl: body.nl,
                nle: body.nle,
                decisions: body.decisions,
                params,
                loc,
            },
        );
        self.class_methods.entry(class_fqn.to_string()).or_default().push(name);
    }

    fn class(&mut self, outer: Option<&str>, indent: usize) {
        let name = format!("K{}", self.next_class);
        self.next_class += 1;
        let fqn = match outer {
            Some(o) => format!("{o}.{name}"),
            None => format!("p.{name}"),
        };
        self.class_methods.entry(fqn.clone()).or_default();
        self.push(indent, format!("public class {name} {{"));
        self.push(indent + 1, "private int a;");
        for _ in 0..self.rng.random_range(1..4) {
            self.method(&fqn, indent + 1);
        }
        if outer.is_none() && self.rng.random_bool(0.3) {
            self.class(Some(&fqn), indent + 1);
        }
        self.push(indent, "}");
    }

    pub fn program(&mut self, min_lines: usize) -> String {
        self.lines.push("package p;".into());
        self.lines.push(String::new());
        loop {
            self.class(None, 0);
            if self.lines.len() >= min_lines {
                break;
            }
        }
        self.lines.join("\n") + "\n"
    }
}

/// Line-by-line code/comment classification by a plain character scan.
pub fn naive_lines(src: &str) -> (u32, u32) {
    #[derive(PartialEq, Clone, Copy)]
    enum St {
        Code,
        Line,
        Block,
        Str,
        Chr,
    }
    let n = src.lines().count();
    let mut code = vec![false; n + 1];
    let mut comment = vec![false; n + 1];
    let mut st = St::Code;
    let mut line = 0;
    let b: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let next = b.get(i + 1).copied();
        match st {
            St::Code => {
                if c == '/' && next == Some('/') {
                    st = St::Line;
                    comment[line] = true;
                    i += 1;
                } else if c == '/' && next == Some('*') {
                    st = St::Block;
                    comment[line] = true;
                    i += 1;
                } else if c == '"' {
                    st = St::Str;
                    code[line] = true;
                } else if c == '\'' {
                    st = St::Chr;
                    code[line] = true;
                } else if !c.is_whitespace() {
                    code[line] = true;
                }
            }
            St::Line => {
                if c == '\n' {
                    st = St::Code;
                }
            }
            St::Block => {
                comment[line] = true;
                if c == '*' && next == Some('/') {
                    st = St::Code;
                    i += 1;
                }
            }
            St::Str | St::Chr => {
                if c == '\\' {
                    i += 1;
                } else if (st == St::Str && c == '"') || (st == St::Chr && c == '\'') {
                    st = St::Code;
                }
            }
        }
        if c == '\n' {
            line += 1;
        }
        i += 1;
    }
    (
        code.iter().filter(|&&x| x).count() as u32,
        comment.iter().filter(|&&x| x).count() as u32,
    )
}

pub fn get(v: &MetricsVector, name: &str) -> f64 {
    v.get(name).unwrap_or_else(|| panic!("{name} missing"))
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

pub fn check_program(seed: u64, min_lines: usize) -> Vec<Expect> {
    let mut g = Gen::new(seed);
    let src = g.program(min_lines);
    let fa = analyze_source("src/p/K.java", &src);
    assert!(!fa.degraded, "seed {seed} degraded:\n{src}");
    let by_name = |name: &str| -> &(SourceElement, MetricsVector) {
        fa.elements
            .iter()
            .find(|(e, _)| e.kind == ElementKind::Method && e.fqn.rsplit('.').next().unwrap().starts_with(&format!("{name}(")))
            .unwrap_or_else(|| panic!("seed {seed}: method {name} missing"))
    };
    for (name, want) in &g.methods {
        let (_, m) = by_name(name);
        let ctx = format!("seed {seed} method {name}");
        assert_eq!(get(m, "NOS"), f64::from(want.nos), "{ctx} NOS");
        assert_eq!(get(m, "NL"), f64::from(want.nl), "{ctx} NL");
        assert_eq!(get(m, "NLE"), f64::from(want.nle), "{ctx} NLE");
        assert_eq!(get(m, "McCC"), f64::from(1 + want.decisions), "{ctx} McCC");
        assert_eq!(get(m, "NUMPAR"), f64::from(want.params), "{ctx} NUMPAR");
        assert_eq!(get(m, "LOC"), f64::from(want.loc), "{ctx} LOC");
        method_identities(m, &ctx);
    }
    for (e, v) in &fa.elements {
        let loc = get(v, "LOC");
        assert!(get(v, "LLOC") <= loc, "seed {seed} {}", e.fqn);
        let cd = v.get("CD").unwrap_or(0.0);
        assert!((0.0..=1.0).contains(&cd));
        if e.kind == ElementKind::Class {
            let own = &g.class_methods[&e.fqn];
            let wmc: f64 = own.iter().map(|n| get(&by_name(n).1, "McCC")).sum();
            assert!(close(get(v, "WMC"), wmc), "seed {seed} {} WMC", e.fqn);
            assert_eq!(get(v, "NM"), own.len() as f64);
            assert_eq!(get(v, "NM"), get(v, "NLM"));
            let nos: u32 = own.iter().map(|n| g.methods[n].nos).sum();
            assert_eq!(get(v, "NOS"), f64::from(nos));
            assert!(get(v, "TLOC") >= loc && get(v, "TNOS") >= get(v, "NOS"));
            assert!(get(v, "TLLOC") >= get(v, "LLOC") && get(v, "TCLOC") >= get(v, "CLOC"));
        }
    }
    let (_, file) = &fa.elements[0];
    let (lloc, cloc) = naive_lines(&src);
    assert_eq!(get(file, "LLOC"), f64::from(lloc), "seed {seed} file LLOC");
    assert_eq!(get(file, "CLOC"), f64::from(cloc), "seed {seed} file CLOC");
    assert_eq!(get(file, "LOC"), src.lines().count() as f64);
    assert_eq!(get(file, "McCC"), f64::from(1 + g.decisions));
    g.methods.into_values().collect()
}

pub fn method_identities(m: &MetricsVector, ctx: &str) {
    let (hpv, hpl, hvol) = (get(m, "HPV"), get(m, "HPL"), get(m, "HVOL"));
    assert!(hpv >= 0.0 && hpl >= hpv, "{ctx}: vocabulary exceeds length");
    let vol = if hpv > 0.0 { hpl * hpv.log2() } else { 0.0 };
    assert!(close(hvol, vol), "{ctx} HVOL");
    assert!(close(get(m, "HEFF"), get(m, "HDIF") * hvol), "{ctx} HEFF");
    assert!(close(get(m, "HTRP"), get(m, "HEFF") / 18.0), "{ctx} HTRP");
    assert!(close(get(m, "HNDB"), hvol / 3000.0), "{ctx} HNDB");
    let (mi, misei, mims, mism) = maintainability(hvol, get(m, "McCC"), get(m, "LLOC"), get(m, "CD"));
    assert!(close(get(m, "MI"), mi) && close(get(m, "MISEI"), misei));
    assert!(close(get(m, "MIMS"), mims) && close(get(m, "MISM"), mism));
    assert!(mims >= 0.0);
    assert!(get(m, "McCC") >= 1.0);
    assert_eq!(get(m, "TLOC"), get(m, "LOC"));
    assert_eq!(get(m, "TNOS"), get(m, "NOS"));
    assert!(get(m, "CLOC") <= get(m, "LOC") + get(m, "DLOC"));
}
