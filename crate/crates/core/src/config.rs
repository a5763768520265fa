//! Flat `key = value` configs with `[section]` headers.
//!
//! Values are numbers, bare words, or bracketed lists (nested once for
//! matrices). Lists may continue over several lines while brackets are open.
//! Every error carries the line it came from.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::bounds::{BoundConstants, ConstantSource};
use crate::error::{Error, Result};
use crate::indexing::IndexFamily;
use crate::observable::{Observable, Regularity};
use crate::process::{DoublingMap, IidLaw, MarkovChain, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Word(String),
    List(Vec<Value>),
}

impl Value {
    fn canonical(&self) -> String {
        match self {
            Value::Num(x) => format!("{x:e}"),
            Value::Word(w) => w.clone(),
            Value::List(v) => format!("[{}]", v.iter().map(Value::canonical).collect::<Vec<_>>().join(",")),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
}

/// A parsed document: section → key → value.
#[derive(Debug, Clone, Default)]
pub struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    section_lines: BTreeMap<String, usize>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

struct Lexer<'a> {
    s: &'a [u8],
    i: usize,
    line: usize,
}

impl Lexer<'_> {
    fn skip_ws(&mut self) {
        while self.i < self.s.len() && (self.s[self.i] as char).is_whitespace() {
            self.i += 1;
        }
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        match self.s.get(self.i) {
            None => Err(err(self.line, "missing value")),
            Some(b'[') => {
                self.i += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.s.get(self.i) {
                        Some(b']') => {
                            self.i += 1;
                            return Ok(Value::List(items));
                        }
                        None => return Err(err(self.line, "unclosed `[`")),
                        _ => {}
                    }
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.s.get(self.i) {
                        Some(b',') => self.i += 1,
                        Some(b']') => {}
                        _ => return Err(err(self.line, "expected `,` or `]` in list")),
                    }
                }
            }
            Some(_) => {
                let start = self.i;
                while self.i < self.s.len() && !matches!(self.s[self.i], b',' | b']' | b'[') && !(self.s[self.i] as char).is_whitespace() {
                    self.i += 1;
                }
                let tok = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
                if tok.is_empty() {
                    return Err(err(self.line, "empty list item"));
                }
                Ok(match tok.parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Num(x),
                    Ok(_) => return Err(err(self.line, format!("non-finite number `{tok}`"))),
                    Err(_) => Value::Word(tok.to_string()),
                })
            }
        }
    }
}

fn bracket_depth(s: &str) -> i64 {
    s.chars().map(|c| match c {
        '[' => 1,
        ']' => -1,
        _ => 0,
    }).sum()
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        let lines: Vec<&str> = text.lines().collect();
        let mut k = 0;
        while k < lines.len() {
            let line_no = k + 1;
            let raw = lines[k].split('#').next().unwrap_or("").trim();
            k += 1;
            if raw.is_empty() {
                continue;
            }
            if raw.starts_with('[') && !raw.contains('=') {
                let name = raw
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .map(str::trim)
                    .filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
                    .ok_or_else(|| err(line_no, format!("bad section header `{raw}`")))?;
                if doc.sections.contains_key(name) {
                    return Err(err(line_no, format!("duplicate section [{name}]")));
                }
                doc.sections.insert(name.to_string(), BTreeMap::new());
                doc.section_lines.insert(name.to_string(), line_no);
                current = Some(name.to_string());
                continue;
            }
            let (key, rest) = raw.split_once('=').ok_or_else(|| err(line_no, format!("expected `key = value`, got `{raw}`")))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line_no, format!("bad key `{key}`")));
            }
            let sec = current.clone().ok_or_else(|| err(line_no, format!("key `{key}` outside any section")))?;
            let mut text = rest.trim().to_string();
            while bracket_depth(&text) > 0 && k < lines.len() {
                text.push(' ');
                text.push_str(lines[k].split('#').next().unwrap_or("").trim());
                k += 1;
            }
            let mut lx = Lexer { s: text.as_bytes(), i: 0, line: line_no };
            let value = lx.value()?;
            lx.skip_ws();
            if lx.i != text.len() {
                return Err(err(line_no, format!("trailing characters after value of `{key}`")));
            }
            let map = doc.sections.get_mut(&sec).expect("section exists");
            if map.contains_key(key) {
                return Err(err(line_no, format!("duplicate key `{key}` in [{sec}]")));
            }
            map.insert(key.to_string(), Entry { value, line: line_no });
        }
        Ok(doc)
    }

    /// SHA-256 over sorted `section.key=value` lines; independent of key order,
    /// spacing, comments and number spelling.
    pub fn canonical_hash(&self) -> String {
        let mut h = Sha256::new();
        for (sec, keys) in &self.sections {
            for (k, e) in keys {
                h.update(format!("{sec}.{k}={}\n", e.value.canonical()).as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn has_section(&self, s: &str) -> bool {
        self.sections.contains_key(s)
    }

    pub fn section(&self, name: &str) -> Result<Section<'_>> {
        let keys = self.sections.get(name).ok_or_else(|| err(self.last_line(), format!("missing section [{name}]")))?;
        Ok(Section { name: name.to_string(), keys, header: self.section_lines[name] })
    }

    fn last_line(&self) -> usize {
        self.sections.values().flat_map(|m| m.values().map(|e| e.line)).max().unwrap_or(1)
    }

    /// Replace or add a value (command-line overrides); it reports line 0.
    pub fn set(&mut self, section: &str, key: &str, value: Value) {
        self.section_lines.entry(section.to_string()).or_insert(0);
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), Entry { value, line: 0 });
    }
}

/// One section with typed accessors.
pub struct Section<'a> {
    name: String,
    keys: &'a BTreeMap<String, Entry>,
    header: usize,
}

impl Section<'_> {
    fn entry(&self, key: &str) -> Result<&Entry> {
        self.keys.get(key).ok_or_else(|| err(self.header, format!("[{}] is missing key `{key}`", self.name)))
    }

    pub fn has(&self, key: &str) -> bool {
        self.keys.contains_key(key)
    }

    pub fn line(&self, key: &str) -> usize {
        self.keys.get(key).map_or(self.header, |e| e.line)
    }

    /// Reject keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, e) in self.keys {
            if !allowed.contains(&k.as_str()) {
                return Err(err(e.line, format!("unknown key `{k}` in [{}]", self.name)));
            }
        }
        Ok(())
    }

    pub fn num(&self, key: &str) -> Result<f64> {
        let e = self.entry(key)?;
        match &e.value {
            Value::Num(x) => Ok(*x),
            _ => Err(err(e.line, format!("`{key}` must be a number"))),
        }
    }

    pub fn num_or(&self, key: &str, d: f64) -> Result<f64> {
        if self.has(key) { self.num(key) } else { Ok(d) }
    }

    pub fn uint(&self, key: &str) -> Result<u64> {
        let e = self.entry(key)?;
        as_uint(&e.value).ok_or_else(|| err(e.line, format!("`{key}` must be a nonnegative integer")))
    }

    pub fn uint_or(&self, key: &str, d: u64) -> Result<u64> {
        if self.has(key) { self.uint(key) } else { Ok(d) }
    }

    pub fn word(&self, key: &str) -> Result<String> {
        let e = self.entry(key)?;
        match &e.value {
            Value::Word(w) => Ok(w.clone()),
            _ => Err(err(e.line, format!("`{key}` must be a word"))),
        }
    }

    pub fn nums(&self, key: &str) -> Result<Vec<f64>> {
        let e = self.entry(key)?;
        as_nums(&e.value).ok_or_else(|| err(e.line, format!("`{key}` must be a list of numbers")))
    }

    pub fn uints(&self, key: &str) -> Result<Vec<u64>> {
        let e = self.entry(key)?;
        match &e.value {
            Value::List(v) => v.iter().map(as_uint).collect::<Option<Vec<_>>>(),
            _ => None,
        }
        .ok_or_else(|| err(e.line, format!("`{key}` must be a list of nonnegative integers")))
    }

    pub fn words(&self, key: &str) -> Result<Vec<String>> {
        let e = self.entry(key)?;
        match &e.value {
            Value::List(v) => v
                .iter()
                .map(|x| match x {
                    Value::Word(w) => Some(w.clone()),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>(),
            Value::Word(w) => Some(vec![w.clone()]),
            _ => None,
        }
        .ok_or_else(|| err(e.line, format!("`{key}` must be a list of words")))
    }

    pub fn matrix(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        let e = self.entry(key)?;
        match &e.value {
            Value::List(rows) => rows.iter().map(as_nums).collect::<Option<Vec<_>>>(),
            _ => None,
        }
        .ok_or_else(|| err(e.line, format!("`{key}` must be a list of numeric rows")))
    }

    /// A list of numbers or a list of rows, as rows.
    pub fn rows(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        let e = self.entry(key)?;
        if let Some(v) = as_nums(&e.value) {
            return Ok(v.into_iter().map(|x| vec![x]).collect());
        }
        self.matrix(key)
    }

    /// Wrap a domain error with this key's line.
    pub fn at<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Config { .. } => e,
            other => err(self.line(key), other.to_string()),
        })
    }
}

fn as_uint(v: &Value) -> Option<u64> {
    match v {
        Value::Num(x) if *x >= 0.0 && x.fract() == 0.0 && *x <= 9.007_199_254_740_992e15 => Some(*x as u64),
        _ => None,
    }
}

fn as_nums(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::List(items) => items
            .iter()
            .map(|x| match x {
                Value::Num(n) => Some(*n),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

/// Statistics a simulate run can emit.
pub const STATISTICS: &[&str] = &["tails", "variance", "cumulants", "kolmogorov", "mdp", "moments"];
/// Checks a simulate run can evaluate.
pub const CHECKS: &[&str] = &["concentration", "variance_envelope", "cumulant_envelope", "moment_identity", "exact_mean"];

/// A validated simulate configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub name: String,
    pub model: ProcessModel,
    pub observable: Observable,
    pub family: IndexFamily,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub seed: u64,
    pub statistics: Vec<String>,
    pub checks: Vec<String>,
    pub tail_x: Vec<f64>,
    /// `γ` for cumulant and concentration envelopes.
    pub gamma: f64,
    pub k_max: usize,
    /// Grid points held out of fits and calibrations.
    pub holdout: usize,
    pub mdp_exponent: f64,
    pub mdp_x: Vec<f64>,
    pub constants: BoundConstants,
    pub hash: String,
}

pub fn parse_model(doc: &Document) -> Result<ProcessModel> {
    let s = doc.section("model")?;
    let kind = s.word("kind")?;
    match kind.as_str() {
        "finite-markov" | "markov" => {
            s.only(&["kind", "transition", "values"])?;
            let p = s.matrix("transition")?;
            let v = s.rows("values")?;
            Ok(ProcessModel::Markov(s.at("transition", MarkovChain::new(&p, v))?))
        }
        "iid" => {
            s.only(&["kind", "law", "atoms", "probs", "dim", "mean", "sd"])?;
            let law = if s.has("law") { s.word("law")? } else { "discrete".to_string() };
            let l = match law.as_str() {
                "discrete" => s.at("probs", IidLaw::discrete(s.rows("atoms")?, s.nums("probs")?))?,
                "gaussian" => s.at("sd", IidLaw::gaussian(s.uint_or("dim", 1)? as usize, s.num_or("mean", 0.0)?, s.num_or("sd", 1.0)?))?,
                other => return Err(err(s.line("law"), format!("unknown iid law `{other}`"))),
            };
            Ok(ProcessModel::Iid(l))
        }
        "doubling-map" | "doubling" => {
            s.only(&["kind", "level", "function", "table", "holder"])?;
            let level = s.uint("level")? as u32;
            let holder = if s.has("holder") {
                let h = s.nums("holder")?;
                if h.len() != 2 {
                    return Err(err(s.line("holder"), "`holder` is [constant, exponent]"));
                }
                Some((h[0], h[1]))
            } else {
                None
            };
            let m = if s.has("table") {
                DoublingMap::new(level, s.rows("table")?, holder)
            } else {
                let f = s.word("function")?;
                let g: fn(f64) -> f64 = match f.as_str() {
                    "identity" => |x| x,
                    "centered" => |x| x - 0.5,
                    "cos" => |x| (2.0 * std::f64::consts::PI * x).cos(),
                    "sin" => |x| (2.0 * std::f64::consts::PI * x).sin(),
                    "sign" => |x| if x < 0.5 { -1.0 } else { 1.0 },
                    other => return Err(err(s.line("function"), format!("unknown function `{other}`"))),
                };
                DoublingMap::from_fn(level, holder, |x| vec![g(x)])
            };
            Ok(ProcessModel::Doubling(s.at("level", m)?))
        }
        other => Err(err(s.line("kind"), format!("unknown model kind `{other}`"))),
    }
}

pub fn parse_observable(doc: &Document, dim: usize) -> Result<Observable> {
    let s = doc.section("observable")?;
    s.only(&["kind", "arity", "coord", "threshold", "coeffs", "clip", "value", "k", "kappa", "lambda"])?;
    let arity = s.uint("arity")? as usize;
    let coord = s.uint_or("coord", 0)? as usize;
    let kind = s.word("kind")?;
    let f = match kind.as_str() {
        "product" => Observable::product(arity, dim, coord),
        "sum" => Observable::sum(arity, dim, coord),
        "indicator_product" => Observable::indicator_product(arity, dim, coord, s.num("threshold")?),
        "clipped_polynomial" => Observable::clipped_polynomial(arity, dim, coord, s.nums("coeffs")?, s.num("clip")?),
        "increment" => Observable::increment(arity, dim),
        "constant" => Observable::constant(arity, dim, s.num("value")?),
        other => return Err(err(s.line("kind"), format!("unknown observable `{other}`"))),
    };
    let f = s.at("kind", f)?;
    if s.has("k") || s.has("kappa") || s.has("lambda") {
        let r = Regularity { k: s.num_or("k", 1.0)?, kappa: s.num_or("kappa", 1.0)?, lambda: s.uint_or("lambda", 0)? as u32 };
        s.at("k", f.with_regularity(r))
    } else {
        Ok(f)
    }
}

pub fn parse_family(doc: &Document, arity: usize) -> Result<IndexFamily> {
    if !doc.has_section("family") {
        return IndexFamily::linear(arity);
    }
    let s = doc.section("family")?;
    s.only(&["kind", "coeffs", "power", "ray_start"])?;
    let kind = if s.has("kind") { s.word("kind")? } else { "linear".to_string() };
    let to_int = |rows: Vec<Vec<f64>>| -> Result<Vec<Vec<i64>>> {
        rows.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| if x.fract() == 0.0 && x.abs() < 9e15 { Ok(x as i64) } else { Err(err(s.line("coeffs"), "coefficients must be integers")) })
                    .collect()
            })
            .collect()
    };
    let fam = match kind.as_str() {
        "linear" => IndexFamily::linear(arity),
        "polynomial" => IndexFamily::polynomial(to_int(s.matrix("coeffs")?)?, s.uint_or("ray_start", 1)?),
        "power_sparse" => IndexFamily::power_sparse(to_int(s.matrix("coeffs")?)?, s.uint("power")? as u32, s.uint_or("ray_start", 1)?),
        other => return Err(err(s.line("kind"), format!("unknown family `{other}`"))),
    };
    let fam = s.at("kind", fam)?;
    if fam.ell() != arity {
        return Err(err(s.line("coeffs"), format!("family has ℓ = {}, observable arity is {arity}", fam.ell())));
    }
    Ok(fam)
}

impl RunConfig {
    pub fn from_document(doc: &Document) -> Result<Self> {
        let model = parse_model(doc)?;
        let observable = parse_observable(doc, model.dimension())?;
        let family = parse_family(doc, observable.arity())?;
        let e = doc.section("experiment")?;
        e.only(&["name", "n_grid", "replicates", "seed", "statistics", "checks", "tail_x", "gamma", "k_max", "holdout", "mdp_exponent", "mdp_x"])?;
        let n_grid = e.uints("n_grid")?;
        if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err(e.line("n_grid"), "`n_grid` must be positive and strictly ascending"));
        }
        let replicates = e.uint("replicates")? as usize;
        let statistics = if e.has("statistics") { e.words("statistics")? } else { Vec::new() };
        for st in &statistics {
            if !STATISTICS.contains(&st.as_str()) {
                return Err(err(e.line("statistics"), format!("unknown statistic `{st}`")));
            }
        }
        let checks = if e.has("checks") { e.words("checks")? } else { Vec::new() };
        for c in &checks {
            if !CHECKS.contains(&c.as_str()) {
                return Err(err(e.line("checks"), format!("unknown check `{c}`")));
            }
        }
        let ci_bearing = !statistics.is_empty() || !checks.is_empty();
        if ci_bearing && replicates < crate::montecarlo::MIN_CI_REPLICATES {
            return Err(err(
                e.line("replicates"),
                format!("replicates = {replicates} is below the minimum {} for interval statistics", crate::montecarlo::MIN_CI_REPLICATES),
            ));
        }
        if replicates == 0 {
            return Err(err(e.line("replicates"), "replicates must be positive"));
        }
        let tail_x = if e.has("tail_x") { e.nums("tail_x")? } else { vec![0.5, 1.0, 1.5, 2.0] };
        let holdout = e.uint_or("holdout", 1)? as usize;
        if holdout >= n_grid.len() && (checks.iter().any(|c| c == "concentration" || c == "variance_envelope" || c == "cumulant_envelope")) {
            return Err(err(e.line("holdout"), "holdout leaves no grid points to calibrate on"));
        }
        let k_max = e.uint_or("k_max", 4)? as usize;
        if !(2..=4).contains(&k_max) {
            return Err(err(e.line("k_max"), "`k_max` must be in 2..=4"));
        }
        let mut constants = BoundConstants::default();
        if doc.has_section("constants") {
            let c = doc.section("constants")?;
            for name in c.keys.keys() {
                let v = c.num(name)?;
                c.at(name, constants.set(name, v, ConstantSource::Configured))?;
            }
        }
        Ok(RunConfig {
            name: if e.has("name") { e.word("name")? } else { "run".to_string() },
            model,
            observable,
            family,
            n_grid,
            replicates,
            seed: e.uint_or("seed", 1)?,
            statistics,
            checks,
            tail_x,
            gamma: e.num_or("gamma", 1.0)?,
            k_max,
            holdout,
            mdp_exponent: e.num_or("mdp_exponent", 0.1)?,
            mdp_x: if e.has("mdp_x") { e.nums("mdp_x")? } else { vec![1.0] },
            constants,
            hash: doc.canonical_hash(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }

    pub fn wants(&self, stat: &str) -> bool {
        self.statistics.iter().any(|s| s == stat)
    }

    pub fn checks_for(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IID: &str = "\
[model]
kind = iid
atoms = [-1, 1]
probs = [0.5, 0.5]

[observable]
kind = product
arity = 2

[experiment]
n_grid = [16, 64]
replicates = 200
statistics = [tails]
";

    #[test]
    fn parses_and_hashes() {
        let c = RunConfig::parse(IID).unwrap();
        assert_eq!(c.n_grid, vec![16, 64]);
        assert_eq!(c.family.ell(), 2);
        let shuffled = "\
# comment
[experiment]
statistics = [ tails ]
replicates = 200.0
n_grid = [16,64]
[observable]
arity = 2
kind = product
[model]
probs = [0.5, 0.5]
kind = iid
atoms = [-1.0, 1]
";
        assert_eq!(RunConfig::parse(shuffled).unwrap().hash, c.hash);
        let changed = IID.replace("200", "300");
        assert_ne!(RunConfig::parse(&changed).unwrap().hash, c.hash);
    }

    #[test]
    fn matrices_span_lines() {
        let t = "[model]\nkind = finite-markov\ntransition = [[0.9, 0.1],\n  [0.2, 0.8]]\nvalues = [-1, 1]\n";
        let d = Document::parse(t).unwrap();
        let m = parse_model(&d).unwrap();
        assert_eq!(m.kind_name(), "finite-markov");
    }

    #[test]
    fn errors_carry_lines() {
        let no_model = IID.replace("kind = iid", "");
        match RunConfig::parse(&no_model) {
            Err(Error::Config { line, msg }) => assert!(line == 1 && msg.contains("kind"), "{line} {msg}"),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse(&IID.replace("replicates = 200", "replicates = 10")) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 12),
            other => panic!("{other:?}"),
        }
        match Document::parse("[a]\nx = [1, 2\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match Document::parse("x = 1\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse(&IID.replace("probs = [0.5, 0.5]", "probs = [0.5, 0.6]")) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse(&IID.replace("arity = 2", "arity = 2\nbogus = 1")) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
    }
}
