//! HAREM Golden Collection: XML parsing, resolution of `<ALT>` blocks and
//! multi-category `<EM>`s, projection onto a scenario, and CoNLL export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use quick_xml::events::Event;
use quick_xml::Reader;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagscheme::{encode, Entity, TagSequence, TagSet};
use crate::vocab::pre_tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Selective,
    Total,
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "selective" => Ok(ScenarioName::Selective),
            "total" => Ok(ScenarioName::Total),
            _ => Err(Error::Config(format!("unknown scenario {s:?} (expected selective or total)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub classes: Vec<String>,
}

pub const SELECTIVE_CLASSES: [&str; 5] = ["PER", "ORG", "LOC", "VALUE", "DATE"];
pub const TOTAL_CLASSES: [&str; 10] = [
    "LOC",
    "PER",
    "ORG",
    "VALUE",
    "DATE",
    "TITLE",
    "THING",
    "EVENT",
    "ABSTRACTION",
    "OTHER",
];

impl Scenario {
    pub fn new(name: ScenarioName) -> Self {
        let classes: &[&str] = match name {
            ScenarioName::Selective => &SELECTIVE_CLASSES,
            ScenarioName::Total => &TOTAL_CLASSES,
        };
        Scenario {
            name,
            classes: classes.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn selective() -> Self {
        Scenario::new(ScenarioName::Selective)
    }

    pub fn total() -> Self {
        Scenario::new(ScenarioName::Total)
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn tagset(&self) -> TagSet {
        TagSet::new(self.classes.iter().cloned()).expect("scenario classes are distinct")
    }
}

/// Maps a HAREM category (Portuguese, as in the Golden Collection, or one
/// of the short English names) to its class name.
pub fn canonical_category(raw: &str) -> Option<&'static str> {
    let upper = raw.trim().to_uppercase();
    Some(match upper.as_str() {
        "PESSOA" | "PER" | "PERSON" => "PER",
        "ORGANIZACAO" | "ORGANIZAÇÃO" | "ORG" | "ORGANIZATION" => "ORG",
        "LOCAL" | "LOC" | "LOCATION" => "LOC",
        "VALOR" | "VAL" | "VALUE" => "VALUE",
        "TEMPO" | "DATE" | "TIME" => "DATE",
        "OBRA" | "TITLE" => "TITLE",
        "COISA" | "THING" => "THING",
        "ACONTECIMENTO" | "EVENT" => "EVENT",
        "ABSTRACCAO" | "ABSTRACÇÃO" | "ABSTRACAO" | "ABSTRAÇÃO" | "ABSTRACTION" => "ABSTRACTION",
        "OUTRO" | "OTHER" => "OTHER",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Em {
    pub text: String,
    /// As written in `CATEG`, split at `|`.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Em(Em),
    /// Alternative solutions, each its own segment list.
    Alt(Vec<Vec<Segment>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub segments: Vec<Segment>,
}

fn declared_encoding(bytes: &[u8]) -> Option<&'static encoding_rs::Encoding> {
    let head = &bytes[..bytes.len().min(256)];
    if !head.starts_with(b"<?xml") {
        return None;
    }
    let end = head.windows(2).position(|w| w == b"?>")?;
    let decl = std::str::from_utf8(&head[..end]).ok()?;
    let rest = &decl[decl.find("encoding")? + "encoding".len()..];
    let rest = rest.trim_start().strip_prefix('=')?.trim_start();
    let quote = rest.chars().next()?;
    let value = rest[1..].split(quote).next()?;
    encoding_rs::Encoding::for_label(value.as_bytes())
}

/// Decodes with the byte-order mark if present, else the encoding named in
/// the XML declaration, else UTF-8.
pub fn decode_xml_bytes(bytes: &[u8]) -> Result<String> {
    let (encoding, skip) = match encoding_rs::Encoding::for_bom(bytes) {
        Some((enc, len)) => (enc, len),
        None => (declared_encoding(bytes).unwrap_or(encoding_rs::UTF_8), 0),
    };
    let (text, had_errors) = encoding.decode_without_bom_handling(&bytes[skip..]);
    if had_errors {
        return Err(Error::Data(format!("input is not valid {}", encoding.name())));
    }
    Ok(text.into_owned())
}

struct EmBuilder {
    categories: Vec<String>,
    text: String,
    nested: usize,
}

#[derive(Default)]
struct DocBuilder {
    id: String,
    body: Vec<Segment>,
    alts: Vec<Vec<Vec<Segment>>>,
    em: Option<EmBuilder>,
}

fn push_segment_text(segments: &mut Vec<Segment>, text: &str) {
    if text.is_empty() {
        return;
    }
    if let Some(Segment::Text(prev)) = segments.last_mut() {
        prev.push_str(text);
    } else {
        segments.push(Segment::Text(text.to_string()));
    }
}

impl DocBuilder {
    fn sink(&mut self) -> &mut Vec<Segment> {
        match self.alts.last_mut() {
            Some(alt) => alt.last_mut().expect("alternative list never empty"),
            None => &mut self.body,
        }
    }

    fn text(&mut self, text: &str) {
        if let Some(em) = &mut self.em {
            em.text.push_str(text);
            return;
        }
        if self.alts.is_empty() {
            push_segment_text(&mut self.body, text);
            return;
        }
        let mut parts = text.split('|');
        push_segment_text(self.sink(), parts.next().unwrap_or(""));
        for part in parts {
            self.alts.last_mut().expect("inside ALT").push(Vec::new());
            push_segment_text(self.sink(), part);
        }
    }

    fn has_content(&self) -> bool {
        self.body.iter().any(|s| match s {
            Segment::Text(t) => !t.trim().is_empty(),
            _ => true,
        })
    }
}

fn attribute(e: &quick_xml::events::BytesStart, name: &str) -> Result<Option<String>> {
    match e.try_get_attribute(name) {
        Ok(Some(a)) => a
            .normalized_value(quick_xml::XmlVersion::Implicit1_0)
            .map(|v| Some(v.into_owned()))
            .map_err(|err| Error::Data(format!("bad {name} attribute: {err}"))),
        Ok(None) => Ok(None),
        Err(err) => Err(Error::Data(format!("bad attributes: {err}"))),
    }
}

fn line_of(text: &str, pos: u64) -> usize {
    let pos = (pos as usize).min(text.len());
    text.as_bytes()[..pos].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Parses a Golden Collection file into per-document segment streams.
///
/// `<DOC>` elements delimit documents (id from `DOCID`); content outside any
/// `<DOC>` forms a single document when the file has none. `<P>` ends with a
/// line break. An `<EM>` inside another `<EM>` is folded into the outer one.
/// Other unknown elements contribute their text only.
pub fn parse_harem(bytes: &[u8]) -> Result<Vec<RawDocument>> {
    let text = decode_xml_bytes(bytes)?;
    let mut reader = Reader::from_str(&text);
    let mut docs = Vec::new();
    let mut implicit = DocBuilder {
        id: "doc1".into(),
        ..Default::default()
    };
    let mut current: Option<DocBuilder> = None;
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    let xml_err = |reader: &Reader<&[u8]>, msg: String| {
        let pos = reader.error_position();
        Error::Xml {
            position: pos,
            message: format!("line {}: {msg}", line_of(&text, pos)),
        }
    };

    loop {
        let event = reader.read_event().map_err(|e| xml_err(&reader, e.to_string()))?;
        let doc = current.as_mut().unwrap_or(&mut implicit);
        match event {
            Event::Eof => break,
            Event::Start(e) => {
                let name = e.name().into_inner().to_uppercase();
                match name.as_str() {
                    "DOC" => {
                        if current.is_some() {
                            return Err(xml_err(&reader, "nested DOC".into()));
                        }
                        let id = match attribute(&e, "DOCID")? {
                            Some(id) => id,
                            None => attribute(&e, "ID")?.unwrap_or_else(|| format!("doc{}", docs.len() + 1)),
                        };
                        current = Some(DocBuilder {
                            id,
                            ..Default::default()
                        });
                    }
                    "EM" => {
                        if let Some(em) = &mut doc.em {
                            em.nested += 1;
                            warn!("{}: nested EM folded into the enclosing one", doc.id);
                        } else {
                            let categ = attribute(&e, "CATEG")?.unwrap_or_default();
                            let categories: Vec<String> = categ
                                .split('|')
                                .map(|c| c.trim().to_string())
                                .filter(|c| !c.is_empty())
                                .collect();
                            if categories.is_empty() {
                                warn!("{}: EM without categories", doc.id);
                            }
                            doc.em = Some(EmBuilder {
                                categories,
                                text: String::new(),
                                nested: 0,
                            });
                        }
                    }
                    "ALT" => {
                        if doc.em.is_some() {
                            warn!("{}: ALT inside EM ignored", doc.id);
                        } else {
                            doc.alts.push(vec![Vec::new()]);
                        }
                    }
                    "P" | "COLHAREM" => {}
                    _ => {
                        if unknown.insert(name.clone()) {
                            warn!("unknown element <{name}> kept as text");
                        }
                    }
                }
            }
            Event::End(e) => {
                let name = e.name().into_inner().to_uppercase();
                match name.as_str() {
                    "DOC" => {
                        let Some(d) = current.take() else {
                            return Err(xml_err(&reader, "unmatched </DOC>".into()));
                        };
                        if d.em.is_some() || !d.alts.is_empty() {
                            return Err(xml_err(&reader, format!("document {} ends inside EM or ALT", d.id)));
                        }
                        docs.push(RawDocument {
                            id: d.id,
                            segments: d.body,
                        });
                    }
                    "EM" => match &mut doc.em {
                        Some(em) if em.nested > 0 => em.nested -= 1,
                        Some(_) => {
                            let em = doc.em.take().expect("checked");
                            doc.sink().push(Segment::Em(Em {
                                text: em.text,
                                categories: em.categories,
                            }));
                        }
                        None => return Err(xml_err(&reader, "unmatched </EM>".into())),
                    },
                    "ALT" => {
                        if doc.em.is_some() {
                            continue;
                        }
                        let alts = doc.alts.pop().ok_or_else(|| xml_err(&reader, "unmatched </ALT>".into()))?;
                        doc.sink().push(Segment::Alt(alts));
                    }
                    "P" => doc.text("\n"),
                    _ => {}
                }
            }
            Event::Empty(e) => {
                let name = e.name().into_inner().to_uppercase();
                if name == "EM" {
                    warn!("{}: empty EM element ignored", doc.id);
                }
            }
            Event::Text(t) => doc.text(&t.xml10_content()),
            Event::CData(t) => doc.text(&t.xml10_content()),
            Event::GeneralRef(r) => {
                if let Some(c) = r.resolve_char_ref().map_err(|e| xml_err(&reader, e.to_string()))? {
                    doc.text(c.encode_utf8(&mut [0; 4]));
                } else {
                    let name = r.xml10_content();
                    match quick_xml::escape::resolve_predefined_entity(&name) {
                        Some(s) => doc.text(s),
                        None => {
                            warn!("{}: undefined entity &{name}; kept verbatim", doc.id);
                            doc.text(&format!("&{name};"));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(d) = current {
        return Err(Error::Xml {
            position: text.len() as u64,
            message: format!("document {} not closed", d.id),
        });
    }
    if implicit.em.is_some() || !implicit.alts.is_empty() {
        return Err(Error::Xml {
            position: text.len() as u64,
            message: "unclosed EM or ALT".into(),
        });
    }
    if docs.is_empty() && implicit.has_content() {
        docs.push(RawDocument {
            id: implicit.id,
            segments: implicit.body,
        });
    }
    Ok(docs)
}

/// Named entities counted by ALT resolution: every EM once, plus those of
/// the alternative chosen in any nested ALT.
pub fn count_ems(segments: &[Segment]) -> usize {
    segments
        .iter()
        .map(|s| match s {
            Segment::Text(_) => 0,
            Segment::Em(_) => 1,
            Segment::Alt(alts) => count_ems(&alts[resolve_alt(alts)]),
        })
        .sum()
}

/// Index of the alternative with the most EMs; the first one on ties.
pub fn resolve_alt(alternatives: &[Vec<Segment>]) -> usize {
    let mut best = 0;
    let mut best_count = None;
    for (i, alt) in alternatives.iter().enumerate() {
        let c = count_ems(alt);
        if best_count.is_none_or(|b| c > b) {
            best = i;
            best_count = Some(c);
        }
    }
    best
}

/// First category that names a class of the scenario, or `None` when the
/// entity is dropped.
pub fn resolve_categories<S: AsRef<str>>(categories: &[S], scenario: &Scenario) -> Option<String> {
    categories
        .iter()
        .filter_map(|c| canonical_category(c.as_ref()))
        .find(|c| scenario.contains(c))
        .map(str::to_string)
}

/// A document with a single truth: flat text and non-overlapping entities in
/// character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedDocument {
    pub id: String,
    pub text: String,
    pub entities: Vec<Entity>,
    /// EMs removed because no category belongs to the scenario.
    pub dropped: usize,
}

fn flatten(segments: &[Segment], scenario: &Scenario, out: &mut ResolvedDocument, chars: &mut usize, id: &str) {
    for seg in segments {
        match seg {
            Segment::Text(t) => {
                out.text.push_str(t);
                *chars += t.chars().count();
            }
            Segment::Em(em) => {
                let start = *chars;
                out.text.push_str(&em.text);
                *chars += em.text.chars().count();
                if em.text.trim().is_empty() {
                    warn!("{id}: EM with no text at char {start} ignored");
                    continue;
                }
                for c in &em.categories {
                    if canonical_category(c).is_none() {
                        warn!("{id}: unknown category {c:?}");
                    }
                }
                match resolve_categories(&em.categories, scenario) {
                    Some(class) => out.entities.push(Entity::new(start, *chars, class)),
                    None => out.dropped += 1,
                }
            }
            Segment::Alt(alts) => flatten(&alts[resolve_alt(alts)], scenario, out, chars, id),
        }
    }
}

pub fn resolve_document(doc: &RawDocument, scenario: &Scenario) -> ResolvedDocument {
    let mut out = ResolvedDocument {
        id: doc.id.clone(),
        text: String::new(),
        entities: Vec::new(),
        dropped: 0,
    };
    let mut chars = 0;
    flatten(&doc.segments, scenario, &mut out, &mut chars, &doc.id);
    out
}

pub fn resolve_all(docs: &[RawDocument], scenario: &Scenario) -> Vec<ResolvedDocument> {
    docs.par_iter().map(|d| resolve_document(d, scenario)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: TagSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HaremStats {
    pub documents: usize,
    pub tokens: usize,
    pub entities: usize,
    pub per_class: BTreeMap<String, usize>,
    /// Entities widened to whole tokens.
    pub expanded: usize,
    /// Entities covering no token.
    pub dropped_empty: usize,
    /// Entities sharing a token with an earlier one.
    pub dropped_overlap: usize,
    /// EMs with no category in the scenario.
    pub dropped_category: usize,
}

impl HaremStats {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20}{:>10}", "documents", self.documents);
        let _ = writeln!(s, "{:<20}{:>10}", "tokens", self.tokens);
        let _ = writeln!(s, "{:<20}{:>10}", "entities", self.entities);
        for (class, n) in &self.per_class {
            let _ = writeln!(s, "  {:<18}{:>10}", class, n);
        }
        let _ = writeln!(s, "{:<20}{:>10}", "expanded", self.expanded);
        let _ = writeln!(s, "{:<20}{:>10}", "dropped (category)", self.dropped_category);
        let _ = writeln!(s, "{:<20}{:>10}", "dropped (empty)", self.dropped_empty);
        let _ = writeln!(s, "{:<20}{:>10}", "dropped (overlap)", self.dropped_overlap);
        s
    }

    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "documents={}", self.documents);
        let _ = writeln!(s, "tokens={}", self.tokens);
        let _ = writeln!(s, "entities={}", self.entities);
        for (class, n) in &self.per_class {
            let _ = writeln!(s, "entities.{class}={n}");
        }
        let _ = writeln!(s, "expanded={}", self.expanded);
        let _ = writeln!(s, "dropped_category={}", self.dropped_category);
        let _ = writeln!(s, "dropped_empty={}", self.dropped_empty);
        let _ = writeln!(s, "dropped_overlap={}", self.dropped_overlap);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Export {
    pub docs: Vec<ExportedDocument>,
    pub stats: HaremStats,
    /// One line per adjusted or dropped entity, prefixed by document id.
    pub warnings: Vec<String>,
}

impl Export {
    /// `token<TAB>tag` lines, a blank line after each non-empty document.
    pub fn write_conll(&self, mut out: impl Write, ts: &TagSet) -> std::io::Result<()> {
        for doc in self.docs.iter().filter(|d| !d.tokens.is_empty()) {
            for (tok, &tag) in doc.tokens.iter().zip(&doc.tags) {
                writeln!(out, "{tok}\t{}", ts.name(tag))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Tokenizes on whitespace and punctuation and tags with IOB2. Entities not
/// aligned to token boundaries grow to the tokens they touch.
pub fn export_conll(docs: &[ResolvedDocument], ts: &TagSet) -> Result<Export> {
    let mut export = Export::default();
    for doc in docs {
        let pre = pre_tokenize(&doc.text);
        let chars: Vec<char> = doc.text.chars().collect();
        let mut entities: Vec<Entity> = Vec::new();
        for ent in &doc.entities {
            if ent.end > chars.len() || ent.start >= ent.end {
                return Err(Error::EntityBounds {
                    start: ent.start,
                    end: ent.end,
                    len: chars.len(),
                });
            }
            let first = pre.partition_point(|t| t.char_end <= ent.start);
            let last = pre.partition_point(|t| t.char_start < ent.end);
            let surface: String = chars[ent.start..ent.end].iter().collect();
            if first >= last {
                export.stats.dropped_empty += 1;
                export
                    .warnings
                    .push(format!("{}: entity {surface:?} covers no token; dropped", doc.id));
                continue;
            }
            if entities.last().is_some_and(|prev| prev.end > first) {
                export.stats.dropped_overlap += 1;
                export
                    .warnings
                    .push(format!("{}: entity {surface:?} shares a token with the previous one; dropped", doc.id));
                continue;
            }
            let mut lo = ent.start;
            let mut hi = ent.end;
            while lo < hi && chars[lo].is_whitespace() {
                lo += 1;
            }
            while hi > lo && chars[hi - 1].is_whitespace() {
                hi -= 1;
            }
            if pre[first].char_start != lo || pre[last - 1].char_end != hi {
                export.stats.expanded += 1;
                export.warnings.push(format!(
                    "{}: entity {surface:?} at chars {}..{} not on token boundaries; expanded",
                    doc.id, ent.start, ent.end
                ));
            }
            entities.push(Entity::new(first, last, ent.class.clone()));
        }
        let tags = encode(&entities, pre.len(), ts)?;
        export.stats.documents += 1;
        export.stats.tokens += pre.len();
        export.stats.entities += entities.len();
        export.stats.dropped_category += doc.dropped;
        for e in &entities {
            *export.stats.per_class.entry(e.class.clone()).or_default() += 1;
        }
        export.docs.push(ExportedDocument {
            id: doc.id.clone(),
            tokens: pre.into_iter().map(|t| t.text).collect(),
            tags,
        });
    }
    for w in &export.warnings {
        warn!("{w}");
    }
    Ok(export)
}
