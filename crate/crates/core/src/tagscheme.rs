//! IOB2 tagging: entity spans to tag sequences and back, validity checks,
//! and the left-to-right repair pass for model output.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

/// Tag indices into a [`TagSet`].
pub type TagSequence = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// `O` at index 0, then `B-c`, `I-c` for each class in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    classes: Vec<String>,
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for TagSet {
    type Error = Error;

    fn try_from(classes: Vec<String>) -> Result<Self> {
        TagSet::new(classes)
    }
}

impl From<TagSet> for Vec<String> {
    fn from(ts: TagSet) -> Self {
        ts.classes
    }
}

impl TagSet {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        let mut names = vec![OUTSIDE.to_string()];
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() || c.chars().any(char::is_whitespace) {
                return Err(Error::TagSet(format!("invalid class name {c:?}")));
            }
            if classes[..i].contains(c) {
                return Err(Error::TagSet(format!("duplicate class {c:?}")));
            }
            names.push(format!("B-{c}"));
            names.push(format!("I-{c}"));
        }
        let lookup = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(TagSet {
            classes,
            names,
            lookup,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Number of tags, `2 * classes + 1`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, tag: usize) -> &str {
        &self.names[tag]
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownTag(name.to_string()))
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn outside(&self) -> usize {
        0
    }

    pub fn begin(&self, class: usize) -> usize {
        1 + 2 * class
    }

    pub fn inside(&self, class: usize) -> usize {
        2 + 2 * class
    }

    pub fn tag(&self, index: usize) -> Tag {
        match index {
            0 => Tag::Outside,
            i if i % 2 == 1 => Tag::Begin((i - 1) / 2),
            i => Tag::Inside((i - 2) / 2),
        }
    }

    /// Whether `next` may follow `prev` (`None` meaning sequence start) in
    /// well-formed IOB2.
    pub fn allowed(&self, prev: Option<usize>, next: usize) -> bool {
        match self.tag(next) {
            Tag::Inside(c) => match prev.map(|p| self.tag(p)) {
                Some(Tag::Begin(pc)) | Some(Tag::Inside(pc)) => pc == c,
                _ => false,
            },
            _ => true,
        }
    }

    pub fn parse_sequence<S: AsRef<str>>(&self, names: &[S]) -> Result<TagSequence> {
        names.iter().map(|n| self.index(n.as_ref())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub class: String,
}

impl Entity {
    pub fn new(start: usize, end: usize, class: impl Into<String>) -> Self {
        Entity {
            start,
            end,
            class: class.into(),
        }
    }
}

pub fn encode(entities: &[Entity], length: usize, ts: &TagSet) -> Result<TagSequence> {
    let mut sorted: Vec<&Entity> = entities.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut tags = vec![ts.outside(); length];
    let mut prev: Option<&Entity> = None;
    for e in sorted {
        if e.start >= e.end || e.end > length {
            return Err(Error::EntityBounds {
                start: e.start,
                end: e.end,
                len: length,
            });
        }
        if let Some(p) = prev {
            if e.start < p.end {
                return Err(Error::Overlap {
                    first_start: p.start,
                    first_end: p.end,
                    second_start: e.start,
                    second_end: e.end,
                });
            }
        }
        let c = ts
            .class_index(&e.class)
            .ok_or_else(|| Error::TagSet(format!("class {:?} not in tag set", e.class)))?;
        tags[e.start] = ts.begin(c);
        for t in &mut tags[e.start + 1..e.end] {
            *t = ts.inside(c);
        }
        prev = Some(e);
    }
    Ok(tags)
}

/// Position of the first IOB2 violation, if any.
pub fn first_invalid(tags: &[usize], ts: &TagSet) -> Option<usize> {
    let mut prev = None;
    for (i, &t) in tags.iter().enumerate() {
        if t >= ts.len() || !ts.allowed(prev, t) {
            return Some(i);
        }
        prev = Some(t);
    }
    None
}

pub fn is_valid(tags: &[usize], ts: &TagSet) -> bool {
    first_invalid(tags, ts).is_none()
}

/// Inverse of [`encode`]. Input must be valid IOB2; run
/// [`filter_invalid`] first on raw model output.
pub fn decode(tags: &[usize], ts: &TagSet) -> Result<Vec<Entity>> {
    if let Some(position) = first_invalid(tags, ts) {
        return Err(Error::InvalidSequence {
            position,
            reason: format!(
                "{} cannot follow {}",
                tags.get(position).map_or("?", |&t| if t < ts.len() { ts.name(t) } else { "?" }),
                if position == 0 { "sequence start" } else { ts.name(tags[position - 1]) }
            ),
        });
    }
    Ok(decode_lenient(tags, ts))
}

/// Chunk extraction with conlleval semantics: an `I-X` that does not continue
/// an `X` chunk opens a new one.
pub fn decode_lenient(tags: &[usize], ts: &TagSet) -> Vec<Entity> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None; // (start, class)
    for (i, &t) in tags.iter().enumerate() {
        let continues = matches!((ts.tag(t), open), (Tag::Inside(c), Some((_, oc))) if c == oc);
        if continues {
            continue;
        }
        if let Some((s, c)) = open.take() {
            out.push(Entity::new(s, i, ts.classes()[c].clone()));
        }
        match ts.tag(t) {
            Tag::Begin(c) | Tag::Inside(c) => open = Some((i, c)),
            Tag::Outside => {}
        }
    }
    if let Some((s, c)) = open {
        out.push(Entity::new(s, tags.len(), ts.classes()[c].clone()));
    }
    out
}

/// Single left-to-right pass: an `I-X` whose (already rewritten) predecessor
/// is not `B-X` or `I-X` becomes `O`.
pub fn filter_invalid(tags: &[usize], ts: &TagSet) -> TagSequence {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev = None;
    for &t in tags {
        let t = if ts.allowed(prev, t) { t } else { ts.outside() };
        out.push(t);
        prev = Some(t);
    }
    out
}
