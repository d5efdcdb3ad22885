//! Documents, corpora, ranked lists and their file formats.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::tokenize;
use crate::simplex::PrevalenceVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub group: Option<usize>,
    pub relevant: Option<bool>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, group: Option<usize>) -> Self {
        Self {
            id: id.into(),
            tokens,
            group,
            relevant: None,
        }
    }
}

/// Sensitive-attribute group names; a group's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTable(Vec<String>);

impl GroupTable {
    /// Table from arbitrary names, sorted and deduplicated.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        Self(set.into_iter().collect())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.0[index]
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub class_count: usize,
    pub attribute_name: String,
    pub groups: GroupTable,
}

impl Corpus {
    /// Validates id uniqueness and group bounds.
    pub fn new(documents: Vec<Document>, groups: GroupTable, attribute_name: impl Into<String>) -> Result<Self> {
        let class_count = groups.len();
        if class_count < 2 {
            return Err(Error::invalid("corpus", "at least two groups are required"));
        }
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::invalid("corpus", format!("duplicate document id {:?}", d.id)));
            }
            if let Some(g) = d.group {
                if g >= class_count {
                    return Err(Error::invalid(
                        "corpus",
                        format!("document {:?} has group {g} >= class count {class_count}", d.id),
                    ));
                }
            }
        }
        Ok(Self {
            documents,
            class_count,
            attribute_name: attribute_name.into(),
            groups,
        })
    }

    /// A corpus sharing this one's metadata but holding other documents.
    pub fn with_documents(&self, documents: Vec<Document>) -> Self {
        Self {
            documents,
            class_count: self.class_count,
            attribute_name: self.attribute_name.clone(),
            groups: self.groups.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.group.is_some())
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.documents
            .iter()
            .map(|d| d.group.ok_or(Error::UnlabeledItem))
            .collect()
    }

    /// Collapses the groups into the binary attribute "is `positive`". The
    /// positive group gets index 1.
    pub fn binarize(&self, positive: &str) -> Result<Self> {
        let pos = self
            .groups
            .index_of(positive)
            .ok_or_else(|| Error::invalid("binarize", format!("unknown group {positive:?}")))?;
        let groups = GroupTable::from_names(["0_rest".to_string(), format!("1_{positive}")]);
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                group: d.group.map(|g| usize::from(g == pos)),
                ..d.clone()
            })
            .collect();
        Corpus::new(documents, groups, self.attribute_name.clone())
    }

    /// Reads a JSON Lines corpus. Group names are mapped through `groups`
    /// when given; otherwise the table is the sorted set of names found.
    pub fn read_jsonl<R: BufRead>(reader: R, groups: Option<&GroupTable>) -> Result<Self> {
        let raw = parse_lines(reader)?;
        let table = match groups {
            Some(t) => t.clone(),
            None => GroupTable::from_names(raw.iter().filter_map(|(_, l)| l.group.clone())),
        };
        let mut docs = Vec::with_capacity(raw.len());
        for (line, l) in raw {
            let group = match &l.group {
                None => None,
                Some(name) => Some(table.index_of(name).ok_or_else(|| Error::Parse {
                    line,
                    detail: format!("unknown group {name:?}"),
                })?),
            };
            docs.push(Document {
                id: l.id,
                tokens: tokenize(&l.text),
                group,
                relevant: l.relevant,
            });
        }
        Corpus::new(docs, table, "group")
    }

    /// Writes the corpus as JSON Lines, joining tokens back into text.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            id: &'a str,
            text: String,
            group: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            relevant: Option<bool>,
        }
        for d in &self.documents {
            let line = Line {
                id: &d.id,
                text: d.tokens.join(" "),
                group: d.group.map(|g| self.groups.name(g)),
                relevant: d.relevant,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct Line {
    id: String,
    text: String,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    relevant: Option<bool>,
}

fn parse_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, Line)>> {
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        raw.push((i + 1, parsed));
    }
    if raw.is_empty() {
        return Err(Error::Empty("corpus file"));
    }
    Ok(raw)
}

/// Reads JSON Lines documents in file order, dropping any group field.
pub fn read_unlabeled_jsonl<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    Ok(parse_lines(reader)?
        .into_iter()
        .map(|(_, l)| Document {
            id: l.id,
            tokens: tokenize(&l.text),
            group: None,
            relevant: l.relevant,
        })
        .collect())
}

/// Empirical class frequencies of a fully labeled slice.
pub fn prevalence_of<'a, I>(docs: I, class_count: usize) -> Result<PrevalenceVector>
where
    I: IntoIterator<Item = &'a Document>,
{
    prevalence_of_labels(
        docs.into_iter().map(|d| d.group.ok_or(Error::UnlabeledItem)),
        class_count,
    )
}

pub(crate) fn prevalence_of_labels<I>(labels: I, class_count: usize) -> Result<PrevalenceVector>
where
    I: IntoIterator<Item = Result<usize>>,
{
    let mut counts = vec![0usize; class_count];
    let mut total = 0usize;
    for label in labels {
        let g = label?;
        if g >= class_count {
            return Err(Error::Dimension(format!("label {g} >= class count {class_count}")));
        }
        counts[g] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty("ground-truth slice"));
    }
    Ok(PrevalenceVector::from_unchecked(
        counts.into_iter().map(|c| c as f64 / total as f64).collect(),
    ))
}

/// Ranked retrieval output. Entries index into the corpus the list was
/// retrieved from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc: usize,
    pub score: f64,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.doc).collect()
    }

    /// The top `k` entries (all of them when `k` exceeds the length).
    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for w in self.entries.windows(2) {
            if w[1].score > w[0].score {
                return Err(Error::invalid("ranked list", "scores increase"));
            }
        }
        for e in &self.entries {
            if !seen.insert(e.doc) {
                return Err(Error::invalid("ranked list", format!("document {} repeated", e.doc)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// Parses `query_id<TAB>query text` lines.
pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            detail: "expected query_id<TAB>query text".into(),
        })?;
        out.push(Query {
            id: id.to_string(),
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn write_queries<W: Write>(queries: &[Query], mut w: W) -> Result<()> {
    for q in queries {
        writeln!(w, "{}\t{}", q.id, q.text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(groups: &[usize]) -> Vec<Document> {
        groups
            .iter()
            .enumerate()
            .map(|(i, &g)| Document::new(format!("d{i}"), vec![], Some(g)))
            .collect()
    }

    #[test]
    fn prevalence_counts() {
        let p = prevalence_of(&labeled(&[0, 0, 1, 1, 1, 2, 2, 2, 2, 2]), 3).unwrap();
        assert_eq!(p.as_slice(), &[0.2, 0.3, 0.5]);
        let p = prevalence_of(&labeled(&[0, 0, 0, 0]), 2).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        let p = prevalence_of(&labeled(&[0, 1, 2, 0, 1, 2]), 3).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn prevalence_errors() {
        let mut docs = labeled(&[0, 1]);
        docs[1].group = None;
        assert!(matches!(prevalence_of(&docs, 2), Err(Error::UnlabeledItem)));
        assert_eq!(
            prevalence_of(&docs, 2).unwrap_err().to_string(),
            "unlabeled item in ground-truth count"
        );
        assert!(matches!(prevalence_of(&[], 2), Err(Error::Empty(_))));
    }

    #[test]
    fn jsonl_roundtrip_and_group_table() {
        let text = r#"{"id":"a","text":"Cats chase mice","group":"south"}
{"id":"b","text":"dogs","group":"north","relevant":true}
{"id":"c","text":"birds","group":null}
"#;
        let c = Corpus::read_jsonl(text.as_bytes(), None).unwrap();
        assert_eq!(c.groups.names(), &["north".to_string(), "south".to_string()]);
        assert_eq!(c.documents[0].group, Some(1));
        assert_eq!(c.documents[0].tokens, vec!["cat", "chase", "mice"]);
        assert_eq!(c.documents[1].relevant, Some(true));
        assert_eq!(c.documents[2].group, None);

        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let again = Corpus::read_jsonl(buf.as_slice(), None).unwrap();
        assert_eq!(again.documents[1], c.documents[1]);
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = "{\"id\":\"a\",\"text\":\"x\",\"group\":\"g\"}\n{not json}\n";
        match Corpus::read_jsonl(text.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![
            Document::new("a", vec![], Some(0)),
            Document::new("a", vec![], Some(1)),
        ];
        assert!(Corpus::new(docs, GroupTable::from_names(["x", "y"]), "g").is_err());
    }

    #[test]
    fn queries_file() {
        let q = read_queries("q1\tfair ranking\nq2\tbm25 test\n".as_bytes()).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[1].text, "bm25 test");
        assert!(read_queries("no tab here\n".as_bytes()).is_err());
    }
}
