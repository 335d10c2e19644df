use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::DatasetError;

/// Ordered gloss list with a reverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlossVocabulary {
    glosses: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl GlossVocabulary {
    pub fn new(glosses: Vec<String>) -> Result<Self, DatasetError> {
        let mut lookup = HashMap::with_capacity(glosses.len());
        for (i, g) in glosses.iter().enumerate() {
            if lookup.insert(g.clone(), i).is_some() {
                return Err(DatasetError::Format(format!("duplicate gloss `{g}` in vocabulary")));
            }
        }
        Ok(Self { glosses, lookup })
    }

    pub fn len(&self) -> usize {
        self.glosses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glosses.is_empty()
    }

    pub fn glosses(&self) -> &[String] {
        &self.glosses
    }

    /// Panics when `index` is out of range.
    pub fn gloss(&self, index: usize) -> &str {
        &self.glosses[index]
    }

    pub fn index_of(&self, gloss: &str) -> Option<usize> {
        self.lookup.get(gloss).copied()
    }
}

impl Serialize for GlossVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.glosses.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GlossVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let glosses = Vec::<String>::deserialize(d)?;
        GlossVocabulary::new(glosses).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(rename = "val", alias = "validation")]
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "val" | "validation" | "valid" | "dev" => Ok(Split::Validation),
            "test" | "testing" => Ok(Split::Test),
            other => Err(DatasetError::Format(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub source_id: String,
    pub gloss: String,
    pub split: Split,
    /// Video file name relative to the videos directory.
    pub video: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    /// sha256 of the index file bytes, hex.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    pub provenance: Provenance,
}

impl DatasetIndex {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Entry count per gloss and split, glosses in vocabulary order.
    pub fn stats(&self, vocab: &GlossVocabulary) -> IndexStats {
        let mut per_gloss: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
        let mut totals = [0usize; 3];
        for e in &self.entries {
            let col = Split::ALL.iter().position(|s| *s == e.split).unwrap_or(0);
            if let Some(g) = vocab.index_of(&e.gloss) {
                per_gloss.entry(g).or_default()[col] += 1;
            }
            totals[col] += 1;
        }
        IndexStats {
            glosses: vocab.len(),
            train: totals[0],
            val: totals[1],
            test: totals[2],
            per_gloss: per_gloss
                .into_iter()
                .map(|(g, c)| (vocab.gloss(g).to_string(), c))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexStats {
    pub glosses: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// gloss → [train, val, test]
    pub per_gloss: Vec<(String, [usize; 3])>,
}

/// Reads a dataset index and keeps the first `subset_size` glosses in the
/// file's own order (`None` keeps all).
///
/// Two shapes are accepted. The published WLASL shape is a list of
/// `{"gloss": .., "instances": [{"video_id": .., "split": .., ..}]}` with any
/// extra fields ignored. The flat shape is
/// `{"glosses": [..], "entries": [{"source_id", "gloss", "split", "video"?}]}`.
pub fn load_index(path: &Path, subset_size: Option<usize>) -> Result<(DatasetIndex, GlossVocabulary), DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let provenance = Provenance {
        path: path.to_path_buf(),
        digest: hex::encode(Sha256::digest(&bytes)),
    };
    let text = String::from_utf8(bytes).map_err(|_| DatasetError::Format("index is not UTF-8".into()))?;
    let (entries, vocab) = parse_index(&text, subset_size)?;
    Ok((DatasetIndex { entries, provenance }, vocab))
}

pub fn parse_index(text: &str, subset_size: Option<usize>) -> Result<(Vec<IndexEntry>, GlossVocabulary), DatasetError> {
    let root: Value = serde_json::from_str(text).map_err(|e| DatasetError::Format(format!("index JSON: {e}")))?;
    let (all_glosses, raw) = match &root {
        Value::Array(items) => wlasl_shape(items)?,
        Value::Object(obj) => flat_shape(obj)?,
        _ => return Err(DatasetError::Format("index must be a JSON array or object".into())),
    };
    let keep = subset_size.unwrap_or(all_glosses.len()).min(all_glosses.len());
    if subset_size.is_some_and(|n| n > all_glosses.len()) {
        log::info!(
            "index has {} glosses, fewer than the requested subset of {}",
            all_glosses.len(),
            subset_size.unwrap_or(0)
        );
    }
    let vocab = GlossVocabulary::new(all_glosses[..keep].to_vec())?;
    let known: HashSet<&str> = all_glosses.iter().map(String::as_str).collect();

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for entry in raw {
        if !known.contains(entry.gloss.as_str()) {
            return Err(DatasetError::Format(format!(
                "entry `{}` references unknown gloss `{}`",
                entry.source_id, entry.gloss
            )));
        }
        if vocab.index_of(&entry.gloss).is_none() {
            continue;
        }
        if !seen.insert(entry.source_id.clone()) {
            return Err(DatasetError::Format(format!("duplicate source id `{}`", entry.source_id)));
        }
        entries.push(entry);
    }
    Ok((entries, vocab))
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn split_field(obj: &serde_json::Map<String, Value>, source_id: &str) -> Result<Split, DatasetError> {
    match string_field(obj, "split") {
        Some(s) => s.parse(),
        None => Err(DatasetError::MissingSplit {
            source_id: source_id.to_string(),
        }),
    }
}

fn wlasl_shape(items: &[Value]) -> Result<(Vec<String>, Vec<IndexEntry>), DatasetError> {
    let mut glosses = Vec::new();
    let mut entries = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| DatasetError::Format(format!("gloss record {i} is not an object")))?;
        let gloss = string_field(obj, "gloss")
            .ok_or_else(|| DatasetError::Format(format!("gloss record {i} has no `gloss` field")))?;
        let instances = obj
            .get("instances")
            .and_then(Value::as_array)
            .ok_or_else(|| DatasetError::Format(format!("gloss `{gloss}` has no `instances` list")))?;
        for (j, inst) in instances.iter().enumerate() {
            let inst = inst
                .as_object()
                .ok_or_else(|| DatasetError::Format(format!("gloss `{gloss}` instance {j} is not an object")))?;
            let source_id = string_field(inst, "video_id")
                .or_else(|| string_field(inst, "source_id"))
                .ok_or_else(|| DatasetError::Format(format!("gloss `{gloss}` instance {j} has no `video_id`")))?;
            let split = split_field(inst, &source_id)?;
            let video = string_field(inst, "video").unwrap_or_else(|| format!("{source_id}.mp4"));
            entries.push(IndexEntry {
                source_id,
                gloss: gloss.clone(),
                split,
                video,
            });
        }
        glosses.push(gloss);
    }
    Ok((glosses, entries))
}

fn flat_shape(obj: &serde_json::Map<String, Value>) -> Result<(Vec<String>, Vec<IndexEntry>), DatasetError> {
    let glosses = obj
        .get("glosses")
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::Format("flat index needs a `glosses` list".into()))?
        .iter()
        .map(|g| {
            g.as_str()
                .map(str::to_string)
                .ok_or_else(|| DatasetError::Format("`glosses` must contain strings".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let items = obj
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::Format("flat index needs an `entries` list".into()))?;
    let mut entries = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let e = item
            .as_object()
            .ok_or_else(|| DatasetError::Format(format!("entry {i} is not an object")))?;
        let source_id =
            string_field(e, "source_id").ok_or_else(|| DatasetError::Format(format!("entry {i} has no `source_id`")))?;
        let gloss = string_field(e, "gloss")
            .ok_or_else(|| DatasetError::Format(format!("entry `{source_id}` has no `gloss`")))?;
        let split = split_field(e, &source_id)?;
        let video = string_field(e, "video").unwrap_or_else(|| format!("{source_id}.mp4"));
        entries.push(IndexEntry {
            source_id,
            gloss,
            split,
            video,
        });
    }
    Ok((glosses, entries))
}

/// Serializes entries in the flat shape accepted by [`load_index`].
pub fn flat_index_json(vocab: &GlossVocabulary, entries: &[IndexEntry]) -> String {
    let doc = serde_json::json!({
        "glosses": vocab.glosses(),
        "entries": entries,
    });
    serde_json::to_string_pretty(&doc).expect("index serializes")
}
