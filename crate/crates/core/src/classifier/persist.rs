use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::logistic::LogisticModel;
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

const FORMAT: &str = "qfe-logistic/1";

/// On-disk classifier: the model plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub attribute_name: String,
    pub group_names: Vec<String>,
    /// SHA-256 over the training documents' ids, labels and tokens.
    pub training_fingerprint: String,
    pub cv_accuracy: Option<f64>,
    pub model: LogisticModel,
}

impl ModelFile {
    pub fn new(model: LogisticModel, corpus: &Corpus, training: &[Document], cv_accuracy: Option<f64>) -> Self {
        Self {
            format: FORMAT.to_string(),
            attribute_name: corpus.attribute_name.clone(),
            group_names: corpus.groups.names().to_vec(),
            training_fingerprint: fingerprint(training),
            cv_accuracy,
            model,
        }
    }
}

pub fn fingerprint(docs: &[Document]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        h.update(d.id.as_bytes());
        h.update([0]);
        h.update(d.group.map_or(u64::MAX, |g| g as u64).to_le_bytes());
        for t in &d.tokens {
            h.update(t.as_bytes());
            h.update([1]);
        }
        h.update([2]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_model<W: Write>(file: &ModelFile, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, file)?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_reader(r)?;
    if file.format != FORMAT {
        return Err(Error::invalid("model file", format!("unsupported format {:?}", file.format)));
    }
    let m = &file.model;
    if m.weights.len() != m.class_count * (m.vectorizer.len() + 1) || m.vectorizer.idf().len() != m.vectorizer.len() {
        return Err(Error::invalid("model file", "weight matrix does not match the vocabulary"));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, ClassifierHyperParams};
    use crate::corpus::GroupTable;

    #[test]
    fn model_file_roundtrip() {
        let docs = vec![
            Document::new("a", vec!["x".into(), "x".into(), "y".into()], Some(0)),
            Document::new("b", vec!["y".into(), "y".into(), "x".into()], Some(1)),
        ];
        let corpus = Corpus::new(docs.clone(), GroupTable::from_names(["m", "n"]), "attr").unwrap();
        let model = train(&docs, 2, ClassifierHyperParams::default()).unwrap();
        let file = ModelFile::new(model, &corpus, &docs, None);
        let mut buf = Vec::new();
        write_model(&file, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back.model.weights, file.model.weights);
        assert_eq!(back.training_fingerprint, fingerprint(&docs));
        let x = back.model.featurize(&["x".to_string()]);
        assert_eq!(back.model.posterior_of(&x), file.model.posterior_of(&x));
    }
}
