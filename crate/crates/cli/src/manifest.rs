//! Monte Carlo evaluation manifests.
//!
//! ```json
//! {
//!   "texts": ["text_00", "text_01"],
//!   "references": { "high_00": "references/high_00.wav" },
//!   "candidates": { "text_00:high_00": "candidates/text_00__high_00.wav" },
//!   "candidate_template": "candidates/{text}__{ref}.wav",
//!   "n_runs": 50
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory. A candidate
//! is looked up in `candidates` first (keys are `"<text id>:<reference id>"`),
//! then by substituting both ids into `candidate_template`. Ids may not
//! contain `:`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use prosody_gs::audio::read_wav;
use prosody_gs::metrics::PairsProvider;
use prosody_gs::{AudioBuffer, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub texts: Vec<String>,
    pub references: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub candidates: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.contains(':') {
        return Err(Error::Parse(format!(
            "{kind} id {id:?} must be non-empty and free of ':'"
        )));
    }
    Ok(())
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        if self.texts.is_empty() || self.references.is_empty() {
            return Err(Error::Parse(
                "manifest needs at least one text and one reference".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for t in &self.texts {
            check_id("text", t)?;
            if !seen.insert(t) {
                return Err(Error::Parse(format!("duplicate text id {t:?}")));
            }
        }
        for r in self.references.keys() {
            check_id("reference", r)?;
        }
        for key in self.candidates.keys() {
            self.split_key(key)?;
        }
        if self.n_runs == Some(0) {
            return Err(Error::Parse("n_runs must be at least 1".into()));
        }
        Ok(())
    }

    fn split_key<'a>(&self, key: &'a str) -> Result<(&'a str, &'a str)> {
        let (t, r) = key.split_once(':').ok_or_else(|| {
            Error::Parse(format!("candidate key {key:?} is not \"text:reference\""))
        })?;
        if !self.texts.iter().any(|x| x == t) || !self.references.contains_key(r) {
            return Err(Error::Parse(format!(
                "candidate key {key:?} names an unknown text or reference"
            )));
        }
        Ok((t, r))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn reference_ids(&self) -> Vec<String> {
        self.references.keys().cloned().collect()
    }

    /// A provider reading WAV files relative to `base_dir`.
    pub fn provider(&self, base_dir: &Path) -> Result<ManifestProvider> {
        let mut candidates = HashMap::new();
        for (key, path) in &self.candidates {
            let (t, r) = self.split_key(key)?;
            candidates.insert((t.to_string(), r.to_string()), base_dir.join(path));
        }
        Ok(ManifestProvider {
            base_dir: base_dir.to_path_buf(),
            references: self
                .references
                .iter()
                .map(|(id, p)| (id.clone(), base_dir.join(p)))
                .collect(),
            candidates,
            template: self.candidate_template.clone(),
        })
    }
}

pub struct ManifestProvider {
    base_dir: PathBuf,
    references: BTreeMap<String, PathBuf>,
    candidates: HashMap<(String, String), PathBuf>,
    template: Option<String>,
}

impl PairsProvider for ManifestProvider {
    fn reference(&self, reference_id: &str) -> Result<AudioBuffer> {
        let path = self
            .references
            .get(reference_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown reference {reference_id:?}")))?;
        read_wav(path)
    }

    fn candidate(&self, text_id: &str, reference_id: &str) -> Result<AudioBuffer> {
        let key = (text_id.to_string(), reference_id.to_string());
        if let Some(path) = self.candidates.get(&key) {
            return read_wav(path);
        }
        match &self.template {
            Some(t) => read_wav(
                self.base_dir
                    .join(t.replace("{text}", text_id).replace("{ref}", reference_id)),
            ),
            None => Err(Error::InvalidInput(format!(
                "no candidate for text {text_id:?} and reference {reference_id:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = r#"{"texts":["a","b"],"references":{"r1":"x.wav"},"candidates":{"a:r1":"c.wav"},"n_runs":3}"#;
        let m = Manifest::from_json(text).unwrap();
        assert_eq!(m.n_runs, Some(3));
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_keys_and_ids() {
        for bad in [
            r#"{"texts":["a"],"references":{"r1":"x.wav"},"candidates":{"a-r1":"c.wav"}}"#,
            r#"{"texts":["a"],"references":{"r1":"x.wav"},"candidates":{"z:r1":"c.wav"}}"#,
            r#"{"texts":["a:b"],"references":{"r1":"x.wav"}}"#,
            r#"{"texts":["a","a"],"references":{"r1":"x.wav"}}"#,
            r#"{"texts":[],"references":{"r1":"x.wav"}}"#,
            r#"{"texts":["a"],"references":{"r1":"x.wav"},"extra":1}"#,
        ] {
            assert!(Manifest::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn template_resolution() {
        let m = Manifest::from_json(
            r#"{"texts":["t"],"references":{"r":"r.wav"},"candidate_template":"c/{text}_{ref}.wav"}"#,
        )
        .unwrap();
        let p = m.provider(Path::new("/nonexistent")).unwrap();
        let err = p.candidate("t", "r").unwrap_err();
        assert!(err.to_string().contains("c/t_r.wav"), "{err}");
    }
}
