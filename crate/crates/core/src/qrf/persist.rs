//! JSON persistence for trained forests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forest::Forest;
use super::QrfError;

const FORMAT: &str = "qpost-forest";
const VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'a str,
    version: u32,
    forest: &'a Forest,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    forest: Forest,
}

impl Forest {
    /// Writes the forest, its training table and in-bag samples. Floats round
    /// trip bit-exactly.
    pub fn write_json<W: Write>(&self, w: W) -> Result<(), QrfError> {
        let env = EnvelopeRef {
            format: FORMAT,
            version: VERSION,
            forest: self,
        };
        serde_json::to_writer(w, &env).map_err(|e| QrfError::Format(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Forest, QrfError> {
        let env: Envelope =
            serde_json::from_reader(r).map_err(|e| QrfError::Format(e.to_string()))?;
        if env.format != FORMAT {
            return Err(QrfError::Format(format!("unexpected format {:?}", env.format)));
        }
        if env.version != VERSION {
            return Err(QrfError::Format(format!("unsupported version {}", env.version)));
        }
        let f = env.forest;
        f.check_consistency()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), QrfError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Forest, QrfError> {
        Forest::read_json(BufReader::new(File::open(path)?))
    }

    fn check_consistency(&self) -> Result<(), QrfError> {
        let n = self.responses.len();
        let bad = |m: String| Err(QrfError::Format(m));
        self.config
            .validate(n)
            .map_err(|e| QrfError::Format(e.to_string()))?;
        if self.leads.len() != n || self.labels.len() != n {
            return bad("covariate columns differ in length".into());
        }
        if self.trees.len() != self.config.num_trees || self.inbag.len() != self.trees.len() {
            return bad("tree count does not match config".into());
        }
        if !self.label_names.windows(2).all(|w| w[0] < w[1]) {
            return bad("label names not sorted and distinct".into());
        }
        if self.labels.iter().any(|&l| l as usize >= self.label_names.len()) {
            return bad("label index out of range".into());
        }
        if self.responses.iter().any(|v| !v.is_finite()) {
            return bad("non-finite response".into());
        }
        for (t, (tree, rows)) in self.trees.iter().zip(&self.inbag).enumerate() {
            if rows.iter().any(|&r| r as usize >= n) {
                return bad(format!("tree {t}: in-bag row out of range"));
            }
            tree.validate(n)
                .map_err(|m| QrfError::Format(format!("tree {t}: {m}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::{ErrorSample, ErrorTable};
    use crate::qrf::{CovariateVector, ForestConfig};

    fn forest() -> Forest {
        let rows = (0..80)
            .map(|i| ErrorSample {
                lead_hours: i % 13,
                model_label: ["x", "y", "z"][(i % 3) as usize].into(),
                error: (i as f64 * 0.37).sin() / 3.0,
            })
            .collect();
        let cfg = ForestConfig {
            num_trees: 8,
            sample_count: 40,
            ..ForestConfig::default()
        };
        Forest::train(&ErrorTable::from_rows(rows).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let f = forest();
        let mut buf = Vec::new();
        f.write_json(&mut buf).unwrap();
        let g = Forest::read_json(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let x = CovariateVector::new(7, "y");
        let lv = [0.1, 0.5, 0.9];
        let a = f.predict_quantiles(&x, &lv).unwrap();
        let b = g.predict_quantiles(&x, &lv).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_header_and_corruption() {
        let f = forest();
        let mut buf = Vec::new();
        f.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let wrong = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(Forest::read_json(wrong.as_bytes()), Err(QrfError::Format(_))));
        let wrong = text.replacen("qpost-forest", "other", 1);
        assert!(Forest::read_json(wrong.as_bytes()).is_err());
        assert!(Forest::read_json(&b"{"[..]).is_err());

        let mut g = f.clone();
        g.inbag[0].push(10_000);
        let mut buf = Vec::new();
        g.write_json(&mut buf).unwrap();
        assert!(Forest::read_json(buf.as_slice()).is_err());
    }
}
