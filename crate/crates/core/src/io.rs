//! CSV file formats for datasets, features, predictions, optimization
//! instances and simple per-element columns.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::milp::{InstanceRow, OptimizationInstance};
use crate::model::{Dataset, Element, LabelAlphabet, ModelError, Prediction, PredictionSet};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: expected `{expected}`, got `{got}`")]
    Header { expected: String, got: String },
    #[error("record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), IoError> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(g, e)| g != e) {
        return Err(IoError::Header {
            expected: expected.join(","),
            got: got.join(","),
        });
    }
    Ok(())
}

fn parse_f64(s: &str, record: usize, what: &str) -> Result<f64, IoError> {
    s.parse::<f64>().map_err(|e| IoError::Parse {
        record,
        message: format!("{what} `{s}`: {e}"),
    })
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

/// Raw dataset rows: (id, truth token, payload uri).
pub type DatasetRow = (String, Option<String>, Option<String>);

pub fn read_dataset_rows<R: Read>(r: R) -> Result<Vec<DatasetRow>, IoError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["id", "truth", "payload_uri"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push((rec[0].to_string(), non_empty(&rec[1]), non_empty(&rec[2])));
    }
    Ok(rows)
}

/// Reads `id,f1,...,fd`.
pub fn read_features<R: Read>(r: R) -> Result<HashMap<String, Vec<f64>>, IoError> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || &headers[0] != "id" || headers.len() < 2 {
        return Err(IoError::Header {
            expected: "id,f1,...,fd".into(),
            got: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    for (k, h) in headers.iter().enumerate().skip(1) {
        if h != format!("f{k}") {
            return Err(IoError::Header {
                expected: "id,f1,...,fd".into(),
                got: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
    }
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| parse_f64(v, i + 1, "feature"))
            .collect::<Result<Vec<_>, _>>()?;
        if out.insert(rec[0].to_string(), values).is_some() {
            return Err(IoError::Parse {
                record: i + 1,
                message: format!("duplicate feature row for `{}`", &rec[0]),
            });
        }
    }
    Ok(out)
}

/// Assembles a dataset. Without an explicit alphabet, the sorted distinct
/// truth tokens are used.
pub fn build_dataset(
    rows: Vec<DatasetRow>,
    mut features: Option<HashMap<String, Vec<f64>>>,
    alphabet: Option<LabelAlphabet>,
) -> Result<Dataset, IoError> {
    let alphabet = match alphabet {
        Some(a) => a,
        None => LabelAlphabet::from_tokens(rows.iter().filter_map(|r| r.1.clone()))?,
    };
    let mut elements = Vec::with_capacity(rows.len());
    for (id, truth, payload) in rows {
        let mut e = Element::new(id);
        e.payload_uri = payload;
        if let Some(t) = truth {
            e.truth = Some(alphabet.id(&t)?);
        }
        if let Some(f) = features.as_mut() {
            let v = f
                .remove(&e.id)
                .ok_or_else(|| IoError::Invalid(format!("no feature row for element `{}`", e.id)))?;
            e.features = Some(v);
        }
        elements.push(e);
    }
    Ok(Dataset::new(elements, alphabet)?)
}

pub fn read_dataset(
    dataset: &Path,
    features: Option<&Path>,
    alphabet: Option<LabelAlphabet>,
) -> Result<Dataset, IoError> {
    let rows = read_dataset_rows(open(dataset)?)?;
    let features = features.map(|p| read_features(open(p)?)).transpose()?;
    build_dataset(rows, features, alphabet)
}

pub fn write_dataset<W: Write>(w: W, dataset: &Dataset) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "truth", "payload_uri"])?;
    let alphabet = dataset.alphabet();
    for e in dataset.elements() {
        let truth = e.truth.map(|t| alphabet.name(t)).unwrap_or("");
        wtr.write_record([e.id.as_str(), truth, e.payload_uri.as_deref().unwrap_or("")])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_features<W: Write>(w: W, dataset: &Dataset) -> Result<(), IoError> {
    let dim = dataset
        .feature_dim()
        .ok_or_else(|| IoError::Invalid("dataset has no features".into()))?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend((1..=dim).map(|k| format!("f{k}")));
    wtr.write_record(&header)?;
    for e in dataset.elements() {
        let mut rec = vec![e.id.clone()];
        rec.extend(e.features.as_ref().unwrap().iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub element_id: String,
    pub classifier_id: String,
    pub label: String,
    pub confidence: f64,
}

pub fn read_prediction_rows<R: Read>(r: R) -> Result<Vec<PredictionRow>, IoError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["element_id", "classifier_id", "label", "confidence"])?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(PredictionRow {
            element_id: rec[0].to_string(),
            classifier_id: rec[1].to_string(),
            label: rec[2].to_string(),
            confidence: parse_f64(&rec[3], i + 1, "confidence")?,
        });
    }
    Ok(rows)
}

/// Classifiers are ordered by first appearance across `rows`.
pub fn build_predictions(rows: &[PredictionRow], alphabet: &LabelAlphabet) -> Result<PredictionSet, IoError> {
    let mut classifiers: Vec<String> = Vec::new();
    for r in rows {
        if !classifiers.contains(&r.classifier_id) {
            classifiers.push(r.classifier_id.clone());
        }
    }
    let mut set = PredictionSet::new(classifiers)?;
    for (i, r) in rows.iter().enumerate() {
        let j = set.classifier_index(&r.classifier_id)?;
        let p = Prediction::new(alphabet.id(&r.label)?, r.confidence).map_err(|e| IoError::Parse {
            record: i + 1,
            message: e.to_string(),
        })?;
        set.insert(j, &r.element_id, p)?;
    }
    Ok(set)
}

/// Reads and merges one or more prediction files.
pub fn read_predictions(paths: &[&Path], alphabet: &LabelAlphabet) -> Result<PredictionSet, IoError> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_prediction_rows(open(p)?)?);
    }
    build_predictions(&rows, alphabet)
}

pub fn write_predictions<W: Write>(w: W, set: &PredictionSet, alphabet: &LabelAlphabet) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["element_id", "classifier_id", "label", "confidence"])?;
    for id in set.element_ids() {
        for (j, c) in set.classifiers().iter().enumerate() {
            if let Some(p) = set.get(j, id) {
                wtr.write_record([id.as_str(), c.as_str(), alphabet.name(p.label), &p.confidence.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `z,b,theta1,...,thetan`.
pub fn read_instance<R: Read>(r: R) -> Result<OptimizationInstance, IoError> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    let n = headers.len().saturating_sub(2);
    let ok = n >= 1
        && &headers[0] == "z"
        && &headers[1] == "b"
        && headers.iter().skip(2).enumerate().all(|(j, h)| h == format!("theta{}", j + 1));
    if !ok {
        return Err(IoError::Header {
            expected: "z,b,theta1,...,thetan".into(),
            got: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let bit = |s: &str, record: usize| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(IoError::Parse {
            record,
            message: format!("expected 0 or 1, got `{s}`"),
        }),
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let theta = rec
            .iter()
            .skip(2)
            .map(|v| parse_f64(v, i + 1, "theta"))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(InstanceRow {
            theta,
            z: bit(&rec[0], i + 1)?,
            b: bit(&rec[1], i + 1)?,
        });
    }
    OptimizationInstance::new(n, rows).map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn write_instance<W: Write>(w: W, inst: &OptimizationInstance) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["z".to_string(), "b".to_string()];
    header.extend((1..=inst.n()).map(|j| format!("theta{j}")));
    wtr.write_record(&header)?;
    for r in inst.rows() {
        let mut rec = vec![(r.z as u8).to_string(), (r.b as u8).to_string()];
        rec.extend(r.theta.iter().map(|t| t.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a two-column `id,<value_column>` file as strings.
pub fn read_id_column<R: Read>(r: R, value_column: &str) -> Result<Vec<(String, String)>, IoError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["id", value_column])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

/// Reads `id,<value_column>` with numeric values.
pub fn read_id_values<R: Read>(r: R, value_column: &str) -> Result<HashMap<String, f64>, IoError> {
    read_id_column(r, value_column)?
        .into_iter()
        .enumerate()
        .map(|(i, (id, v))| Ok((id, parse_f64(&v, i + 1, value_column)?)))
        .collect()
}

pub fn write_id_column<W: Write, V: ToString>(
    w: W,
    value_column: &str,
    rows: impl IntoIterator<Item = (String, V)>,
) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", value_column])?;
    for (id, v) in rows {
        wtr.write_record([id, v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_file<T>(path: &Path, f: impl FnOnce(File) -> Result<T, IoError>) -> Result<T, IoError> {
    f(open(path)?)
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut File) -> Result<(), IoError>) -> Result<(), IoError> {
    let mut file = create(path)?;
    f(&mut file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelId;

    #[test]
    fn dataset_with_features_parses() {
        let ds = "id,truth,payload_uri\na,cat,img/a.png\nb,,\nc,dog,\n";
        let fs = "id,f1,f2\nb,0.5,1\na,1.5,-2\nc,0,0\n";
        let d = build_dataset(
            read_dataset_rows(ds.as_bytes()).unwrap(),
            Some(read_features(fs.as_bytes()).unwrap()),
            None,
        )
        .unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.alphabet().labels(), ["cat", "dog"]);
        assert_eq!(d.element(0).features.as_deref(), Some(&[1.5, -2.0][..]));
        assert_eq!(d.element(0).payload_uri.as_deref(), Some("img/a.png"));
        assert_eq!(d.element(1).truth, None);
        assert_eq!(d.element(2).truth, Some(LabelId(1)));
    }

    #[test]
    fn wrong_headers_rejected() {
        assert!(matches!(
            read_dataset_rows("id,label,uri\n".as_bytes()),
            Err(IoError::Header { .. })
        ));
        assert!(read_features("id,x1\n".as_bytes()).is_err());
        assert!(read_instance("z,b,t1\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_confidence_rejected_at_parse() {
        let a = LabelAlphabet::new(["x", "y"]).unwrap();
        let rows = read_prediction_rows("element_id,classifier_id,label,confidence\ne1,c1,x,0\n".as_bytes()).unwrap();
        assert!(matches!(build_predictions(&rows, &a), Err(IoError::Parse { .. })));
    }

    #[test]
    fn predictions_roundtrip() {
        let a = LabelAlphabet::new(["x", "y"]).unwrap();
        let text = "element_id,classifier_id,label,confidence\ne1,c1,x,0.9\ne1,c2,y,0.25\ne2,c1,y,1\ne2,c2,y,0.5\n";
        let set = build_predictions(&read_prediction_rows(text.as_bytes()).unwrap(), &a).unwrap();
        assert_eq!(set.n(), 2);
        let mut out = Vec::new();
        write_predictions(&mut out, &set, &a).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn instance_roundtrip() {
        let text = "z,b,theta1,theta2\n1,1,0.9,0.8\n0,0,0.5,0.25\n";
        let inst = read_instance(text.as_bytes()).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.m(), 2);
        let mut out = Vec::new();
        write_instance(&mut out, &inst).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert!(read_instance("z,b,theta1\n0,1,0.5\n".as_bytes()).is_err());
    }
}
