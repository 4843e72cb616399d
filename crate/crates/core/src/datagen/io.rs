//! Dataset CSV format and the binary task-family cache.
//!
//! Dataset files are UTF-8 CSV with the header line
//! `#xlab-dataset v1, dim=<d>, classes=<K>`, one row per sample holding the
//! feature values and, for labeled datasets, the integer label in the last
//! column. Reals are written with 17 significant digits so a save/load
//! round trip reproduces the exact bits. This is also the ingestion point
//! for embedding vectors computed outside the lab.

use std::path::Path;

use crate::binfmt::{ArtifactKind, Reader, Writer};
use crate::datagen::{Dataset, SplitTag, TaskFamily};
use crate::error::{Error, Result};
use crate::numcore::{write_f64_17, Matrix};

/// Serializes a dataset to the documented CSV format.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(dataset.len() * dataset.dim() * 24 + 64);
    out.push_str(&format!(
        "#xlab-dataset v1, dim={}, classes={}\n",
        dataset.dim(),
        dataset.class_count
    ));
    for i in 0..dataset.len() {
        let row = dataset.features.row(i);
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write_f64_17(&mut out, v);
        }
        if let Some(labels) = &dataset.labels {
            out.push(',');
            out.push_str(&labels[i].to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a dataset saved by [`save_dataset`] (or produced externally in the
/// same format). Labeled files get the `train` tag, unlabeled files `pool`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
    let (dim, classes) = parse_header(header)?;

    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut labeled: Option<bool> = None;
    let mut rows = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let has_label = match fields.len() {
            n if n == dim => false,
            n if n == dim + 1 => true,
            n => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {dim} or {} fields, found {n}", dim + 1),
                })
            }
        };
        match labeled {
            None => labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "mixed labeled and unlabeled rows".into(),
                })
            }
            _ => {}
        }
        for f in &fields[..dim] {
            let v: f64 = f.trim().parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad real value {f:?}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            data.push(v);
        }
        if has_label {
            let raw = fields[dim].trim();
            let l: usize = raw.parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad label {raw:?}: {e}"),
            })?;
            labels.push(l);
        }
        rows += 1;
    }

    let features = Matrix::from_vec(rows, dim, data)?;
    let labeled = labeled.unwrap_or(false);
    let tag = if labeled { SplitTag::Train } else { SplitTag::Pool };
    // Label range check happens in Dataset::new and reports as validation.
    Dataset::new(features, labeled.then_some(labels), classes, tag)
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.into(),
    };
    let rest = header
        .strip_prefix("#xlab-dataset v1,")
        .ok_or_else(|| err("missing '#xlab-dataset v1' header"))?;
    let mut dim = None;
    let mut classes = None;
    for part in rest.split(',') {
        let part = part.trim();
        if let Some(v) = part.strip_prefix("dim=") {
            dim = Some(v.parse::<usize>().map_err(|e| err(&format!("bad dim: {e}")))?);
        } else if let Some(v) = part.strip_prefix("classes=") {
            classes =
                Some(v.parse::<usize>().map_err(|e| err(&format!("bad classes: {e}")))?);
        } else {
            return Err(err(&format!("unrecognized header field {part:?}")));
        }
    }
    match (dim, classes) {
        (Some(d), Some(k)) if d > 0 => Ok((d, k)),
        (Some(0), _) => Err(err("dim must be positive")),
        _ => Err(err("header must declare dim and classes")),
    }
}

/// Writes the family cache artifact (binary, same magic scheme as models).
pub fn save_family(family: &TaskFamily, path: impl AsRef<Path>) -> Result<()> {
    let mut w = Writer::new(ArtifactKind::TaskFamily);
    w.u32(family.input_dim() as u32);
    w.u32(family.concepts() as u32);
    w.f64(family.scale());
    w.u64(family.seed());
    w.f64_slice(family.means().as_slice());
    std::fs::write(path, w.into_bytes())?;
    Ok(())
}

/// Loads a family cache artifact written by [`save_family`].
pub fn load_family(path: impl AsRef<Path>) -> Result<TaskFamily> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes, ArtifactKind::TaskFamily)?;
    let input_dim = r.u32()? as usize;
    let concepts = r.u32()? as usize;
    let scale = r.f64()?;
    let seed = r.u64()?;
    let means = Matrix::from_vec(concepts, input_dim, r.f64_vec(concepts * input_dim)?)?;
    r.finish()?;
    Ok(TaskFamily::from_parts(input_dim, means, scale, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::make_task_family;
    use crate::numcore::RngStream;

    fn scratch() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let dir = scratch();
        let path = dir.path().join("d.csv");
        let mut rng = RngStream::new(77);
        let data: Vec<f64> = (0..40).map(|_| rng.normal_f64() * 1e3).collect();
        let ds = Dataset::new(
            Matrix::from_vec(10, 4, data).unwrap(),
            Some((0..10).map(|i| i % 3).collect()),
            3,
            SplitTag::Train,
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.features.bits_eq(&ds.features));
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.class_count, 3);
    }

    #[test]
    fn unlabeled_round_trip() {
        let dir = scratch();
        let path = dir.path().join("pool.csv");
        let ds = Dataset::new(
            Matrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 0.25, -0.0, 9.0]).unwrap(),
            None,
            0,
            SplitTag::Pool,
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(!back.is_labeled());
        assert_eq!(back.split_tag, SplitTag::Pool);
        assert!(back.features.bits_eq(&ds.features));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let dir = scratch();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "#xlab-dataset v1, dim=3, classes=2\n1.0,2.0,3.0,1\n1.0,2.0,3.0,4.0,1\n",
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_must_match_format() {
        let dir = scratch();
        let path = dir.path().join("hdr.csv");
        std::fs::write(&path, "dim=3, classes=2\n").unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_range_label_is_validation_error() {
        let dir = scratch();
        let path = dir.path().join("lbl.csv");
        std::fs::write(&path, "#xlab-dataset v1, dim=2, classes=2\n0.0,0.0,5\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn family_cache_round_trip() {
        let dir = scratch();
        let path = dir.path().join("fam.xlab");
        let fam = make_task_family(123, 16, 24, 0.8).unwrap();
        save_family(&fam, &path).unwrap();
        let back = load_family(&path).unwrap();
        assert!(back.means().bits_eq(fam.means()));
        assert_eq!(back.seed(), fam.seed());
        assert_eq!(back.scale(), fam.scale());

        // Cached file equals a regeneration from the recorded seed.
        let regen = make_task_family(back.seed(), back.input_dim(), back.concepts(), back.scale())
            .unwrap();
        assert!(regen.means().bits_eq(back.means()));
    }

    #[test]
    fn family_cache_rejects_foreign_bytes() {
        let dir = scratch();
        let path = dir.path().join("junk.xlab");
        std::fs::write(&path, b"not an artifact").unwrap();
        assert!(matches!(load_family(&path), Err(Error::Format(_))));
    }
}
