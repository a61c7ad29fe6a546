//! TSV ingestion and emission.
//!
//! Formats:
//!   utterances: `id<TAB>side<TAB>text`   (side in LEFT / RIGHT / SHARED)
//!   pairs:      `id_a<TAB>id_b<TAB>label` (label in 0 / 1)

use super::{Corpus, LabelOracle, PairKey, PairMode, Side, StatedDataset, Utterance};
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct IngestReport {
    pub n_left: usize,
    pub n_right: usize,
    pub stated_positive: usize,
    pub stated_negative: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a corpus and its stated dataset, and seed the label oracle from the
/// positive pairs (transitive closure applied in symmetric mode).
pub fn ingest(
    utterance_path: &Path,
    pairs_path: &Path,
    mode: PairMode,
) -> Result<(Corpus, StatedDataset, LabelOracle, IngestReport)> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    let file = std::fs::File::open(utterance_path)?;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (id, side, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(side), Some(text)) => (id, side, text),
            _ => return Err(parse_err(utterance_path, lineno, "expected 3 tab-separated fields")),
        };
        let id: u32 = id
            .parse()
            .map_err(|_| parse_err(utterance_path, lineno, format!("bad id '{id}'")))?;
        let side = match side {
            "LEFT" => Side::Left,
            "RIGHT" => Side::Right,
            "SHARED" => Side::Shared,
            other => return Err(parse_err(utterance_path, lineno, format!("bad side '{other}'"))),
        };
        if text.is_empty() {
            return Err(parse_err(utterance_path, lineno, "empty text"));
        }
        match (mode, side) {
            (PairMode::Symmetric, Side::Shared) => left.push(Utterance { id, side, text: text.into() }),
            (PairMode::Bipartite, Side::Left) => left.push(Utterance { id, side, text: text.into() }),
            (PairMode::Bipartite, Side::Right) => right.push(Utterance { id, side, text: text.into() }),
            _ => {
                return Err(parse_err(
                    utterance_path,
                    lineno,
                    format!("side {} invalid in {:?} mode", side.as_str(), mode),
                ))
            }
        }
    }
    for store in [&mut left, &mut right] {
        store.sort_by_key(|u| u.id);
        for (i, utt) in store.iter().enumerate() {
            if utt.id as usize != i {
                return Err(parse_err(
                    utterance_path,
                    0,
                    format!("{} ids not dense: expected {i}, found {}", utt.side.as_str(), utt.id),
                ));
            }
        }
    }
    let corpus = Corpus::new(mode, left, right)?;

    let mut seen: HashMap<PairKey, bool> = HashMap::new();
    let mut ordered = Vec::new();
    let file = std::fs::File::open(pairs_path)?;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (a, b, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(l)) => (a, b, l),
            _ => return Err(parse_err(pairs_path, lineno, "expected 3 tab-separated fields")),
        };
        let a: u32 = a
            .parse()
            .map_err(|_| parse_err(pairs_path, lineno, format!("bad id '{a}'")))?;
        let b: u32 = b
            .parse()
            .map_err(|_| parse_err(pairs_path, lineno, format!("bad id '{b}'")))?;
        let label = match label {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(pairs_path, lineno, format!("bad label '{other}'"))),
        };
        let key = match mode {
            PairMode::Symmetric => {
                let n = corpus.n_left() as u32;
                if a >= n || b >= n {
                    return Err(parse_err(pairs_path, lineno, format!("dangling id in ({a},{b})")));
                }
                PairKey::symmetric(a, b)
                    .ok_or_else(|| parse_err(pairs_path, lineno, format!("self-pair ({a},{a})")))?
            }
            PairMode::Bipartite => {
                if a as usize >= corpus.n_left() || b as usize >= corpus.n_right() {
                    return Err(parse_err(pairs_path, lineno, format!("dangling id in ({a},{b})")));
                }
                PairKey::bipartite(a, b)
            }
        };
        match seen.insert(key, label) {
            Some(prev) if prev != label => {
                return Err(parse_err(
                    pairs_path,
                    lineno,
                    format!("conflicting labels for pair ({},{})", key.a, key.b),
                ));
            }
            Some(_) => {} // exact duplicate, drop
            None => ordered.push((key, label)),
        }
    }

    let positives: Vec<PairKey> = ordered
        .iter()
        .filter(|(_, l)| *l)
        .map(|(k, _)| *k)
        .collect();
    let oracle = LabelOracle::from_positive_pairs(mode, corpus.n_left(), &positives);
    let report = IngestReport {
        n_left: corpus.n_left(),
        n_right: match mode {
            PairMode::Symmetric => 0,
            PairMode::Bipartite => corpus.n_right(),
        },
        stated_positive: positives.len(),
        stated_negative: ordered.len() - positives.len(),
    };
    Ok((corpus, StatedDataset::new(ordered), oracle, report))
}

pub fn write_utterances_tsv(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut emit = |utts: &[Utterance]| -> Result<()> {
        for u in utts {
            writeln!(w, "{}\t{}\t{}", u.id, u.side.as_str(), u.text)?;
        }
        Ok(())
    };
    emit(corpus.left())?;
    if corpus.mode() == PairMode::Bipartite {
        emit(corpus.right())?;
    }
    Ok(())
}

pub fn write_pairs_tsv(path: &Path, pairs: &[(PairKey, bool)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (key, label) in pairs {
        writeln!(w, "{}\t{}\t{}", key.a, key.b, u8::from(*label))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PairSpace;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn ingest_symmetric_seeds_closure() {
        let dir = tempfile::tempdir().unwrap();
        let utt = dir.path().join("utterances.tsv");
        let pairs = dir.path().join("pairs.tsv");
        write(&utt, "0\tSHARED\ta b\n1\tSHARED\tb c\n2\tSHARED\tc d\n3\tSHARED\td e\n");
        write(&pairs, "0\t1\t1\n1\t2\t1\n0\t3\t0\n");
        let (corpus, stated, oracle, report) =
            ingest(&utt, &pairs, PairMode::Symmetric).unwrap();
        assert_eq!(corpus.n_left(), 4);
        assert_eq!(report.stated_positive, 2);
        assert_eq!(report.stated_negative, 1);
        assert_eq!(stated.len(), 3);
        let space = PairSpace::symmetric((0..4).collect());
        assert_eq!(space.size(), 6);
        assert!(oracle.label(&PairKey { a: 0, b: 2 })); // closure
        assert!(!oracle.label(&PairKey { a: 0, b: 3 }));
    }

    #[test]
    fn dangling_id_is_fatal_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let utt = dir.path().join("u.tsv");
        let pairs = dir.path().join("p.tsv");
        write(&utt, "0\tSHARED\tx\n1\tSHARED\ty\n");
        write(&pairs, "0\t1\t1\n0\t9\t0\n");
        let err = ingest(&utt, &pairs, PairMode::Symmetric).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn conflicting_duplicate_label_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let utt = dir.path().join("u.tsv");
        let pairs = dir.path().join("p.tsv");
        write(&utt, "0\tSHARED\tx\n1\tSHARED\ty\n");
        write(&pairs, "0\t1\t1\n1\t0\t0\n");
        assert!(matches!(
            ingest(&utt, &pairs, PairMode::Symmetric),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn round_trip_through_tsv() {
        let cfg = crate::corpus::SyntheticConfig {
            n_clusters: 3,
            cluster_size: 3,
            n_distractors: 5,
            vocab: Default::default(),
            seed: 4,
        };
        let (corpus, oracle) = crate::corpus::gen_synthetic(&cfg).unwrap();
        let space = PairSpace::symmetric((0..corpus.n_left() as u32).collect());
        let positives: Vec<(PairKey, bool)> = oracle
            .positives_in(&space)
            .into_iter()
            .map(|k| (k, true))
            .collect();

        let dir = tempfile::tempdir().unwrap();
        let utt = dir.path().join("u.tsv");
        let pairs = dir.path().join("p.tsv");
        write_utterances_tsv(&utt, &corpus).unwrap();
        write_pairs_tsv(&pairs, &positives).unwrap();
        let (corpus2, stated2, oracle2, _) = ingest(&utt, &pairs, PairMode::Symmetric).unwrap();
        assert_eq!(corpus2.n_left(), corpus.n_left());
        for u in corpus.left() {
            assert_eq!(corpus2.left_text(u.id), u.text);
        }
        assert_eq!(stated2.len(), positives.len());
        for key in space.iter() {
            assert_eq!(oracle.label(&key), oracle2.label(&key));
        }
    }

    #[test]
    fn ingest_bipartite() {
        let dir = tempfile::tempdir().unwrap();
        let utt = dir.path().join("u.tsv");
        let pairs = dir.path().join("p.tsv");
        write(
            &utt,
            "0\tLEFT\twhere is x\n1\tLEFT\twhat is y\n0\tRIGHT\tArticle . x is here\n1\tRIGHT\tArticle . y is that\n",
        );
        write(&pairs, "0\t0\t1\n0\t1\t0\n1\t1\t1\n");
        let (corpus, _, oracle, report) = ingest(&utt, &pairs, PairMode::Bipartite).unwrap();
        assert_eq!((report.n_left, report.n_right), (2, 2));
        assert_eq!(corpus.n_nodes(), 4);
        assert!(oracle.label(&PairKey::bipartite(0, 0)));
        assert!(!oracle.label(&PairKey::bipartite(1, 0)));
    }
}
