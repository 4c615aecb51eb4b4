//! Text inputs: triples, id lists, SMILES, sequences and pair lists.
//!
//! Blank lines and lines starting with `#` are skipped everywhere. Parse
//! errors carry the file path and the 1-based line number.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use mosedti_core::kgraph::{KgOptions, KnowledgeGraph, Vocab};
use mosedti_core::moe::{Catalog, Pair};
use mosedti_core::seq_encoder::ResidueSequence;
use mosedti_core::smiles::{parse_smiles, MolecularGraph};
use mosedti_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Core { path: PathBuf, source: CoreError },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn fields(line: &str, n: usize, what: &str, lineno: usize) -> std::result::Result<Vec<String>, CoreError> {
    let parts: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
    if parts.len() != n || parts.iter().any(String::is_empty) {
        return Err(CoreError::Malformed {
            line: lineno,
            msg: format!("expected {n} tab-separated fields ({what}), found {}", parts.len()),
        });
    }
    Ok(parts)
}

fn located(path: &Path, e: CoreError) -> IoError {
    match e {
        CoreError::Malformed { line, msg } => IoError::Parse {
            path: path.into(),
            line,
            msg,
        },
        source => IoError::Core {
            path: path.into(),
            source,
        },
    }
}

pub fn parse_triples(text: &str) -> std::result::Result<Vec<(String, String, String)>, CoreError> {
    records(text)
        .map(|(n, l)| {
            let f = fields(l, 3, "head, relation, tail", n)?;
            Ok((f[0].clone(), f[1].clone(), f[2].clone()))
        })
        .collect()
}

pub fn parse_id_list(text: &str) -> std::result::Result<Vec<String>, CoreError> {
    records(text)
        .map(|(n, l)| Ok(fields(l, 1, "one id", n)?.remove(0)))
        .collect()
}

/// `id \t value` records; a repeated id is an error.
pub fn parse_keyed(text: &str, what: &str) -> std::result::Result<Vec<(String, String)>, CoreError> {
    let mut seen = BTreeSet::new();
    records(text)
        .map(|(n, l)| {
            let f = fields(l, 2, what, n)?;
            if !seen.insert(f[0].clone()) {
                return Err(CoreError::Malformed {
                    line: n,
                    msg: format!("duplicate id {}", f[0]),
                });
            }
            Ok((f[0].clone(), f[1].clone()))
        })
        .collect()
}

/// FASTA records; the first word of each header line is the id.
pub fn parse_fasta(text: &str) -> std::result::Result<Vec<(String, String)>, CoreError> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, l) in records(text) {
        let l = l.trim();
        if let Some(header) = l.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() || !seen.insert(id.clone()) {
                return Err(CoreError::Malformed {
                    line: n,
                    msg: "missing or duplicate FASTA id".into(),
                });
            }
            out.push((id, String::new()));
        } else {
            match out.last_mut() {
                Some((_, seq)) => seq.push_str(l),
                None => {
                    return Err(CoreError::Malformed {
                        line: n,
                        msg: "sequence data before the first FASTA header".into(),
                    })
                }
            }
        }
    }
    if let Some((id, _)) = out.iter().find(|(_, s)| s.is_empty()) {
        return Err(CoreError::Malformed {
            line: 0,
            msg: format!("FASTA record {id} has no residues"),
        });
    }
    Ok(out)
}

/// TSV or FASTA, told apart by the first record.
pub fn parse_sequences(text: &str) -> std::result::Result<Vec<(String, String)>, CoreError> {
    match records(text).next() {
        Some((_, l)) if l.trim_start().starts_with('>') => parse_fasta(text),
        _ => parse_keyed(text, "target id, sequence"),
    }
}

pub fn parse_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, CoreError> {
    records(text)
        .map(|(n, l)| {
            let f = fields(l, 2, "drug id, target id", n)?;
            Ok((f[0].clone(), f[1].clone()))
        })
        .collect()
}

fn load<T>(path: &Path, parse: impl Fn(&str) -> std::result::Result<T, CoreError>) -> Result<T> {
    parse(&read_text(path)?).map_err(|e| located(path, e))
}

pub fn load_kg(triples: &Path, drugs: &Path, targets: &Path, options: KgOptions) -> Result<KnowledgeGraph> {
    let t = load(triples, parse_triples)?;
    let d = load(drugs, parse_id_list)?;
    let g = load(targets, parse_id_list)?;
    let d: Vec<&str> = d.iter().map(String::as_str).collect();
    let g: Vec<&str> = g.iter().map(String::as_str).collect();
    KnowledgeGraph::from_triples(
        t.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
        &d,
        &g,
        options,
    )
    .map_err(|e| located(triples, e))
}

/// Intrinsic data of a drug/target universe. Ids absent from the files or
/// failing to parse are listed in `missing` rather than rejected.
#[derive(Debug, Clone, Default)]
pub struct IntrinsicData {
    pub molecules: BTreeMap<String, MolecularGraph>,
    pub sequences: BTreeMap<String, ResidueSequence>,
    pub missing: Vec<String>,
}

pub fn load_intrinsic(smiles: &Path, sequences: &Path, drugs: &[String], targets: &[String], max_len: usize) -> Result<IntrinsicData> {
    let mut out = IntrinsicData::default();
    let smi: BTreeMap<String, String> = load(smiles, |t| parse_keyed(t, "drug id, SMILES"))?.into_iter().collect();
    for id in drugs {
        match smi.get(id).map(|s| parse_smiles(s)) {
            Some(Ok(g)) => {
                out.molecules.insert(id.clone(), g);
            }
            Some(Err(e)) => out.missing.push(format!("drug {id}: {e}")),
            None => out.missing.push(format!("drug {id}: no SMILES")),
        }
    }
    let seqs: BTreeMap<String, String> = load(sequences, parse_sequences)?.into_iter().collect();
    for id in targets {
        match seqs.get(id).map(|s| ResidueSequence::from_letters(id, s, max_len)) {
            Some(Ok(s)) => {
                out.sequences.insert(id.clone(), s);
            }
            Some(Err(e)) => out.missing.push(format!("target {id}: {e}")),
            None => out.missing.push(format!("target {id}: no sequence")),
        }
    }
    Ok(out)
}

/// Resolves pair ids against the catalog. Unknown ids are errors. With
/// `need_intrinsic`, pairs whose drug or target lacks intrinsic data are
/// dropped and counted.
pub fn resolve_pairs(path: &Path, catalog: &Catalog, need_intrinsic: bool) -> Result<(Vec<Pair>, usize)> {
    let raw = load(path, parse_pairs)?;
    let mut out = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for (i, (d, t)) in raw.iter().enumerate() {
        let (Some(di), Some(ti)) = (catalog.drugs.get(d), catalog.targets.get(t)) else {
            return Err(IoError::Invalid(format!(
                "{}: pair {} ({d}, {t}) names an unknown drug or target",
                path.display(),
                i + 1
            )));
        };
        let p = Pair::new(di, ti);
        if !need_intrinsic || catalog.has_intrinsic(p) {
            out.push(p);
        } else {
            dropped += 1;
        }
    }
    Ok((out, dropped))
}

pub fn catalog(drugs: &[String], targets: &[String], kg_entities: &Vocab, data: IntrinsicData) -> Result<Catalog> {
    let vocab = |ids: &[String]| Vocab::from_ids(ids).map_err(|e| IoError::Invalid(e.to_string()));
    Ok(Catalog::new(vocab(drugs)?, vocab(targets)?, kg_entities, data.molecules, data.sequences))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drkg_style_line() {
        let t = parse_triples("Compound::DB00001 \t DGIDB::AGONIST \t Gene::1813\n").unwrap();
        assert_eq!(t, [("Compound::DB00001".into(), "DGIDB::AGONIST".into(), "Gene::1813".into())]);
    }

    #[test]
    fn malformed_lines_report_numbers() {
        let e = parse_triples("# header\na\tr\tb\n\na\tr\n").unwrap_err();
        assert_eq!(e, CoreError::Malformed { line: 4, msg: "expected 3 tab-separated fields (head, relation, tail), found 2".into() });
        let e = parse_keyed("d1\tCCO\nd1\tCCN\n", "x").unwrap_err();
        assert!(matches!(e, CoreError::Malformed { line: 2, .. }));
    }

    #[test]
    fn fasta_and_tsv_sequences() {
        let fa = parse_sequences(">t1 some protein\nACDE\nFGH\n>t2\nWW\n").unwrap();
        assert_eq!(fa, [("t1".into(), "ACDEFGH".into()), ("t2".into(), "WW".into())]);
        let tsv = parse_sequences("t1\tACDE\n").unwrap();
        assert_eq!(tsv, [("t1".into(), "ACDE".into())]);
        assert!(parse_fasta("ACDE\n>t1\nA\n").is_err());
        assert!(parse_fasta(">t1\n>t2\nA\n").is_err());
    }

    #[test]
    fn located_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.tsv");
        std::fs::write(&p, "d\tt\nbroken\n").unwrap();
        let e = load(&p, parse_pairs).unwrap_err().to_string();
        assert!(e.ends_with("pairs.tsv:2: expected 2 tab-separated fields (drug id, target id), found 1"), "{e}");
    }
}
