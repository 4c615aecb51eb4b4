//! Synthetic benchmark world with a planted interaction rule.
//!
//! Drugs and targets belong to communities, the lower half of which are
//! active. A pair interacts when both sides sit in active communities, or
//! when the drug carries a sulfonamide and the target carries the planted
//! k-mer. The knowledge graph only sees
//! communities; molecules and sequences encode both signals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kgraph::{KgOptions, KnowledgeGraph, Vocab};
use crate::moe::{Catalog, Pair};
use crate::seq_encoder::ResidueSequence;
use crate::smiles::parse_smiles;
use crate::rng;

pub const SULFONAMIDE: &str = "NS(=O)(=O)";
pub const PLANTED_KMER: &str = "WWYWW";
pub const LEAK_RELATION: &str = "interacts_with";
pub const LEAK_RELATION_REVERSE: &str = "bound_by";

const SCAFFOLDS: [&str; 4] = ["c1ccccc1", "c1ccncc1", "c1ccsc1", "C1CCCCC1"];
const COMMUNITY_MOTIFS: [&str; 4] = ["CWHMC", "HCYWH", "MYCHM", "YMWCY"];
const PREFIXES: [&str; 8] = ["C", "CC", "CCC", "CO", "CCO", "OCC", "NCC", "CC(C)C"];
const SUFFIXES: [&str; 10] = ["", "C", "O", "CC", "CN", "C(=O)O", "CCl", "F", "Br", "C(C)C"];
/// Background residues avoid the letters used by motifs.
const BACKGROUND: &[u8] = b"ADEFGIKLNPQRSTV";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub drugs: usize,
    pub targets: usize,
    /// Total knowledge-graph entities, drugs and targets included.
    pub entities: usize,
    pub communities: usize,
    pub motif_rate: f64,
    pub kmer_rate: f64,
    /// Community entities each drug and target links to.
    pub links: usize,
    /// Within-community edges per background entity.
    pub degree: usize,
    /// Fraction of links redirected to a random other community.
    pub noise: f64,
    /// Fraction of drugs and of targets whose every link points into one
    /// wrong community; their molecules and sequences stay truthful.
    pub mislinked: f64,
    /// Direct drug-target triples planted for the leakage filter.
    pub leaks: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            drugs: 60,
            targets: 60,
            entities: 500,
            communities: 4,
            motif_rate: 0.3,
            kmer_rate: 0.3,
            links: 3,
            degree: 3,
            noise: 0.05,
            mislinked: 0.1,
            leaks: 40,
            min_len: 60,
            max_len: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.communities;
        if c == 0 || c > SCAFFOLDS.len() {
            return Err(Error::config(format!("communities must lie in 1..={}", SCAFFOLDS.len())));
        }
        if self.drugs < c || self.targets < c {
            return Err(Error::config("need at least one drug and one target per community"));
        }
        if self.entities < self.drugs + self.targets + c {
            return Err(Error::config("entities must cover drugs, targets and one background entity per community"));
        }
        for (name, r) in [("motif_rate", self.motif_rate), ("kmer_rate", self.kmer_rate), ("noise", self.noise), ("mislinked", self.mislinked)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.links == 0 {
            return Err(Error::config("links must be positive"));
        }
        if self.min_len < 2 * COMMUNITY_MOTIFS[0].len() + PLANTED_KMER.len() || self.max_len < self.min_len {
            return Err(Error::config("sequence lengths too short for the planted motifs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub drug_ids: Vec<String>,
    pub target_ids: Vec<String>,
    pub drug_community: Vec<usize>,
    pub target_community: Vec<usize>,
    /// Community the knowledge graph links each drug into.
    pub drug_kg_community: Vec<usize>,
    pub target_kg_community: Vec<usize>,
    pub drug_motif: Vec<bool>,
    pub target_kmer: Vec<bool>,
    pub smiles: Vec<String>,
    pub sequences: Vec<String>,
    /// `(head, relation, tail)`, leak triples included.
    pub triples: Vec<(String, String, String)>,
}

/// Balanced community labels in random order.
fn communities(n: usize, c: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|i| i % c).collect();
    v.shuffle(rng);
    v
}

/// Exactly `round(rate * n)` flags set, at random positions.
fn flags(n: usize, rate: f64, rng: &mut rng::Rng) -> Vec<bool> {
    let k = libm::round(rate * n as f64) as usize;
    let mut v: Vec<bool> = (0..n).map(|i| i < k).collect();
    v.shuffle(rng);
    v
}

fn insert_at(seq: &mut Vec<u8>, motif: &str, rng: &mut rng::Rng) {
    let pos = rng.gen_range(0..=seq.len());
    seq.splice(pos..pos, motif.bytes());
}

impl SyntheticWorld {
    pub fn generate(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let c = config.communities;
        let seed = config.seed;
        let drug_ids: Vec<String> = (0..config.drugs).map(|i| format!("D{i:03}")).collect();
        let target_ids: Vec<String> = (0..config.targets).map(|i| format!("T{i:03}")).collect();
        let drug_community = communities(config.drugs, c, &mut rng::tagged(seed, "synth.drug_community"));
        let target_community = communities(config.targets, c, &mut rng::tagged(seed, "synth.target_community"));
        let drug_motif = flags(config.drugs, config.motif_rate, &mut rng::tagged(seed, "synth.motif"));
        let target_kmer = flags(config.targets, config.kmer_rate, &mut rng::tagged(seed, "synth.kmer"));

        let mut r = rng::tagged(seed, "synth.smiles");
        let smiles = (0..config.drugs)
            .map(|i| {
                let mut s = String::new();
                if drug_motif[i] {
                    s.push_str(SULFONAMIDE);
                }
                s.push_str(PREFIXES.choose(&mut r).expect("non-empty"));
                s.push_str(SCAFFOLDS[drug_community[i]]);
                s.push_str(SUFFIXES.choose(&mut r).expect("non-empty"));
                s
            })
            .collect();

        let mut r = rng::tagged(seed, "synth.sequences");
        let sequences = (0..config.targets)
            .map(|i| {
                let planted = 2 * COMMUNITY_MOTIFS[0].len() + if target_kmer[i] { PLANTED_KMER.len() } else { 0 };
                let len = r.gen_range(config.min_len..=config.max_len) - planted;
                let mut seq: Vec<u8> = (0..len).map(|_| *BACKGROUND.choose(&mut r).expect("non-empty")).collect();
                insert_at(&mut seq, COMMUNITY_MOTIFS[target_community[i]], &mut r);
                insert_at(&mut seq, COMMUNITY_MOTIFS[target_community[i]], &mut r);
                if target_kmer[i] {
                    insert_at(&mut seq, PLANTED_KMER, &mut r);
                }
                String::from_utf8(seq).expect("ascii residues")
            })
            .collect();

        let background = config.entities - config.drugs - config.targets;
        let entity_ids: Vec<String> = (0..background).map(|i| format!("E{i:03}")).collect();
        let entity_community: Vec<usize> = (0..background).map(|i| i % c).collect();
        let members: Vec<Vec<usize>> = (0..c)
            .map(|k| (0..background).filter(|&e| entity_community[e] == k).collect())
            .collect();
        let shift = |home: &[usize], tag: &str| {
            let mut r = rng::tagged(seed, tag);
            let wrong = flags(home.len(), config.mislinked, &mut r);
            home.iter()
                .zip(wrong)
                .map(|(&h, w)| if w && c > 1 { (h + r.gen_range(1..c)) % c } else { h })
                .collect::<Vec<usize>>()
        };
        let drug_kg_community = shift(&drug_community, "synth.mislinked_drugs");
        let target_kg_community = shift(&target_community, "synth.mislinked_targets");
        let mut r = rng::tagged(seed, "synth.kg");
        let mut triples = Vec::new();
        let pick = |home: usize, r: &mut rng::Rng| {
            let k = if c > 1 && r.gen_bool(config.noise) {
                (home + r.gen_range(1..c)) % c
            } else {
                home
            };
            *members[k].choose(r).expect("every community has background entities")
        };
        for (i, d) in drug_ids.iter().enumerate() {
            for _ in 0..config.links {
                let e = pick(drug_kg_community[i], &mut r);
                triples.push((d.clone(), String::from("affects"), entity_ids[e].clone()));
            }
        }
        for (i, t) in target_ids.iter().enumerate() {
            for _ in 0..config.links {
                let e = pick(target_kg_community[i], &mut r);
                triples.push((t.clone(), String::from("participates_in"), entity_ids[e].clone()));
            }
        }
        for e in 0..background {
            for _ in 0..config.degree {
                let f = pick(entity_community[e], &mut r);
                if f != e {
                    triples.push((entity_ids[e].clone(), String::from("associated_with"), entity_ids[f].clone()));
                }
            }
        }

        let mut world = Self {
            config,
            drug_ids,
            target_ids,
            drug_community,
            target_community,
            drug_kg_community,
            target_kg_community,
            drug_motif,
            target_kmer,
            smiles,
            sequences,
            triples,
        };
        let mut positives = world.positives();
        positives.shuffle(&mut rng::tagged(seed, "synth.leaks"));
        for (k, p) in positives.iter().take(config.leaks).enumerate() {
            let (d, t) = (world.drug_ids[p.drug].clone(), world.target_ids[p.target].clone());
            world.triples.push(if k % 2 == 0 {
                (d, String::from(LEAK_RELATION), t)
            } else {
                (t, String::from(LEAK_RELATION_REVERSE), d)
            });
        }
        Ok(world)
    }

    /// Community compatibility: both communities active.
    pub fn compatible(&self, drug_community: usize, target_community: usize) -> bool {
        let active = self.config.communities.div_ceil(2);
        drug_community < active && target_community < active
    }

    /// The planted rule.
    pub fn oracle_label(&self, p: Pair) -> bool {
        self.compatible(self.drug_community[p.drug], self.target_community[p.target])
            || (self.drug_motif[p.drug] && self.target_kmer[p.target])
    }

    fn pairs(&self, label: bool) -> Vec<Pair> {
        (0..self.drug_ids.len())
            .flat_map(|d| (0..self.target_ids.len()).map(move |t| Pair::new(d, t)))
            .filter(|&p| self.oracle_label(p) == label)
            .collect()
    }

    pub fn positives(&self) -> Vec<Pair> {
        self.pairs(true)
    }

    pub fn negatives(&self) -> Vec<Pair> {
        self.pairs(false)
    }

    pub fn base_rate(&self) -> f64 {
        self.positives().len() as f64 / (self.drug_ids.len() * self.target_ids.len()) as f64
    }

    /// Knowledge graph of the world, leak triples included.
    pub fn knowledge_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::from_triples(
            self.triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
            &self.drug_ids.iter().map(String::as_str).collect::<Vec<_>>(),
            &self.target_ids.iter().map(String::as_str).collect::<Vec<_>>(),
            KgOptions::default(),
        )
    }

    /// Catalog with parsed molecules and sequences; `kg_entities` maps ids
    /// to embedding rows.
    pub fn catalog(&self, kg_entities: &Vocab, max_len: usize) -> Result<Catalog> {
        let mut molecules = BTreeMap::new();
        for (id, smi) in self.drug_ids.iter().zip(&self.smiles) {
            molecules.insert(id.clone(), parse_smiles(smi)?);
        }
        let mut sequences = BTreeMap::new();
        for (id, seq) in self.target_ids.iter().zip(&self.sequences) {
            sequences.insert(id.clone(), ResidueSequence::from_letters(id, seq, max_len)?);
        }
        Ok(Catalog::new(
            Vocab::from_ids(&self.drug_ids)?,
            Vocab::from_ids(&self.target_ids)?,
            kg_entities,
            molecules,
            sequences,
        ))
    }

    pub fn triples_tsv(&self) -> String {
        let mut s = String::new();
        for (h, r, t) in &self.triples {
            let _ = writeln!(s, "{h}\t{r}\t{t}");
        }
        s
    }

    pub fn smiles_tsv(&self) -> String {
        let mut s = String::new();
        for (id, smi) in self.drug_ids.iter().zip(&self.smiles) {
            let _ = writeln!(s, "{id}\t{smi}");
        }
        s
    }

    pub fn sequences_tsv(&self) -> String {
        let mut s = String::new();
        for (id, seq) in self.target_ids.iter().zip(&self.sequences) {
            let _ = writeln!(s, "{id}\t{seq}");
        }
        s
    }

    pub fn pairs_tsv(&self, label: bool) -> String {
        let mut s = String::new();
        for p in self.pairs(label) {
            let _ = writeln!(s, "{}\t{}", self.drug_ids[p.drug], self.target_ids[p.target]);
        }
        s
    }

    pub fn drug_list(&self) -> String {
        self.drug_ids.iter().map(|d| format!("{d}\n")).collect()
    }

    pub fn target_list(&self) -> String {
        self.target_ids.iter().map(|t| format!("{t}\n")).collect()
    }

    /// Per-entity community and signal flags, enough to recompute every
    /// oracle label.
    pub fn description_tsv(&self) -> String {
        let mut s = String::from("kind\tid\tcommunity\tkg_community\tsignal\n");
        for (i, id) in self.drug_ids.iter().enumerate() {
            let _ = writeln!(s, "drug\t{id}\t{}\t{}\t{}", self.drug_community[i], self.drug_kg_community[i], self.drug_motif[i] as u8);
        }
        for (i, id) in self.target_ids.iter().enumerate() {
            let _ = writeln!(s, "target\t{id}\t{}\t{}\t{}", self.target_community[i], self.target_kg_community[i], self.target_kmer[i] as u8);
        }
        s
    }
}
