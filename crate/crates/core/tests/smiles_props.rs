use std::path::Path;

use mosedti_core::smiles::{featurize_atom, parse_smiles, ATOM_FEATURES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (token, free valence)
const ATOMS: [(&str, usize); 8] = [
    ("C", 4),
    ("C", 4),
    ("N", 3),
    ("O", 2),
    ("S", 2),
    ("Cl", 1),
    ("[NH3+]", 1),
    ("[O-]", 1),
];

/// A random connected molecule written as SMILES, with its atom and bond
/// counts known from construction.
struct Generated {
    smiles: String,
    atoms: usize,
    bonds: usize,
}

fn generate(seed: u64) -> Generated {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.gen_range(1..=25);
    let mut kind = Vec::new();
    let mut free = Vec::new();
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        // Attach to an earlier atom with spare valence; keep the first atom roomy.
        let candidates: Vec<usize> = (0..i).filter(|&j| free[j] > 0).collect();
        let k = if i == 0 { 0 } else { r.gen_range(0..ATOMS.len()) };
        let k = if i + 1 < n && ATOMS[k].1 == 1 && candidates.len() < 2 { 0 } else { k };
        if i > 0 {
            let p = candidates[r.gen_range(0..candidates.len())];
            parent[i] = p;
            children[p].push(i);
            free[p] -= 1;
        }
        kind.push(k);
        free.push(ATOMS[k].1 - usize::from(i > 0));
    }
    // Ring bonds between atoms that are not already bonded.
    let mut rings: Vec<(usize, usize)> = Vec::new();
    for _ in 0..r.gen_range(0..4) {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        let bonded = a == b || parent[b] == a || parent[a] == b || rings.contains(&(a, b));
        if !bonded && free[a] > 0 && free[b] > 0 {
            free[a] -= 1;
            free[b] -= 1;
            rings.push((a, b));
        }
    }
    // Depth-first emission from atom 0; each ring label opens at the
    // endpoint written first and closes at the other.
    let label = |i: usize| if i < 9 { format!("{}", i + 1) } else { format!("%{}", i + 1) };
    let mut smiles = String::new();
    fn emit(v: usize, s: &mut String, kind: &[usize], children: &[Vec<usize>], ring_marks: &dyn Fn(usize) -> String) {
        s.push_str(ATOMS[kind[v]].0);
        s.push_str(&ring_marks(v));
        let kids = &children[v];
        for (i, &c) in kids.iter().enumerate() {
            if i + 1 < kids.len() {
                s.push('(');
                emit(c, s, kind, children, ring_marks);
                s.push(')');
            } else {
                emit(c, s, kind, children, ring_marks);
            }
        }
    }
    let ring_marks = |v: usize| -> String {
        rings
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == v || b == v)
            .map(|(i, _)| label(i))
            .collect()
    };
    emit(0, &mut smiles, &kind, &children, &ring_marks);
    Generated {
        smiles,
        atoms: n,
        bonds: n - 1 + rings.len(),
    }
}

proptest! {
    #[test]
    fn generated_molecules_parse_with_known_counts(seed in any::<u64>()) {
        let g = generate(seed);
        let m = parse_smiles(&g.smiles).map_err(|e| TestCaseError::fail(format!("{}: {e}", g.smiles)))?;
        prop_assert_eq!(m.atom_count(), g.atoms, "{}", g.smiles);
        prop_assert_eq!(m.bond_count(), g.bonds, "{}", g.smiles);
        let degrees: usize = m.atoms.iter().map(|a| a.degree).sum();
        prop_assert_eq!(degrees, 2 * m.bond_count());
        for b in &m.bonds {
            prop_assert!(b.a != b.b && b.a < m.atom_count() && b.b < m.atom_count());
        }
        prop_assert!(m.atoms.iter().all(|a| featurize_atom(a).len() == ATOM_FEATURES));
        prop_assert_eq!(parse_smiles(&g.smiles).unwrap(), m);
    }
}

#[test]
fn committed_corpus_matches_oracle_table() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/smiles_corpus.tsv");
    let text = std::fs::read_to_string(path).unwrap();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let g = parse_smiles(f[1]).unwrap_or_else(|e| panic!("{}: {e}", f[0]));
        assert_eq!(g.atom_count(), f[2].parse::<usize>().unwrap(), "{}", f[0]);
        assert_eq!(g.bond_count(), f[3].parse::<usize>().unwrap(), "{}", f[0]);
        let degrees: usize = g.atoms.iter().map(|a| a.degree).sum();
        assert_eq!(degrees, 2 * g.bond_count());
        n += 1;
    }
    assert_eq!(n, 50);
}
