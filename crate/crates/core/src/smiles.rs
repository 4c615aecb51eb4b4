//! SMILES parsing into heavy-atom molecular graphs.
//!
//! Supported: organic-subset and bracket atoms (charge, hydrogen count),
//! explicit bonds `- = # :`, branches, ring closures (`1`..`9`, `%nn`) and
//! lowercase aromatic atoms. Stereo marks, isotopes and atom classes are
//! skipped with a warning. Hydrogens are never materialized as nodes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Length of the per-atom feature vector.
pub const ATOM_FEATURES: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmilesErrorKind {
    Empty,
    NonAscii,
    UnmatchedBranch,
    UnclosedRing,
    UnknownToken,
    Valence,
    MultiFragment,
    UnclosedBracket,
    DanglingBond,
    InvalidRingBond,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    /// Byte offset into the input.
    pub offset: usize,
}

impl fmt::Display for SmilesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            SmilesErrorKind::Empty => "empty SMILES",
            SmilesErrorKind::NonAscii => "non-ASCII byte",
            SmilesErrorKind::UnmatchedBranch => "unmatched branch parenthesis",
            SmilesErrorKind::UnclosedRing => "unclosed ring bond",
            SmilesErrorKind::UnknownToken => "unknown token",
            SmilesErrorKind::Valence => "valence exceeded",
            SmilesErrorKind::MultiFragment => "multi-fragment SMILES unsupported",
            SmilesErrorKind::UnclosedBracket => "unclosed bracket atom",
            SmilesErrorKind::DanglingBond => "bond symbol without a following atom",
            SmilesErrorKind::InvalidRingBond => "ring closure joins an atom to itself or to a bonded neighbor",
        };
        write!(f, "{what} at byte {}", self.offset)
    }
}

impl core::error::Error for SmilesError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    Other,
}

impl Element {
    pub const SUPPORTED: [Element; 11] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
        Element::Other,
    ];

    pub fn from_symbol(symbol: &str) -> Self {
        match symbol {
            "B" | "b" => Element::B,
            "C" | "c" => Element::C,
            "N" | "n" => Element::N,
            "O" | "o" => Element::O,
            "P" | "p" => Element::P,
            "S" | "s" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => Element::Other,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Standard valences used for implicit hydrogens.
    fn normal_valences(self) -> &'static [u32] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::Other => &[],
        }
    }

    fn max_valence(self) -> Option<u32> {
        match self {
            Element::B => Some(3),
            Element::C => Some(4),
            Element::N => Some(5),
            Element::O => Some(2),
            Element::P => Some(5),
            Element::S => Some(6),
            Element::F | Element::Cl | Element::Br => Some(1),
            Element::I => Some(3),
            Element::Other => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomNode {
    pub symbol: String,
    pub element: Element,
    pub charge: i32,
    pub aromatic: bool,
    pub degree: usize,
    /// Total attached hydrogens: written count for bracket atoms, implicit
    /// count otherwise.
    pub hydrogens: u32,
    pub bracket: bool,
    /// Byte offset of the atom token.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesWarning {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    pub atoms: Vec<AtomNode>,
    pub bonds: Vec<Bond>,
    pub source: String,
    pub warnings: Vec<SmilesWarning>,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// Neighbor lists in bond order.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.a].push(b.b);
            adj[b.b].push(b.a);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Per-atom features as a row-major `[atoms, ATOM_FEATURES]` buffer.
    pub fn feature_matrix(&self) -> Vec<f64> {
        self.atoms.iter().flat_map(featurize_atom).collect()
    }

    /// Human-readable adjacency listing.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let adj = self.neighbors();
        for (i, atom) in self.atoms.iter().enumerate() {
            s.push_str(&format!(
                "{i} {} charge={} aromatic={} degree={} H={} ->",
                atom.symbol, atom.charge, atom.aromatic, atom.degree, atom.hydrogens
            ));
            for n in &adj[i] {
                s.push_str(&format!(" {n}"));
            }
            s.push('\n');
        }
        for b in &self.bonds {
            s.push_str(&format!("bond {} {} {}\n", b.a, b.order.symbol(), b.b));
        }
        s
    }
}

/// One-hot layout: element (11) | degree 0-5 (6) | charge -2..+2 (5) |
/// aromatic flag (1) | hydrogen count 0-4 (5). Out-of-range values clamp.
pub fn featurize_atom(atom: &AtomNode) -> [f64; ATOM_FEATURES] {
    let mut f = [0.0; ATOM_FEATURES];
    f[atom.element.slot()] = 1.0;
    f[11 + atom.degree.min(5)] = 1.0;
    f[17 + (atom.charge.clamp(-2, 2) + 2) as usize] = 1.0;
    if atom.aromatic {
        f[22] = 1.0;
    }
    f[23 + (atom.hydrogens.min(4) as usize)] = 1.0;
    f
}

const PERIODIC: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

const AROMATIC_BRACKET: [&str; 8] = ["b", "c", "n", "o", "p", "s", "se", "as"];

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<AtomNode>,
    bonds: Vec<Bond>,
    warnings: Vec<SmilesWarning>,
}

fn err(kind: SmilesErrorKind, offset: usize) -> SmilesError {
    SmilesError { kind, offset }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn warn(&mut self, offset: usize, message: &str) {
        log::warn!("SMILES byte {offset}: {message}");
        self.warnings.push(SmilesWarning {
            offset,
            message: message.to_string(),
        });
    }

    fn bonded(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn push_atom(&mut self, symbol: &str, aromatic: bool, bracket: bool, offset: usize) -> usize {
        self.atoms.push(AtomNode {
            symbol: symbol.to_string(),
            element: Element::from_symbol(symbol),
            charge: 0,
            aromatic,
            degree: 0,
            hydrogens: 0,
            bracket,
            offset,
        });
        self.atoms.len() - 1
    }

    fn organic_atom(&mut self) -> Option<usize> {
        let start = self.pos;
        let c = self.peek()?;
        let (symbol, aromatic, len) = match (c, self.peek_at(1)) {
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("b", true, 1),
            (b'c', _) => ("c", true, 1),
            (b'n', _) => ("n", true, 1),
            (b'o', _) => ("o", true, 1),
            (b'p', _) => ("p", true, 1),
            (b's', _) => ("s", true, 1),
            (b'*', _) => ("*", false, 1),
            _ => return None,
        };
        self.pos += len;
        Some(self.push_atom(symbol, aromatic, false, start))
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        core::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.digits().is_some() {
            self.warn(open + 1, "isotope ignored");
        }
        let sym_start = self.pos;
        let symbol: String = match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                "*".into()
            }
            Some(c) if c.is_ascii_lowercase() => {
                let two = self.src.get(self.pos..self.pos + 2);
                let s = match two {
                    Some(b"se") | Some(b"as") => {
                        self.pos += 2;
                        &self.src[sym_start..self.pos]
                    }
                    _ => {
                        self.pos += 1;
                        &self.src[sym_start..self.pos]
                    }
                };
                let s = core::str::from_utf8(s).expect("ascii");
                if !AROMATIC_BRACKET.contains(&s) {
                    return Err(err(SmilesErrorKind::UnknownToken, sym_start));
                }
                s.into()
            }
            Some(c) if c.is_ascii_uppercase() => {
                self.pos += 1;
                if self.peek().is_some_and(|c| c.is_ascii_lowercase()) {
                    self.pos += 1;
                }
                let s = core::str::from_utf8(&self.src[sym_start..self.pos]).expect("ascii");
                if !PERIODIC.contains(&s) {
                    return Err(err(SmilesErrorKind::UnknownToken, sym_start));
                }
                s.into()
            }
            Some(_) => return Err(err(SmilesErrorKind::UnknownToken, sym_start)),
            None => return Err(err(SmilesErrorKind::UnclosedBracket, open)),
        };
        let aromatic = symbol.starts_with(|c: char| c.is_ascii_lowercase());
        let idx = self.push_atom(&symbol, aromatic, true, open);

        if self.peek() == Some(b'@') {
            let at = self.pos;
            while self.peek() == Some(b'@') {
                self.pos += 1;
            }
            let class = self.src.get(self.pos..self.pos + 2);
            if matches!(class, Some(b"TH") | Some(b"AL") | Some(b"SP") | Some(b"TB") | Some(b"OH")) {
                self.pos += 2;
                self.digits();
            }
            self.warn(at, "chirality ignored");
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let h = self.digits().unwrap_or(1);
            self.atoms[idx].hydrogens = h;
        }
        match self.peek() {
            Some(sign @ (b'+' | b'-')) => {
                let unit = if sign == b'+' { 1 } else { -1 };
                self.pos += 1;
                let mut charge = unit;
                if let Some(n) = self.digits() {
                    charge = unit * n as i32;
                } else {
                    while self.peek() == Some(sign) {
                        self.pos += 1;
                        charge += unit;
                    }
                }
                self.atoms[idx].charge = charge;
            }
            _ => {}
        }
        if self.peek() == Some(b':') {
            let at = self.pos;
            self.pos += 1;
            if self.digits().is_none() {
                return Err(err(SmilesErrorKind::UnknownToken, at));
            }
            self.warn(at, "atom class ignored");
        }
        match self.peek() {
            Some(b']') => {
                self.pos += 1;
                Ok(idx)
            }
            Some(_) => Err(err(SmilesErrorKind::UnknownToken, self.pos)),
            None => Err(err(SmilesErrorKind::UnclosedBracket, open)),
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: Option<BondOrder>) {
        let order = order.unwrap_or_else(|| self.default_order(a, b));
        self.bonds.push(Bond { a, b, order });
        self.atoms[a].degree += 1;
        self.atoms[b].degree += 1;
    }

    fn parse(mut self) -> Result<MolecularGraph, SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondOrder, usize)> = None;
        let mut branches: Vec<usize> = Vec::new();
        let mut rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(err(SmilesErrorKind::UnmatchedBranch, at));
                    };
                    if pending.is_some() {
                        return Err(err(SmilesErrorKind::DanglingBond, at));
                    }
                    branches.push(p);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(err(SmilesErrorKind::DanglingBond, at));
                    }
                    prev = Some(branches.pop().ok_or(err(SmilesErrorKind::UnmatchedBranch, at))?);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(err(SmilesErrorKind::UnknownToken, at));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    pending = Some((order, at));
                    self.pos += 1;
                }
                b'/' | b'\\' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(err(SmilesErrorKind::UnknownToken, at));
                    }
                    self.warn(at, "directional bond treated as single");
                    pending = Some((BondOrder::Single, at));
                    self.pos += 1;
                }
                b'.' => return Err(err(SmilesErrorKind::MultiFragment, at)),
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return Err(err(SmilesErrorKind::UnknownToken, at));
                    };
                    let number = if c == b'%' {
                        let (d1, d2) = (self.peek_at(1), self.peek_at(2));
                        match (d1, d2) {
                            (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                                self.pos += 3;
                                u32::from((a - b'0') * 10 + (b - b'0'))
                            }
                            _ => return Err(err(SmilesErrorKind::UnknownToken, at)),
                        }
                    } else {
                        self.pos += 1;
                        u32::from(c - b'0')
                    };
                    let bond = pending.take().map(|(o, _)| o);
                    match rings.remove(&number) {
                        Some((other, open_bond, _)) => {
                            if other == p || self.bonded(other, p) {
                                return Err(err(SmilesErrorKind::InvalidRingBond, at));
                            }
                            self.add_bond(other, p, bond.or(open_bond));
                        }
                        None => {
                            rings.insert(number, (p, bond, at));
                        }
                    }
                }
                b'[' => {
                    let idx = self.bracket_atom()?;
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take().map(|(o, _)| o));
                    }
                    prev = Some(idx);
                }
                _ => {
                    let Some(idx) = self.organic_atom() else {
                        return Err(err(SmilesErrorKind::UnknownToken, at));
                    };
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take().map(|(o, _)| o));
                    }
                    prev = Some(idx);
                }
            }
        }

        if !branches.is_empty() {
            return Err(err(SmilesErrorKind::UnmatchedBranch, self.src.len()));
        }
        if let Some((_, _, at)) = rings.values().min_by_key(|r| r.2) {
            return Err(err(SmilesErrorKind::UnclosedRing, *at));
        }
        if let Some((_, at)) = pending {
            return Err(err(SmilesErrorKind::DanglingBond, at));
        }

        self.finish_valence()?;
        Ok(MolecularGraph {
            atoms: self.atoms,
            bonds: self.bonds,
            source: String::from_utf8(self.src.to_vec()).expect("ascii"),
            warnings: self.warnings,
        })
    }

    fn finish_valence(&mut self) -> Result<(), SmilesError> {
        let mut used = vec![0u32; self.atoms.len()];
        for b in &self.bonds {
            used[b.a] += b.order.valence();
            used[b.b] += b.order.valence();
        }
        for (atom, &bond_valence) in self.atoms.iter_mut().zip(&used) {
            let element = atom.element;
            if let Some(max) = element.max_valence() {
                let explicit_h = if atom.bracket { atom.hydrogens } else { 0 };
                if bond_valence + explicit_h > max + atom.charge.unsigned_abs() {
                    return Err(err(SmilesErrorKind::Valence, atom.offset));
                }
            }
            if !atom.bracket {
                atom.hydrogens = implicit_hydrogens(element, bond_valence, atom.aromatic);
            }
        }
        Ok(())
    }
}

fn implicit_hydrogens(element: Element, bond_valence: u32, aromatic: bool) -> u32 {
    let valences = element.normal_valences();
    if aromatic {
        let lowest = valences.first().copied().unwrap_or(0);
        return lowest.saturating_sub(bond_valence + 1);
    }
    valences
        .iter()
        .find(|&&v| v >= bond_valence)
        .map_or(0, |v| v - bond_valence)
}

pub fn parse_smiles(s: &str) -> Result<MolecularGraph, SmilesError> {
    if s.is_empty() {
        return Err(err(SmilesErrorKind::Empty, 0));
    }
    if let Some(i) = s.bytes().position(|b| !b.is_ascii()) {
        return Err(err(SmilesErrorKind::NonAscii, i));
    }
    Parser {
        src: s.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        warnings: Vec::new(),
    }
    .parse()
}
