//! Random templates, conforming instances and their mutations, and an
//! escaped-regex conformance oracle.
//!
//! Literal text is drawn from `LITERAL_ALPHABET` and hole fillers from
//! `HOLE_ALPHABET`, which share no characters. A conforming subject holds
//! at least as many literal-alphabet characters as the template's literals
//! combined, so deleting one from a literal, or replacing it with a hole
//! character, always breaks conformance.

use rand::Rng;
use regex::Regex;

pub const LITERAL_ALPHABET: &[char] = &['A', 'B', 'C', '-', ':', 'é'];
pub const HOLE_ALPHABET: &[char] = &['x', 'y', 'z', ' '];
pub const OPEN: &str = "{{{";
pub const CLOSE: &str = "}}}";

#[derive(Debug, Clone)]
pub struct Case {
    pub literals: Vec<String>,
    pub source: String,
    pub subject: String,
    pub kind: Mutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Edits confined to hole content.
    Hole,
    /// A literal character deleted or replaced with a hole character.
    Literal,
    /// An arbitrary edit anywhere; conformance must be decided by the oracle.
    Free,
}

fn word(rng: &mut impl Rng, alphabet: &[char], max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

pub fn random_case(rng: &mut impl Rng) -> Case {
    let holes = rng.gen_range(0..=4);
    let literals: Vec<String> = (0..=holes).map(|_| word(rng, LITERAL_ALPHABET, 4)).collect();
    let mut source = literals[0].clone();
    for (i, lit) in literals.iter().enumerate().skip(1) {
        source.push_str(&format!("{OPEN}h{i}{CLOSE}{lit}"));
    }
    let mut fills: Vec<String> = (0..holes).map(|_| word(rng, HOLE_ALPHABET, 5)).collect();
    let instance = |fills: &[String]| {
        let mut s = literals[0].clone();
        for (f, lit) in fills.iter().zip(&literals[1..]) {
            s.push_str(f);
            s.push_str(lit);
        }
        s
    };

    let kind = match rng.gen_range(0..4) {
        0 => Mutation::None,
        1 if holes > 0 => Mutation::Hole,
        2 if literals.iter().any(|l| !l.is_empty()) => Mutation::Literal,
        _ => Mutation::Free,
    };
    let subject = match kind {
        Mutation::None => instance(&fills),
        Mutation::Hole => {
            let h = rng.gen_range(0..holes);
            fills[h] = word(rng, HOLE_ALPHABET, 8);
            instance(&fills)
        }
        Mutation::Literal => {
            let mut lits = literals.clone();
            let candidates: Vec<usize> = (0..lits.len()).filter(|&i| !lits[i].is_empty()).collect();
            let li = candidates[rng.gen_range(0..candidates.len())];
            let mut chars: Vec<char> = lits[li].chars().collect();
            let at = rng.gen_range(0..chars.len());
            if rng.gen_bool(0.5) {
                chars.remove(at);
            } else {
                chars[at] = HOLE_ALPHABET[rng.gen_range(0..HOLE_ALPHABET.len())];
            }
            lits[li] = chars.into_iter().collect();
            let mut s = lits[0].clone();
            for (f, lit) in fills.iter().zip(&lits[1..]) {
                s.push_str(f);
                s.push_str(lit);
            }
            s
        }
        Mutation::Free => {
            let mut chars: Vec<char> = instance(&fills).chars().collect();
            let all: Vec<char> = LITERAL_ALPHABET.iter().chain(HOLE_ALPHABET).copied().collect();
            let at = rng.gen_range(0..=chars.len());
            match rng.gen_range(0..3) {
                0 => chars.insert(at, all[rng.gen_range(0..all.len())]),
                1 if at < chars.len() => {
                    chars.remove(at);
                }
                _ if at < chars.len() => chars[at] = all[rng.gen_range(0..all.len())],
                _ => {}
            }
            chars.into_iter().collect()
        }
    };
    Case {
        literals,
        source,
        subject,
        kind,
    }
}

/// Expected verdict: `None` when `subject` conforms, otherwise the
/// code-point offset where the first unplaceable literal was expected and
/// that literal's index.
pub fn oracle(literals: &[String], subject: &str) -> Option<(usize, usize)> {
    let n = literals.len() - 1;
    let mut full = format!("^{}", regex::escape(&literals[0]));
    for lit in &literals[1..] {
        full.push_str("(?s:.*?)");
        full.push_str(&regex::escape(lit));
    }
    full.push('$');
    if Regex::new(&full).unwrap().is_match(subject) {
        return None;
    }
    // Longest prefix L0 .*? L1 .*? ... Lk that still matches; its shortest
    // match ends where segment k+1 was expected.
    let mut end = 0;
    for k in 0..=n {
        let mut prefix = format!("^{}", regex::escape(&literals[0]));
        for lit in &literals[1..=k] {
            prefix.push_str("(?s:.*?)");
            prefix.push_str(&regex::escape(lit));
        }
        let exact = k == 0 && n == 0;
        let re = Regex::new(&if exact { format!("{prefix}$") } else { prefix }).unwrap();
        match re.find(subject) {
            Some(m) if k < n => end = m.end(),
            // At k == n the full match already failed: the last literal
            // cannot be placed as a suffix.
            _ => return Some((subject[..end].chars().count(), k)),
        }
    }
    unreachable!("the loop returns at k == n")
}
