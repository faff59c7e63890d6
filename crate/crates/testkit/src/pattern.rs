//! Random regular expressions over a tiny alphabet with a reference
//! backtracking matcher.
//!
//! Backtracking in preference order yields leftmost-first semantics: at a
//! given start, alternatives are tried left to right and greedy
//! repetition prefers more iterations. The generated grammar has no
//! assertions and no nullable repetition bodies, so every match attempt
//! terminates.

use rand::Rng;

pub const TEXT_ALPHABET: &[char] = &['a', 'b', 'c', ' ', 'é'];

#[derive(Debug, Clone)]
pub enum Re {
    Char(char),
    /// Any of the listed characters.
    Class(Vec<char>),
    Concat(Vec<Re>),
    Alt(Box<Re>, Box<Re>),
    Star(Box<Re>),
    Plus(Box<Re>),
    Opt(Box<Re>),
}

impl Re {
    pub fn render(&self) -> String {
        match self {
            Re::Char(c) => regex::escape(&c.to_string()),
            Re::Class(cs) => format!("[{}]", cs.iter().map(|c| regex::escape(&c.to_string())).collect::<String>()),
            Re::Concat(parts) => parts.iter().map(|p| format!("(?:{})", p.render())).collect(),
            Re::Alt(a, b) => format!("(?:{})|(?:{})", a.render(), b.render()),
            Re::Star(r) => format!("(?:{})*", r.render()),
            Re::Plus(r) => format!("(?:{})+", r.render()),
            Re::Opt(r) => format!("(?:{})?", r.render()),
        }
    }

    fn nullable(&self) -> bool {
        match self {
            Re::Char(_) | Re::Class(_) => false,
            Re::Concat(p) => p.iter().all(Re::nullable),
            Re::Alt(a, b) => a.nullable() || b.nullable(),
            Re::Star(_) | Re::Opt(_) => true,
            Re::Plus(r) => r.nullable(),
        }
    }

    /// Calls `k` with each end position `self` can reach from `at`, in
    /// preference order, stopping at the first `Some`.
    fn walk(&self, s: &[char], at: usize, k: &mut dyn FnMut(usize) -> Option<usize>) -> Option<usize> {
        match self {
            Re::Char(c) => (s.get(at) == Some(c)).then_some(()).and_then(|_| k(at + 1)),
            Re::Class(cs) => s.get(at).filter(|c| cs.contains(c)).and_then(|_| k(at + 1)),
            Re::Concat(parts) => concat(parts, s, at, k),
            Re::Alt(a, b) => a.walk(s, at, k).or_else(|| b.walk(s, at, k)),
            Re::Star(r) => star(r, s, at, k),
            Re::Plus(r) => r.walk(s, at, &mut |e| star(r, s, e, k)),
            Re::Opt(r) => r.walk(s, at, k).or_else(|| k(at)),
        }
    }
}

fn concat(parts: &[Re], s: &[char], at: usize, k: &mut dyn FnMut(usize) -> Option<usize>) -> Option<usize> {
    match parts.split_first() {
        None => k(at),
        Some((first, rest)) => first.walk(s, at, &mut |e| concat(rest, s, e, k)),
    }
}

fn star(r: &Re, s: &[char], at: usize, k: &mut dyn FnMut(usize) -> Option<usize>) -> Option<usize> {
    r.walk(s, at, &mut |e| if e > at { star(r, s, e, k) } else { None })
        .or_else(|| k(at))
}

/// End of the leftmost-first match of `re` starting exactly at `at`.
pub fn match_at(re: &Re, s: &[char], at: usize) -> Option<usize> {
    re.walk(s, at, &mut Some)
}

/// Leftmost, non-overlapping, non-empty matches as code-point ranges,
/// mirroring an iterator that resumes at the end of each match and steps
/// one character past empty ones.
pub fn scan(re: &Re, text: &str) -> Vec<(usize, usize)> {
    let s: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i <= s.len() {
        match match_at(re, &s, i) {
            Some(e) if e > i => {
                out.push((i, e));
                i = e;
            }
            _ => i += 1,
        }
    }
    out
}

fn atom(rng: &mut impl Rng) -> Re {
    if rng.gen_bool(0.7) {
        Re::Char(TEXT_ALPHABET[rng.gen_range(0..TEXT_ALPHABET.len())])
    } else {
        let mut cs: Vec<char> = TEXT_ALPHABET.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if cs.is_empty() {
            cs.push('a');
        }
        Re::Class(cs)
    }
}

pub fn random_re(rng: &mut impl Rng, depth: usize) -> Re {
    if depth == 0 {
        return atom(rng);
    }
    match rng.gen_range(0..7) {
        0 | 1 => atom(rng),
        2 | 3 => Re::Concat((0..rng.gen_range(1..=3)).map(|_| random_re(rng, depth - 1)).collect()),
        4 => Re::Alt(Box::new(random_re(rng, depth - 1)), Box::new(random_re(rng, depth - 1))),
        _ => {
            let mut body = random_re(rng, depth - 1);
            while body.nullable() {
                body = atom(rng);
            }
            match rng.gen_range(0..3) {
                0 => Re::Star(Box::new(body)),
                1 => Re::Plus(Box::new(body)),
                _ => Re::Opt(Box::new(body)),
            }
        }
    }
}

pub fn random_text(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| TEXT_ALPHABET[rng.gen_range(0..TEXT_ALPHABET.len())]).collect()
}
