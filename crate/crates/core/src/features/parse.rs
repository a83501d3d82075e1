//! Dependency trees and the CoNLL reader for parser output files.

use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Conll { line: usize, reason: String },
    #[error("token {token}: head {head} is out of range")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("token {token}: following heads never reaches the root")]
    Cycle { token: usize },
    #[error("token {token} is not in a parse of {len} tokens")]
    MissingToken { token: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Head index per token (1-based tokens, 0 = virtual root).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyParse {
    heads: Vec<usize>,
}

impl DependencyParse {
    /// Validates that every head chain reaches the root.
    pub fn new(heads: Vec<usize>) -> Result<Self, ParseError> {
        let n = heads.len();
        for (k, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(ParseError::HeadOutOfRange {
                    token: k + 1,
                    head: h,
                });
            }
        }
        // 0 = unvisited, 1 = on the current path, 2 = reaches root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut t = start;
            while state[t] == 0 {
                state[t] = 1;
                path.push(t);
                t = heads[t - 1];
            }
            if state[t] == 1 {
                return Err(ParseError::Cycle { token: start });
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(DependencyParse { heads })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, token: usize) -> usize {
        self.heads[token - 1]
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    fn check(&self, token: usize) -> Result<(), ParseError> {
        if token == 0 || token > self.heads.len() {
            return Err(ParseError::MissingToken {
                token,
                len: self.heads.len(),
            });
        }
        Ok(())
    }

    fn depth(&self, mut token: usize) -> usize {
        let mut d = 0;
        while token != 0 {
            token = self.heads[token - 1];
            d += 1;
        }
        d
    }

    /// Larger of the two edge counts from `i` and `j` up to their lowest
    /// common ancestor (the virtual root is an ancestor of every token).
    pub fn hierarchical_distance(&self, i: usize, j: usize) -> Result<usize, ParseError> {
        self.check(i)?;
        self.check(j)?;
        let (mut a, mut b) = (i, j);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        let (mut ea, mut eb) = (0, 0);
        while da > db {
            a = self.heads[a - 1];
            da -= 1;
            ea += 1;
        }
        while db > da {
            b = self.heads[b - 1];
            db -= 1;
            eb += 1;
        }
        while a != b {
            a = self.heads[a - 1];
            b = self.heads[b - 1];
            ea += 1;
            eb += 1;
        }
        Ok(ea.max(eb))
    }

    /// True if one token is the head of the other.
    pub fn is_head_child(&self, i: usize, j: usize) -> bool {
        self.head(i) == j || self.head(j) == i
    }
}

/// Reads CoNLL-X / CoNLL-U parser output: one token per line, blank lines
/// between sentences, head index in the 7th column. Comment lines and
/// CoNLL-U multiword ranges (`1-2`) or empty nodes (`1.1`) are skipped.
pub fn read_conll<R: BufRead>(reader: R) -> Result<Vec<DependencyParse>, ParseError> {
    let mut parses = Vec::new();
    let mut heads: Vec<usize> = Vec::new();
    let mut finish = |heads: &mut Vec<usize>, line: usize| -> Result<(), ParseError> {
        if !heads.is_empty() {
            let h = std::mem::take(heads);
            parses.push(DependencyParse::new(h).map_err(|e| ParseError::Conll {
                line,
                reason: e.to_string(),
            })?);
        }
        Ok(())
    };
    let mut last_line = 0;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        last_line = lineno;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            finish(&mut heads, lineno)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(ParseError::Conll {
                line: lineno,
                reason: format!("expected at least 7 columns, found {}", cols.len()),
            });
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| ParseError::Conll {
            line: lineno,
            reason: format!("bad token id {:?}", cols[0]),
        })?;
        if id != heads.len() + 1 {
            return Err(ParseError::Conll {
                line: lineno,
                reason: format!("expected token id {}, found {id}", heads.len() + 1),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| ParseError::Conll {
            line: lineno,
            reason: format!("bad head {:?}", cols[6]),
        })?;
        heads.push(head);
    }
    finish(&mut heads, last_line + 1)?;
    Ok(parses)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: intersect the full ancestor paths.
    fn oracle(p: &DependencyParse, i: usize, j: usize) -> usize {
        let path = |mut t: usize| {
            let mut v = vec![t];
            while t != 0 {
                t = p.head(t);
                v.push(t);
            }
            v
        };
        let (pi, pj) = (path(i), path(j));
        let (ei, anc) = pi
            .iter()
            .enumerate()
            .find(|(_, a)| pj.contains(a))
            .map(|(k, a)| (k, *a))
            .unwrap();
        let ej = pj.iter().position(|&a| a == anc).unwrap();
        ei.max(ej)
    }

    #[test]
    fn head_child_and_siblings() {
        // 1 <- 2 (root), 3 <- 2
        let p = DependencyParse::new(vec![2, 0, 2]).unwrap();
        assert_eq!(p.hierarchical_distance(1, 2).unwrap(), 1);
        assert_eq!(p.hierarchical_distance(1, 3).unwrap(), 1);
        assert!(p.is_head_child(1, 2));
        assert!(!p.is_head_child(1, 3));
    }

    #[test]
    fn chain() {
        // root -> a(1) -> b(2) -> c(3)
        let p = DependencyParse::new(vec![0, 1, 2]).unwrap();
        assert_eq!(p.hierarchical_distance(1, 3).unwrap(), 2);
        assert_eq!(p.hierarchical_distance(3, 1).unwrap(), 2);
    }

    #[test]
    fn two_roots_meet_at_virtual_root() {
        let p = DependencyParse::new(vec![0, 0, 2]).unwrap();
        assert_eq!(p.hierarchical_distance(1, 3).unwrap(), 2);
        assert_eq!(oracle(&p, 1, 3), 2);
    }

    #[test]
    fn invalid_trees() {
        assert!(matches!(
            DependencyParse::new(vec![2, 1]),
            Err(ParseError::Cycle { .. })
        ));
        assert!(matches!(
            DependencyParse::new(vec![0, 5]),
            Err(ParseError::HeadOutOfRange { token: 2, head: 5 })
        ));
        let p = DependencyParse::new(vec![0]).unwrap();
        assert!(p.hierarchical_distance(1, 2).is_err());
    }

    #[test]
    fn random_trees_match_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..20);
            let heads = crate::synthetic::random_tree(&mut rng, n);
            let p = DependencyParse::new(heads).unwrap();
            for i in 1..=n {
                for j in 1..=n {
                    if i != j {
                        assert_eq!(p.hierarchical_distance(i, j).unwrap(), oracle(&p, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn conll_reader() {
        let text = "# sent 1\n1\tThe\tthe\tDT\tDT\t_\t2\tdet\t_\t_\n2\tdog\tdog\tNN\tNN\t_\t0\troot\t_\t_\n\n\
                    1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tVB\tVB\t_\t0\troot\t_\t_\n2\tn't\tnot\tRB\tRB\t_\t1\tneg\t_\t_\n";
        let parses = read_conll(text.as_bytes()).unwrap();
        assert_eq!(parses.len(), 2);
        assert_eq!(parses[0].heads(), &[2, 0]);
        assert_eq!(parses[1].heads(), &[0, 1]);

        let bad = "1\tThe\tthe\tDT\n";
        assert!(matches!(
            read_conll(bad.as_bytes()),
            Err(ParseError::Conll { line: 1, .. })
        ));
        let cyc = "1\ta\ta\tX\tX\t_\t2\t_\n2\tb\tb\tX\tX\t_\t1\t_\n";
        assert!(read_conll(cyc.as_bytes()).is_err());
    }
}
