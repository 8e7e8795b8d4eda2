use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token counts; merging two tables is associative and commutative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<S: AsRef<str>>(&mut self, tokens: &[S]) {
        for t in tokens {
            let t = t.as_ref();
            if RESERVED.contains(&t) {
                continue;
            }
            *self.counts.entry(t.to_string()).or_insert(0) += 1;
        }
    }

    pub fn merge(mut self, other: FrequencyTable) -> Self {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Reserved entries first, then kept tokens by descending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    cap: usize,
}

impl Vocabulary {
    /// Keeps the `cap` most frequent tokens; ties go to the lexicographically smaller token.
    pub fn from_counts(table: &FrequencyTable, cap: usize) -> Self {
        let mut entries: Vec<(&String, &u64)> = table.counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let kept = entries.into_iter().take(cap).map(|(t, _)| t.clone());
        Self::from_tokens(kept, cap)
    }

    fn from_tokens(kept: impl Iterator<Item = String>, cap: usize) -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(kept).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, cap }
    }

    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], cap: usize) -> Self {
        let mut table = FrequencyTable::new();
        for s in sentences {
            table.add(s);
        }
        Self::from_counts(&table, cap)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    /// Kept (non-reserved) tokens in index order.
    pub fn kept(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Joins decoded tokens with spaces, dropping sequence markers and padding.
    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Short stable fingerprint of the token list, stored in checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn header(&self) -> String {
        format!("#reserved\t{}\tcap\t{}", RESERVED.join(" "), self.cap)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        for t in self.kept() {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty vocabulary file"))??;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 4 || fields[0] != "#reserved" || fields[2] != "cap" {
            return Err(Error::validation(format!("bad vocabulary header `{header}`")));
        }
        if fields[1] != RESERVED.join(" ") {
            return Err(Error::validation(format!(
                "vocabulary reserved block `{}` does not match `{}`",
                fields[1],
                RESERVED.join(" ")
            )));
        }
        let cap: usize = fields[3]
            .parse()
            .map_err(|_| Error::validation(format!("bad vocabulary cap `{}`", fields[3])))?;
        let kept: Vec<String> = lines.collect::<std::io::Result<_>>()?;
        if kept.len() > cap {
            return Err(Error::validation("vocabulary larger than its cap"));
        }
        let v = Self::from_tokens(kept.into_iter(), cap);
        if v.index.len() != v.tokens.len() {
            return Err(Error::validation("duplicate token in vocabulary file"));
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, u64)]) -> FrequencyTable {
        let mut t = FrequencyTable::new();
        for (tok, n) in pairs {
            for _ in 0..*n {
                t.add(&[*tok]);
            }
        }
        t
    }

    #[test]
    fn keeps_most_frequent() {
        let v = Vocabulary::from_counts(&table(&[("a", 5), ("b", 4), ("c", 3), ("d", 2)]), 3);
        assert_eq!(v.kept(), &["a", "b", "c"]);
        assert_eq!(v.id("d"), UNK);
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::from_counts(&table(&[("b", 2), ("a", 2)]), 1);
        assert_eq!(v.kept(), &["a"]);
    }

    #[test]
    fn reserved_block_is_fixed() {
        let v = Vocabulary::build(&[vec!["x", "<s>"]], 10);
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(UNK), "<unk>");
        assert_eq!(v.token(BOS), "<s>");
        assert_eq!(v.token(EOS), "</s>");
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(&[vec!["the", "food", "is", "good", "the"]], 3);
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#reserved\t<pad> <unk> <s> </s>\tcap\t3\n"));
        assert_eq!(text.lines().nth(1), Some("the"));
        let back = Vocabulary::read_from(&buf[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
    }

    #[test]
    fn merge_is_order_independent() {
        let a = table(&[("x", 2), ("y", 1)]);
        let b = table(&[("y", 3), ("z", 1)]);
        assert_eq!(a.clone().merge(b.clone()), b.merge(a));
    }
}
