//! Interaction logs: ingestion, k-core filtering, per-user train/test
//! splitting with a validation carve-out, negative sampling for BPR triplets,
//! and the binary dataset cache.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid_arg, Error, Result};
use crate::seed;

pub const DATASET_MAGIC: &[u8; 8] = b"CGCFDS1\0";

/// Number of consecutive rejected negatives before the sampler gives up.
pub const MAX_NEGATIVE_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Whitespace separated (tab or spaces).
    TsvTriples,
    /// Comma separated.
    CsvTriples,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" | "tsv_triples" => Ok(InputFormat::TsvTriples),
            "csv" | "csv_triples" => Ok(InputFormat::CsvTriples),
            other => Err(invalid_arg!("unknown input format {other:?}")),
        }
    }
}

/// Reads `user item [ignored...]` records. Duplicate pairs are dropped,
/// keeping first-seen order; ratings and timestamps are discarded.
pub fn ingest(path: &Path, format: InputFormat) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields: Box<dyn Iterator<Item = &str>> = match format {
            InputFormat::TsvTriples => Box::new(trimmed.split_whitespace()),
            InputFormat::CsvTriples => Box::new(trimmed.split(',').map(str::trim)),
        };
        let (user, item) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: "expected at least a user and an item column".into(),
                })
            }
        };
        let pair = (user.to_owned(), item.to_owned());
        if seen.insert(pair.clone()) {
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

/// Repeatedly drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. Input order is preserved.
pub fn k_core_filter<K>(pairs: &[(K, K)], k: usize) -> Result<Vec<(K, K)>>
where
    K: Eq + Hash + Clone,
{
    if k == 0 {
        return Err(invalid_arg!("k-core threshold must be at least 1"));
    }
    let mut alive = vec![true; pairs.len()];
    loop {
        let mut user_deg: HashMap<&K, usize> = HashMap::new();
        let mut item_deg: HashMap<&K, usize> = HashMap::new();
        for ((u, i), _) in pairs.iter().zip(&alive).filter(|(_, &a)| a) {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let mut changed = false;
        for ((u, i), a) in pairs.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[u] < k || item_deg[i] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let out: Vec<_> = pairs
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(p, _)| p.clone())
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no interactions survive {k}-core filtering"
        )));
    }
    Ok(out)
}

/// Dense ids for raw string keys, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    keys: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_keys(keys: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(keys.len());
        for (id, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary key {k:?}")));
            }
        }
        Ok(Vocab { keys, index })
    }

    /// Identity vocabulary `"0", "1", ...`.
    pub fn numeric(n: usize) -> Self {
        Self::from_keys((0..n).map(|i| i.to_string()).collect()).expect("unique keys")
    }

    fn intern(&mut self, key: &str) -> u32 {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.keys.push(key.to_owned());
        self.index.insert(key.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn id(&self, key: &str) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: u32) -> Option<&str> {
        self.keys.get(id as usize).map(String::as_str)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// Per-user share of interactions held out for testing (rounded down, at least one).
    pub test_fraction: f64,
    /// Share of the remaining training interactions moved to validation.
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<(u32, u32)>,
    pub validation: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
    pub user_vocab: Vocab,
    pub item_vocab: Vocab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// `1 - interactions / (users * items)`.
    pub sparsity: f64,
}

impl InteractionDataset {
    /// Assembles a dataset from already-split id pairs and checks every
    /// invariant: ids in range, no duplicate pair anywhere, every user and
    /// item present in train.
    pub fn from_splits(
        n_users: usize,
        n_items: usize,
        train: Vec<(u32, u32)>,
        validation: Vec<(u32, u32)>,
        test: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let ds = InteractionDataset {
            n_users,
            n_items,
            train,
            validation,
            test,
            user_vocab: Vocab::numeric(n_users),
            item_vocab: Vocab::numeric(n_items),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_vocab.len() != self.n_users || self.item_vocab.len() != self.n_items {
            return Err(Error::InvalidDataset("vocabulary sizes disagree with counts".into()));
        }
        let mut seen = HashSet::new();
        let mut user_in_train = vec![false; self.n_users];
        let mut item_in_train = vec![false; self.n_items];
        for (name, pairs) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            for &(u, i) in pairs {
                if u as usize >= self.n_users || i as usize >= self.n_items {
                    return Err(Error::InvalidDataset(format!(
                        "{name} pair ({u}, {i}) out of range"
                    )));
                }
                if !seen.insert((u, i)) {
                    return Err(Error::InvalidDataset(format!("duplicate pair ({u}, {i})")));
                }
                if name == "train" {
                    user_in_train[u as usize] = true;
                    item_in_train[i as usize] = true;
                }
            }
        }
        if let Some(u) = user_in_train.iter().position(|&x| !x) {
            return Err(Error::InvalidDataset(format!("user {u} has no training interaction")));
        }
        if let Some(i) = item_in_train.iter().position(|&x| !x) {
            return Err(Error::InvalidDataset(format!("item {i} has no training interaction")));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn n_interactions(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.n_interactions();
        let cells = (self.n_users * self.n_items) as f64;
        DatasetStats {
            n_users: self.n_users,
            n_items: self.n_items,
            n_interactions: n,
            sparsity: if cells > 0.0 { 1.0 - n as f64 / cells } else { 1.0 },
        }
    }

    pub fn split_pairs(&self, split: Split) -> &[(u32, u32)] {
        match split {
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Items per user for the given pairs, each list sorted.
    pub fn items_by_user(&self, pairs: &[(u32, u32)]) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users];
        for &(u, i) in pairs {
            out[u as usize].push(i);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(self.n_users as u64).to_le_bytes())?;
        w.write_all(&(self.n_items as u64).to_le_bytes())?;
        for vocab in [&self.user_vocab, &self.item_vocab] {
            for key in vocab.keys() {
                w.write_all(&(key.len() as u32).to_le_bytes())?;
                w.write_all(key.as_bytes())?;
            }
        }
        for pairs in [&self.train, &self.validation, &self.test] {
            w.write_all(&(pairs.len() as u64).to_le_bytes())?;
            for &(u, i) in pairs {
                w.write_all(&u.to_le_bytes())?;
                w.write_all(&i.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let ds = Self::read_from(&mut r).map_err(|e| match e {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        })?;
        ds.validate()?;
        Ok(ds)
    }

    fn read_from(r: &mut impl Read) -> Result<Self, ReadError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(ReadError::Format("not a dataset cache (bad magic)".into()));
        }
        let n_users = read_u64(r)? as usize;
        let n_items = read_u64(r)? as usize;
        let mut vocabs = Vec::with_capacity(2);
        for n in [n_users, n_items] {
            let mut keys = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let len = read_u32(r)? as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                keys.push(
                    String::from_utf8(buf)
                        .map_err(|_| ReadError::Format("vocabulary key is not UTF-8".into()))?,
                );
            }
            vocabs.push(Vocab::from_keys(keys).map_err(|e| ReadError::Format(e.to_string()))?);
        }
        let mut splits = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = read_u64(r)? as usize;
            let mut pairs = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                pairs.push((read_u32(r)?, read_u32(r)?));
            }
            splits.push(pairs);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(ReadError::Format("trailing bytes after dataset cache".into()));
        }
        let test = splits.pop().unwrap();
        let validation = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        let item_vocab = vocabs.pop().unwrap();
        let user_vocab = vocabs.pop().unwrap();
        Ok(InteractionDataset {
            n_users,
            n_items,
            train,
            validation,
            test,
            user_vocab,
            item_vocab,
        })
    }
}

pub(crate) enum ReadError {
    Io(std::io::Error),
    Format(String),
}

impl From<std::io::Error> for ReadError {
    fn from(e: std::io::Error) -> Self {
        ReadError::Io(e)
    }
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Per-user random train/test split followed by a global validation
/// carve-out from train.
///
/// Each user keeps `floor(test_fraction * deg)` (at least one) interactions for
/// testing. Validation pairs are removed from train. Both steps keep every
/// user and item present in train: an item whose interactions all landed in
/// test is swapped back against one of the same user's training items, and a
/// validation candidate is skipped when it is the last training edge of its
/// user or item.
pub fn split<K>(pairs: &[(K, K)], cfg: &SplitConfig, seed: u64) -> Result<InteractionDataset>
where
    K: AsRef<str>,
{
    if !(0.0..1.0).contains(&cfg.test_fraction) || !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(invalid_arg!("split fractions must lie in [0, 1)"));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no interactions to split".into()));
    }
    let mut user_vocab = Vocab::default();
    let mut item_vocab = Vocab::default();
    let mut seen = HashSet::new();
    let mut by_user: Vec<Vec<u32>> = Vec::new();
    for (u, i) in pairs {
        let u = user_vocab.intern(u.as_ref());
        let i = item_vocab.intern(i.as_ref());
        if !seen.insert((u, i)) {
            continue;
        }
        if by_user.len() <= u as usize {
            by_user.resize(u as usize + 1, Vec::new());
        }
        by_user[u as usize].push(i);
    }
    let n_users = user_vocab.len();
    let n_items = item_vocab.len();

    let mut rng = seed::rng_for(seed, seed::LABEL_SPLIT, &[]);
    let mut train_by_user: Vec<Vec<u32>> = Vec::with_capacity(n_users);
    let mut test_by_user: Vec<Vec<u32>> = Vec::with_capacity(n_users);
    for (u, items) in by_user.iter().enumerate() {
        let deg = items.len();
        if deg < 2 {
            return Err(invalid_arg!(
                "user {:?} has {deg} interaction(s); at least 2 are needed to split",
                user_vocab.key(u as u32).unwrap_or("?")
            ));
        }
        let n_test = ((cfg.test_fraction * deg as f64).floor() as usize).clamp(1, deg - 1);
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let train = shuffled.split_off(n_test);
        test_by_user.push(shuffled);
        train_by_user.push(train);
    }

    let mut item_train_deg = vec![0usize; n_items];
    for items in &train_by_user {
        for &i in items {
            item_train_deg[i as usize] += 1;
        }
    }
    for u in 0..n_users {
        for t in 0..test_by_user[u].len() {
            let item = test_by_user[u][t];
            if item_train_deg[item as usize] > 0 {
                continue;
            }
            // Give the orphaned item a training edge, returning a well-covered
            // item of the same user to test so the user's ratio is unchanged.
            let swap = train_by_user[u]
                .iter()
                .position(|&j| item_train_deg[j as usize] >= 2);
            match swap {
                Some(p) => {
                    let j = train_by_user[u][p];
                    train_by_user[u][p] = item;
                    test_by_user[u][t] = j;
                    item_train_deg[j as usize] -= 1;
                }
                None => {
                    train_by_user[u].push(item);
                    test_by_user[u][t] = u32::MAX;
                }
            }
            item_train_deg[item as usize] += 1;
        }
        test_by_user[u].retain(|&i| i != u32::MAX);
    }

    let mut train: Vec<(u32, u32)> = train_by_user
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
        .collect();
    let test: Vec<(u32, u32)> = test_by_user
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
        .collect();

    let n_val = (cfg.validation_fraction * train.len() as f64).floor() as usize;
    let mut user_train_deg: Vec<usize> = train_by_user.iter().map(Vec::len).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut is_val = vec![false; train.len()];
    let mut taken = 0;
    for idx in order {
        if taken == n_val {
            break;
        }
        let (u, i) = train[idx];
        if user_train_deg[u as usize] >= 2 && item_train_deg[i as usize] >= 2 {
            user_train_deg[u as usize] -= 1;
            item_train_deg[i as usize] -= 1;
            is_val[idx] = true;
            taken += 1;
        }
    }
    let mut validation = Vec::with_capacity(taken);
    let mut kept = Vec::with_capacity(train.len() - taken);
    for (p, v) in train.drain(..).zip(is_val) {
        if v {
            validation.push(p);
        } else {
            kept.push(p);
        }
    }
    let mut train = kept;
    let mut test = test;
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();

    let ds = InteractionDataset {
        n_users,
        n_items,
        train,
        validation,
        test,
        user_vocab,
        item_vocab,
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BprTriplet {
    pub user: u32,
    pub pos_item: u32,
    pub neg_item: u32,
}

/// Draws BPR triplets: a uniform training positive paired with a uniform item
/// the user has not interacted with in train or validation.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    train: Vec<(u32, u32)>,
    known: Vec<Vec<u32>>,
    n_items: u32,
}

impl NegativeSampler {
    pub fn new(ds: &InteractionDataset) -> Self {
        let mut known = ds.items_by_user(&ds.train);
        for &(u, i) in &ds.validation {
            known[u as usize].push(i);
        }
        known.iter_mut().for_each(|v| v.sort_unstable());
        NegativeSampler {
            train: ds.train.clone(),
            known,
            n_items: ds.n_items as u32,
        }
    }

    /// Independent stream for one sampling worker.
    pub fn worker_rng(seed: u64, worker_id: u64) -> seed::Rng {
        seed::rng_for(seed, seed::LABEL_NEGSAMPLE, &[worker_id])
    }

    pub fn is_known(&self, user: u32, item: u32) -> bool {
        self.known[user as usize].binary_search(&item).is_ok()
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<BprTriplet>> {
        if batch_size == 0 {
            return Err(invalid_arg!("batch size must be at least 1"));
        }
        if self.train.is_empty() {
            return Err(Error::EmptyDataset("no training interactions to sample".into()));
        }
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let (user, pos_item) = self.train[rng.gen_range(0..self.train.len())];
            let mut attempts = 0;
            let neg_item = loop {
                let cand = rng.gen_range(0..self.n_items);
                if !self.is_known(user, cand) {
                    break cand;
                }
                attempts += 1;
                if attempts >= MAX_NEGATIVE_REJECTIONS {
                    return Err(Error::SamplerStuck { user, attempts });
                }
            };
            batch.push(BprTriplet {
                user,
                pos_item,
                neg_item,
            });
        }
        Ok(batch)
    }
}

pub fn sample_batch<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<BprTriplet>> {
    NegativeSampler::new(ds).sample_batch(batch_size, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn s(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(u, i)| (u.to_string(), i.to_string())).collect()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_dedups_and_keeps_order() {
        let f = write_tmp("u1 i1\nu1\ti1\nu2 i3 5 123\n\n");
        let pairs = ingest(f.path(), InputFormat::TsvTriples).unwrap();
        assert_eq!(pairs, s(&[("u1", "i1"), ("u2", "i3")]));
    }

    #[test]
    fn ingest_csv_and_empty() {
        let f = write_tmp("a,x,4.0\nb,y,1.0\na,x,2.0\n");
        assert_eq!(ingest(f.path(), InputFormat::CsvTriples).unwrap().len(), 2);
        let empty = write_tmp("");
        assert!(ingest(empty.path(), InputFormat::TsvTriples).unwrap().is_empty());
    }

    #[test]
    fn ingest_reports_line_numbers() {
        let f = write_tmp("u1 i1\nlonely\n");
        match ingest(f.path(), InputFormat::TsvTriples) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            ingest(Path::new("/definitely/not/here"), InputFormat::TsvTriples),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn k_core_identity_for_k1() {
        let pairs = s(&[("a", "x"), ("b", "y"), ("a", "y")]);
        assert_eq!(k_core_filter(&pairs, 1).unwrap(), pairs);
        assert!(k_core_filter(&pairs, 0).is_err());
    }

    #[test]
    fn k_core_star_collapses() {
        let pairs = s(&[("u", "a"), ("u", "b"), ("u", "c")]);
        assert!(matches!(k_core_filter(&pairs, 2), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn k_core_cascades() {
        // 2x2 biclique plus a pendant user hanging off item x.
        let pairs = s(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y"), ("c", "x"), ("c", "z")]);
        let kept = k_core_filter(&pairs, 2).unwrap();
        assert_eq!(kept, s(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]));
    }

    #[test]
    fn split_ratio_per_user() {
        let mut pairs = Vec::new();
        for i in 0..10 {
            pairs.push(("u0".to_string(), format!("i{i}")));
        }
        // Second user covers every item so no swaps are needed.
        for i in 0..10 {
            pairs.push(("u1".to_string(), format!("i{i}")));
        }
        let cfg = SplitConfig {
            validation_fraction: 0.0,
            ..Default::default()
        };
        let ds = split(&pairs, &cfg, 3).unwrap();
        for u in 0..2 {
            let n_test = ds.test.iter().filter(|p| p.0 == u).count();
            let n_train = ds.train.iter().filter(|p| p.0 == u).count();
            assert_eq!((n_train, n_test), (8, 2));
        }
    }

    #[test]
    fn split_minimum_user() {
        let pairs = s(&[("u", "a"), ("u", "b"), ("v", "a"), ("v", "b")]);
        let ds = split(&pairs, &SplitConfig::default(), 1).unwrap();
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test.len(), 2);
        assert!(ds.validation.is_empty());
    }

    #[test]
    fn split_rejects_single_interaction_user() {
        let pairs = s(&[("u", "a"), ("u", "b"), ("v", "a")]);
        assert!(matches!(
            split(&pairs, &SplitConfig::default(), 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds_pairs = crate::synthetic::PlantedPartition::default().generate(11);
        let a = split(&ds_pairs, &SplitConfig::default(), 9).unwrap();
        let b = split(&ds_pairs, &SplitConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_interactions(), ds_pairs.len());
        let expected_val = (0.1 * (a.train.len() + a.validation.len()) as f64).floor() as usize;
        assert!(a.validation.len() <= expected_val && a.validation.len() + 5 >= expected_val);
        let c = split(&ds_pairs, &SplitConfig::default(), 10).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn forced_negative() {
        let ds = InteractionDataset::from_splits(1, 2, vec![(0, 0)], vec![], vec![]).unwrap_err();
        // item 1 has no train edge; build the sampler state directly instead.
        assert!(matches!(ds, Error::InvalidDataset(_)));
        let ds = InteractionDataset {
            n_users: 1,
            n_items: 2,
            train: vec![(0, 0)],
            validation: vec![],
            test: vec![],
            user_vocab: Vocab::numeric(1),
            item_vocab: Vocab::numeric(2),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&ds, 64, &mut rng).unwrap();
        assert!(batch.iter().all(|t| *t == BprTriplet { user: 0, pos_item: 0, neg_item: 1 }));
    }

    #[test]
    fn sampler_stuck() {
        let ds = InteractionDataset::from_splits(1, 2, vec![(0, 0), (0, 1)], vec![], vec![]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_batch(&ds, 1, &mut rng),
            Err(Error::SamplerStuck { user: 0, .. })
        ));
        assert!(sample_batch(&ds, 0, &mut rng).is_err());
    }

    #[test]
    fn batches_are_sized_seeded_and_never_collide() {
        let pairs = crate::synthetic::PlantedPartition::default().generate(5);
        let ds = split(&pairs, &SplitConfig::default(), 5).unwrap();
        let sampler = NegativeSampler::new(&ds);
        let train: HashSet<_> = ds.train.iter().copied().collect();
        let known: HashSet<_> = ds.train.iter().chain(&ds.validation).copied().collect();
        let mut rng = NegativeSampler::worker_rng(42, 0);
        for _ in 0..5 {
            let batch = sampler.sample_batch(1024, &mut rng).unwrap();
            assert_eq!(batch.len(), 1024);
            for t in &batch {
                assert!(train.contains(&(t.user, t.pos_item)));
                assert!(!known.contains(&(t.user, t.neg_item)));
            }
        }
        let a = sampler.sample_batch(32, &mut NegativeSampler::worker_rng(42, 3)).unwrap();
        let b = sampler.sample_batch(32, &mut NegativeSampler::worker_rng(42, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_round_trip_and_bad_magic() {
        let pairs = s(&[("u", "a"), ("u", "b"), ("v", "a"), ("v", "b"), ("v", "c"), ("w", "c"), ("w", "a")]);
        let ds = split(&pairs, &SplitConfig::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        ds.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], DATASET_MAGIC);
        assert_eq!(InteractionDataset::load(&path).unwrap(), ds);

        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"NOTMAGIC").unwrap();
        assert!(matches!(InteractionDataset::load(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn stats_sparsity() {
        let ds = InteractionDataset::from_splits(
            3,
            3,
            vec![(0, 0), (1, 1), (2, 2), (0, 1)],
            vec![(1, 2)],
            vec![(2, 0)],
        )
        .unwrap();
        let st = ds.stats();
        assert_eq!(st.n_interactions, 6);
        assert!((st.sparsity - (1.0 - 6.0 / 9.0)).abs() < 1e-15);
    }
}
