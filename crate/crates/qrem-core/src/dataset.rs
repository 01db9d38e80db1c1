//! Generation, persistence, and ingestion of (observed, ideal) training and
//! test pairs.
//!
//! On disk a dataset is JSON Lines: line 1 is a header object
//! `{"n", "split", "provenance", "seed"}`, every following line is one record
//! with fields `{"angles", "ideal", "observed", "shots", "t"}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    ideal_distribution, sample, AngleVector, NoiseChannel, ProbabilityDistribution, Shots,
};
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, derive_seed_indexed};

/// Tolerance for the recomputable ideal-label check.
const IDEAL_RECHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// One training or test example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub angles: AngleVector,
    pub ideal: ProbabilityDistribution,
    pub observed: ProbabilityDistribution,
    pub shots: Shots,
    #[serde(rename = "t")]
    pub time_index: Option<i64>,
}

impl DatasetRecord {
    /// Checks that `ideal` matches `ideal_distribution(angles)` and that the
    /// two distributions share a qubit count.
    pub fn validate(&self) -> Result<()> {
        if self.ideal.num_qubits() != self.observed.num_qubits() {
            return Err(Error::InvalidDataset(format!(
                "ideal has {} qubits, observed has {}",
                self.ideal.num_qubits(),
                self.observed.num_qubits()
            )));
        }
        if self.angles.len() != self.ideal.num_qubits() {
            return Err(Error::InvalidDataset(format!(
                "angle vector has length {}, expected {}",
                self.angles.len(),
                self.ideal.num_qubits()
            )));
        }
        let recomputed = ideal_distribution(&self.angles);
        for (a, b) in recomputed.values().iter().zip(self.ideal.values()) {
            if (a - b).abs() > IDEAL_RECHECK_TOLERANCE {
                return Err(Error::InvalidDataset(
                    "ideal distribution does not match its angles".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Free-text origin plus the master seed that generated the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub text: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    n: usize,
    split: SplitTag,
    provenance: String,
    seed: u64,
}

/// An ordered collection of records sharing one qubit count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_qubits: usize,
    records: Vec<DatasetRecord>,
    split_tag: SplitTag,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        num_qubits: usize,
        records: Vec<DatasetRecord>,
        split_tag: SplitTag,
        provenance: Provenance,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidDataset("dataset has no records".into()));
        }
        for r in &records {
            if r.ideal.num_qubits() != num_qubits {
                return Err(Error::InvalidDataset(format!(
                    "record has {} qubits, dataset declares {}",
                    r.ideal.num_qubits(),
                    num_qubits
                )));
            }
            r.validate()?;
        }
        Ok(Dataset { num_qubits, records, split_tag, provenance })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Stamps every record with a drift time index.
    pub fn set_time_index(&mut self, t: i64) {
        for r in &mut self.records {
            r.time_index = Some(t);
        }
    }

    /// Serializes to JSONL (header line plus one record per line).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = DatasetHeader {
            n: self.num_qubits,
            split: self.split_tag,
            provenance: self.provenance.text.clone(),
            seed: self.provenance.seed,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidDataset("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&header_line)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<DatasetRecord>(&line)?);
        }
        Dataset::new(
            header.n,
            records,
            header.split,
            Provenance { text: header.provenance, seed: header.seed },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::read(File::open(path)?)
    }

    /// SHA-256 over the serialized content, hex-encoded. Identifies the exact
    /// data a model was trained on.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("in-memory serialization");
        let digest = Sha256::digest(&buf);
        hex_string(&digest)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Draws `count` records: angles uniform per qubit, ideal computed
/// analytically, observed = sample(channel(ideal)). Per-record seeds derive
/// from `seed`, so records are independent and the whole dataset is
/// reproducible from (arguments, seed).
pub fn generate(
    n: usize,
    count: usize,
    channel: &NoiseChannel,
    shots: Shots,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one qubit".into()));
    }
    if count == 0 {
        return Err(Error::InvalidConfig("record count must be >= 1".into()));
    }
    if channel.num_qubits() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: channel.num_qubits() });
    }
    shots.validate()?;
    if matches!(channel, NoiseChannel::Drifting(_)) {
        return Err(Error::InvalidChannel(
            "resolve a drifting channel with drift_at(t) before generating data".into(),
        ));
    }
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let angle_seed = derive_seed_indexed(seed, "record-angles", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(angle_seed);
        let angles = AngleVector::random(n, &mut rng)?;
        let ideal = ideal_distribution(&angles);
        let noisy = channel.apply(&ideal)?;
        let observed = sample(shots, derive_seed_indexed(seed, "record-sample", i as u64), &noisy);
        records.push(DatasetRecord { angles, ideal, observed, shots, time_index: None });
    }
    let provenance = Provenance {
        text: format!("generated: channel={}, count={count}", channel.description()),
        seed,
    };
    Dataset::new(n, records, SplitTag::Train, provenance)
}

/// Disjoint seeded partition into (train, test) with sizes
/// (N − test_count, test_count).
pub fn split_train_test(d: &Dataset, test_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if test_count == 0 {
        return Err(Error::InvalidConfig("test_count must be >= 1".into()));
    }
    if test_count >= d.len() {
        return Err(Error::InvalidConfig(format!(
            "test_count {} must be smaller than the dataset size {}",
            test_count,
            d.len()
        )));
    }
    let mut indices: Vec<usize> = (0..d.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split"));
    indices.shuffle(&mut rng);
    let (train_idx, test_idx) = indices.split_at(d.len() - test_count);
    let pick = |idx: &[usize], tag: SplitTag, label: &str| {
        let records = idx.iter().map(|&i| d.records[i].clone()).collect();
        Dataset::new(
            d.num_qubits,
            records,
            tag,
            Provenance {
                text: format!("{} / split[{label}](seed={seed})", d.provenance.text),
                seed: d.provenance.seed,
            },
        )
    };
    Ok((
        pick(train_idx, SplitTag::Train, "train")?,
        pick(test_idx, SplitTag::Test, "test")?,
    ))
}

/// Keeps ⌈fraction·N⌉ records chosen without replacement (seeded), in their
/// original relative order. `fraction` must lie in (0, 1].
pub fn subsample(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::InvalidConfig(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = ((fraction * d.len() as f64).ceil() as usize).clamp(1, d.len());
    let mut indices: Vec<usize> = (0..d.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "subsample"));
    indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = indices.into_iter().take(keep).collect();
    chosen.sort_unstable();
    let records = chosen.iter().map(|&i| d.records[i].clone()).collect();
    Dataset::new(
        d.num_qubits,
        records,
        d.split_tag,
        Provenance {
            text: format!("{} / subsample(fraction={fraction}, seed={seed})", d.provenance.text),
            seed: d.provenance.seed,
        },
    )
}

/// Which end of a counts key holds qubit 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitOrder {
    /// First character of the bit string is qubit 0 (the crate convention).
    #[default]
    Normal,
    /// Bit strings are reversed before indexing (for exports using the
    /// opposite endianness).
    Reversed,
}

#[derive(Debug, Deserialize)]
struct CountsFile {
    n: usize,
    experiments: Vec<CountsExperiment>,
}

#[derive(Debug, Deserialize)]
struct CountsExperiment {
    angles: Vec<f64>,
    counts: std::collections::HashMap<String, i64>,
    shots: u64,
}

fn bitstring_index(key: &str, n: usize, order: BitOrder) -> Result<usize> {
    if key.len() != n {
        return Err(Error::InvalidDataset(format!(
            "counts key {key:?} does not have {n} bits"
        )));
    }
    let mut index = 0usize;
    let chars: Vec<char> = match order {
        BitOrder::Normal => key.chars().collect(),
        BitOrder::Reversed => key.chars().rev().collect(),
    };
    for c in chars {
        index <<= 1;
        match c {
            '0' => {}
            '1' => index |= 1,
            other => {
                return Err(Error::InvalidDataset(format!(
                    "counts key {key:?} contains non-binary character {other:?}"
                )))
            }
        }
    }
    Ok(index)
}

/// Ingests externally produced counts
/// (`{"n", "experiments": [{"angles", "counts", "shots"}]}`), normalizing
/// each counts map over all 2^n bit strings. Missing bit strings count as
/// zero; negative counts and malformed angles are rejected.
pub fn ingest_counts<R: Read>(reader: R, n: usize, order: BitOrder) -> Result<Dataset> {
    let file: CountsFile = serde_json::from_reader(reader)?;
    if file.n != n {
        return Err(Error::InvalidDataset(format!(
            "counts file declares n={}, expected {n}",
            file.n
        )));
    }
    if n == 0 {
        return Err(Error::InvalidDataset("need at least one qubit".into()));
    }
    let dim = 1usize << n;
    let mut records = Vec::with_capacity(file.experiments.len());
    for exp in &file.experiments {
        if exp.angles.len() != n {
            return Err(Error::InvalidDataset(format!(
                "experiment has {} angles, expected {n}",
                exp.angles.len()
            )));
        }
        let angles = AngleVector::new(exp.angles.clone())?;
        let mut tallies = vec![0i64; dim];
        for (key, &count) in &exp.counts {
            if count < 0 {
                return Err(Error::InvalidDataset(format!(
                    "negative count {count} for bit string {key:?}"
                )));
            }
            tallies[bitstring_index(key, n, order)?] += count;
        }
        let total: i64 = tallies.iter().sum();
        if total <= 0 {
            return Err(Error::InvalidDataset("experiment has zero total counts".into()));
        }
        let observed = ProbabilityDistribution::new(
            n,
            tallies.iter().map(|&c| c as f64 / total as f64).collect(),
        )?;
        let ideal = ideal_distribution(&angles);
        records.push(DatasetRecord {
            angles,
            ideal,
            observed,
            shots: Shots::Count(exp.shots.max(1)),
            time_index: None,
        });
    }
    Dataset::new(
        n,
        records,
        SplitTag::Test,
        Provenance { text: "ingested counts file".into(), seed: 0 },
    )
}

pub fn ingest_counts_file(path: &Path, n: usize, order: BitOrder) -> Result<Dataset> {
    ingest_counts(File::open(path)?, n, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinearChannel;
    use approx::assert_abs_diff_eq;

    fn identity_channel(n: usize) -> NoiseChannel {
        NoiseChannel::Linear(LinearChannel::identity(n).unwrap())
    }

    #[test]
    fn generate_identity_exact_observed_equals_ideal() {
        let d = generate(2, 5, &identity_channel(2), Shots::Exact, 7).unwrap();
        for r in d.records() {
            assert_eq!(r.observed, r.ideal);
        }
    }

    #[test]
    fn generate_is_reproducible_byte_for_byte() {
        let ch = identity_channel(2);
        let a = generate(2, 20, &ch, Shots::Count(512), 99).unwrap();
        let b = generate(2, 20, &ch, Shots::Count(512), 99).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write(&mut buf_a).unwrap();
        b.write(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn generate_matches_paper_sizes() {
        let d = generate(2, 1175, &identity_channel(2), Shots::Exact, 3).unwrap();
        assert_eq!(d.len(), 1175);
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = generate(2, 1375, &identity_channel(2), Shots::Exact, 11).unwrap();
        let (train, test) = split_train_test(&d, 200, 42).unwrap();
        assert_eq!(train.len(), 1175);
        assert_eq!(test.len(), 200);
        assert_eq!(train.split_tag(), SplitTag::Train);
        assert_eq!(test.split_tag(), SplitTag::Test);
        // Union as multisets: compare sorted serialized records.
        let key = |r: &DatasetRecord| serde_json::to_string(r).unwrap();
        let mut all: Vec<String> = d.records().iter().map(key).collect();
        let mut parts: Vec<String> =
            train.records().iter().chain(test.records()).map(key).collect();
        all.sort();
        parts.sort();
        assert_eq!(all, parts);
    }

    #[test]
    fn split_rejects_bad_counts() {
        let d = generate(1, 10, &identity_channel(1), Shots::Exact, 0).unwrap();
        assert!(split_train_test(&d, 0, 1).is_err());
        assert!(split_train_test(&d, 10, 1).is_err());
    }

    #[test]
    fn subsample_identity_and_containment() {
        let d = generate(1, 30, &identity_channel(1), Shots::Exact, 5).unwrap();
        let same = subsample(&d, 1.0, 1).unwrap();
        assert_eq!(same.records(), d.records());

        let half = subsample(&d, 0.5, 1).unwrap();
        assert_eq!(half.len(), 15);
        let pool: Vec<String> =
            d.records().iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        for r in half.records() {
            assert!(pool.contains(&serde_json::to_string(r).unwrap()));
        }
    }

    #[test]
    fn subsample_half_of_9700() {
        let d = generate(1, 9700, &identity_channel(1), Shots::Exact, 5).unwrap();
        assert_eq!(subsample(&d, 0.5, 2).unwrap().len(), 4850);
    }

    #[test]
    fn subsample_rejects_out_of_range() {
        let d = generate(1, 4, &identity_channel(1), Shots::Exact, 5).unwrap();
        assert!(subsample(&d, 0.0, 1).is_err());
        assert!(subsample(&d, 1.5, 1).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let d = generate(2, 8, &identity_channel(2), Shots::Count(256), 13).unwrap();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn ingest_trivial_counts() {
        let json = r#"{"n": 2, "experiments": [
            {"angles": [0.0, 0.0], "counts": {"00": 8192}, "shots": 8192}
        ]}"#;
        let d = ingest_counts(json.as_bytes(), 2, BitOrder::Normal).unwrap();
        assert_eq!(d.records()[0].observed.values(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.records()[0].ideal.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ingest_normalization_arithmetic() {
        let json = r#"{"n": 2, "experiments": [
            {"angles": [0.0, 0.0], "counts": {"00": 4096, "11": 4096}, "shots": 8192}
        ]}"#;
        let d = ingest_counts(json.as_bytes(), 2, BitOrder::Normal).unwrap();
        assert_eq!(d.records()[0].observed.values(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn ingest_three_qubit_export_matches_oracle() {
        // Frozen from the independent normalization oracle (total 1024).
        let json = r#"{"n": 3, "experiments": [
            {"angles": [0.0, 0.0, 0.0],
             "counts": {"000": 120, "001": 80, "010": 200, "011": 100,
                        "100": 50, "101": 150, "110": 250, "111": 74},
             "shots": 1024}
        ]}"#;
        let d = ingest_counts(json.as_bytes(), 3, BitOrder::Normal).unwrap();
        let expected = [
            0.1171875, 0.078125, 0.1953125, 0.09765625, 0.048828125, 0.146484375, 0.244140625,
            0.072265625,
        ];
        for (v, e) in d.records()[0].observed.values().iter().zip(expected) {
            assert_abs_diff_eq!(v, &e, epsilon = 1e-15);
        }
    }

    #[test]
    fn ingest_rejects_negative_counts_and_bad_angles() {
        let neg = r#"{"n": 1, "experiments": [
            {"angles": [0.0], "counts": {"0": -1}, "shots": 1}
        ]}"#;
        assert!(ingest_counts(neg.as_bytes(), 1, BitOrder::Normal).is_err());
        let bad_angles = r#"{"n": 2, "experiments": [
            {"angles": [0.0], "counts": {"00": 10}, "shots": 10}
        ]}"#;
        assert!(ingest_counts(bad_angles.as_bytes(), 2, BitOrder::Normal).is_err());
    }

    #[test]
    fn ingest_reversed_bit_order() {
        let json = r#"{"n": 2, "experiments": [
            {"angles": [0.0, 0.0], "counts": {"10": 100}, "shots": 100}
        ]}"#;
        let d = ingest_counts(json.as_bytes(), 2, BitOrder::Reversed).unwrap();
        // "10" reversed is "01" = index 1.
        assert_eq!(d.records()[0].observed.values(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
