//! Seeded synthetic workloads.
//!
//! A stream is a pure function of its `SyntheticSpec`: the generator owns a
//! ChaCha8 stream seeded from `seed` and nothing else.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::trace::instr_for_ordinal;
use crate::types::{AccessKind, AccessRecord, WORD_BYTES};

const BLOCK: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Locality {
    Uniform,
    /// Block popularity follows Zipf with exponent `s`.
    Zipf(f64),
    /// Sequential sweep with a byte stride, wrapping at the working set.
    Strided(u64),
    /// Odometer over nested loop bounds; the innermost index walks words.
    LoopNest(Vec<u64>),
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locality::Uniform => write!(f, "uniform"),
            Locality::Zipf(s) => write!(f, "zipf:{s}"),
            Locality::Strided(stride) => write!(f, "strided:{stride}"),
            Locality::LoopNest(sizes) => {
                let parts: Vec<String> = sizes.iter().map(u64::to_string).collect();
                write!(f, "loopnest:{}", parts.join("x"))
            }
        }
    }
}

impl FromStr for Locality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
        let need = |what: &str| arg.ok_or_else(|| format!("{kind} needs a {what}, e.g. {kind}:<{what}>"));
        match kind {
            "uniform" => Ok(Locality::Uniform),
            "zipf" => {
                let s: f64 = need("exponent")?.parse().map_err(|_| format!("bad zipf exponent in {s:?}"))?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err("zipf exponent must be positive".into());
                }
                Ok(Locality::Zipf(s))
            }
            "strided" => {
                let stride: u64 = need("stride")?.parse().map_err(|_| format!("bad stride in {s:?}"))?;
                if stride == 0 {
                    return Err("stride must be positive".into());
                }
                Ok(Locality::Strided(stride))
            }
            "loopnest" => {
                let sizes = need("sizes")?
                    .split('x')
                    .map(|p| p.parse::<u64>().ok().filter(|&n| n > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| format!("bad loop bounds in {s:?}"))?;
                Ok(Locality::LoopNest(sizes))
            }
            _ => Err(format!("unknown locality {kind:?} (uniform, zipf:S, strided:N, loopnest:AxB..)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub record_count: u64,
    pub write_fraction: f64,
    pub working_set_bytes: u64,
    /// First byte of the working set.
    pub base_address: u64,
    pub locality: Locality,
    pub seed: u64,
    pub mem_ops_per_instruction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            record_count: 100_000,
            write_fraction: 0.3,
            working_set_bytes: 64 * 1024,
            base_address: 0,
            locality: Locality::Uniform,
            seed: 1,
            mem_ops_per_instruction: 0.4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, mem_size_bytes: u64) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(format!("write_fraction {} is outside [0, 1]", self.write_fraction));
        }
        if self.working_set_bytes < BLOCK {
            return Err(format!("working set must be at least {BLOCK} bytes"));
        }
        if self.base_address + self.working_set_bytes > mem_size_bytes {
            return Err(format!(
                "working set [{:#x}, {:#x}) exceeds the {mem_size_bytes}-byte memory",
                self.base_address,
                self.base_address + self.working_set_bytes
            ));
        }
        if !(self.mem_ops_per_instruction > 0.0) {
            return Err("mem_ops_per_instruction must be positive".into());
        }
        Ok(())
    }

    /// Set a field from `key = value` text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = || format!("bad value for {key}: {value:?}");
        match key {
            "records" | "record_count" => self.record_count = value.parse().map_err(|_| bad())?,
            "write_fraction" => self.write_fraction = value.parse().map_err(|_| bad())?,
            "working_set" | "working_set_bytes" => {
                self.working_set_bytes = crate::config::parse_size(key, value).map_err(|e| e.to_string())?
            }
            "base" | "base_address" => {
                let v = value.trim_start_matches("0x");
                self.base_address = u64::from_str_radix(v, 16).map_err(|_| bad())?
            }
            "locality" => self.locality = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "mem_ops_per_instruction" => self.mem_ops_per_instruction = value.parse().map_err(|_| bad())?,
            _ => return Err(format!("unknown generator key {key:?}")),
        }
        Ok(())
    }

    pub fn generate(&self) -> Generator {
        Generator::new(self.clone())
    }
}

/// Iterator over the records a spec describes.
pub struct Generator {
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
    zipf: Option<Zipf<f64>>,
    ordinal: u64,
    odometer: Vec<u64>,
    cursor: u64,
}

impl Generator {
    fn new(spec: SyntheticSpec) -> Self {
        let blocks = (spec.working_set_bytes / BLOCK).max(1);
        let zipf = match spec.locality {
            Locality::Zipf(s) => Some(Zipf::new(blocks as f64, s).expect("valid zipf parameters")),
            _ => None,
        };
        let odometer = match &spec.locality {
            Locality::LoopNest(sizes) => vec![0; sizes.len()],
            _ => Vec::new(),
        };
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            zipf,
            ordinal: 0,
            odometer,
            cursor: 0,
        }
    }

    fn offset(&mut self) -> u64 {
        let ws = self.spec.working_set_bytes;
        let words = ws / WORD_BYTES;
        match &self.spec.locality {
            Locality::Uniform => self.rng.random_range(0..words) * WORD_BYTES,
            Locality::Zipf(_) => {
                let rank = self.zipf.as_ref().unwrap().sample(&mut self.rng) as u64;
                let block = (rank.max(1) - 1).min(ws / BLOCK - 1);
                block * BLOCK + self.rng.random_range(0..BLOCK / WORD_BYTES) * WORD_BYTES
            }
            Locality::Strided(stride) => {
                let off = self.cursor % ws;
                self.cursor = self.cursor.wrapping_add(*stride);
                off - off % WORD_BYTES
            }
            Locality::LoopNest(sizes) => {
                let mut linear = 0u64;
                for (i, &n) in sizes.iter().enumerate() {
                    linear = linear * n + self.odometer[i];
                }
                for i in (0..sizes.len()).rev() {
                    self.odometer[i] += 1;
                    if self.odometer[i] < sizes[i] {
                        break;
                    }
                    self.odometer[i] = 0;
                }
                (linear * WORD_BYTES) % (words * WORD_BYTES)
            }
        }
    }
}

impl Iterator for Generator {
    type Item = AccessRecord;

    fn next(&mut self) -> Option<AccessRecord> {
        if self.ordinal >= self.spec.record_count {
            return None;
        }
        let offset = self.offset();
        let write = self.spec.write_fraction > 0.0 && self.rng.random_bool(self.spec.write_fraction);
        let rec = AccessRecord {
            kind: if write { AccessKind::Write } else { AccessKind::Read },
            address: self.spec.base_address + offset,
            instr_index: instr_for_ordinal(self.ordinal, self.spec.mem_ops_per_instruction),
        };
        self.ordinal += 1;
        Some(rec)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.spec.record_count - self.ordinal) as usize;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn spec(locality: Locality, records: u64, wf: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            record_count: records,
            write_fraction: wf,
            locality,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_write_fraction_is_all_reads() {
        assert!(spec(Locality::Uniform, 10_000, 0.0, 3).generate().all(|r| !r.kind.is_write()));
    }

    #[test]
    fn same_seed_same_stream() {
        for loc in [Locality::Uniform, Locality::Zipf(1.0), Locality::Strided(72), Locality::LoopNest(vec![8, 16])] {
            let a: Vec<_> = spec(loc.clone(), 5_000, 0.4, 9).generate().collect();
            let b: Vec<_> = spec(loc.clone(), 5_000, 0.4, 9).generate().collect();
            assert_eq!(a, b, "{loc}");
            let c: Vec<_> = spec(loc.clone(), 5_000, 0.4, 10).generate().collect();
            assert_ne!(a, c, "{loc}");
        }
    }

    #[test]
    fn write_fraction_within_two_percent() {
        for wf in [0.1, 0.3, 0.5, 0.9] {
            let n = 100_000;
            let writes = spec(Locality::Zipf(0.8), n, wf, 5).generate().filter(|r| r.kind.is_write()).count();
            let got = writes as f64 / n as f64;
            assert!((got - wf).abs() <= 0.02, "wanted {wf}, got {got}");
        }
    }

    #[test]
    fn zipf_top_block_dominates_uniform() {
        let top = |loc| {
            let mut counts: HashMap<u64, u64> = HashMap::new();
            for r in spec(loc, 1_000_000, 0.3, 11).generate() {
                *counts.entry(r.address / BLOCK).or_default() += 1;
            }
            counts.into_values().max().unwrap()
        };
        let (z, u) = (top(Locality::Zipf(1.0)), top(Locality::Uniform));
        assert!(z > 10 * u, "zipf top {z}, uniform top {u}");
    }

    #[test]
    fn addresses_stay_in_working_set_and_word_aligned() {
        for loc in [Locality::Uniform, Locality::Zipf(1.2), Locality::Strided(100), Locality::LoopNest(vec![300, 70])] {
            let mut s = spec(loc, 20_000, 0.5, 2);
            s.base_address = 0x10_0000;
            for r in s.generate() {
                assert!(r.address >= s.base_address && r.address < s.base_address + s.working_set_bytes);
                assert_eq!(r.address % WORD_BYTES, 0);
            }
        }
    }

    #[test]
    fn loop_nest_walks_in_order() {
        let addrs: Vec<u64> = spec(Locality::LoopNest(vec![2, 3]), 8, 0.0, 1).generate().map(|r| r.address).collect();
        assert_eq!(addrs, [0, 4, 8, 12, 16, 20, 0, 4]);
    }

    #[test]
    fn instr_indices_follow_ratio() {
        let recs: Vec<_> = spec(Locality::Uniform, 5, 0.5, 1).generate().collect();
        assert_eq!(recs.iter().map(|r| r.instr_index).collect::<Vec<_>>(), [0, 2, 5, 7, 10]);
    }

    #[test]
    fn locality_text_round_trip() {
        for text in ["uniform", "zipf:1.5", "strided:64", "loopnest:4x8x2"] {
            assert_eq!(text.parse::<Locality>().unwrap().to_string(), text);
        }
        assert!("zipf".parse::<Locality>().is_err());
        assert!("loopnest:4x0".parse::<Locality>().is_err());
        assert!("spiral".parse::<Locality>().is_err());
    }

    #[test]
    fn validation() {
        let s = SyntheticSpec::default();
        assert!(s.validate(1 << 20).is_ok());
        assert!(s.validate(1 << 10).is_err());
        let mut bad = s.clone();
        bad.write_fraction = 1.5;
        assert!(bad.validate(1 << 20).is_err());
    }
}
