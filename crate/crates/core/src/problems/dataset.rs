//! Partitioned datasets and their text file format.
//!
//! ```text
//! pacopt-dataset 1
//! config n=<n> family=<family> seed=<u64> mu_fixed=<f> l_lo=<f> l_hi=<f> master_seed=<u64>
//! partitions <name>:<count> ...
//! instance <partition> diagonal|dense mu=<f> ell=<f>
//! d <n values>            (diagonal)  |  a <n values>  (dense, one line per row)
//! b <n values>
//! ```
//!
//! Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DenseOperator, Family, Operator, ProblemDistributionConfig, ProblemInstance, ProblemSettings};
use crate::error::{Error, Result};
use crate::seed;

const MAGIC: &str = "pacopt-dataset 1";

/// Sizes of the four standard partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSizes {
    pub prior_1: usize,
    pub prior_2: usize,
    pub train: usize,
    pub test: usize,
}

impl PartitionSizes {
    pub fn new(prior_1: usize, prior_2: usize, train: usize, test: usize) -> Self {
        Self {
            prior_1,
            prior_2,
            train,
            test,
        }
    }

    pub fn named(&self) -> Vec<(String, usize)> {
        vec![
            ("prior_1".into(), self.prior_1),
            ("prior_2".into(), self.prior_2),
            ("train".into(), self.train),
            ("test".into(), self.test),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub name: String,
    pub instances: Vec<ProblemInstance>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub settings: ProblemSettings,
    pub master_seed: u64,
    pub partitions: Vec<Partition>,
}

impl Dataset {
    pub fn partition(&self, name: &str) -> &[ProblemInstance] {
        self.partitions
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.instances.as_slice())
            .unwrap_or(&[])
    }

    pub fn prior_1(&self) -> &[ProblemInstance] {
        self.partition("prior_1")
    }

    pub fn prior_2(&self) -> &[ProblemInstance] {
        self.partition("prior_2")
    }

    pub fn train(&self) -> &[ProblemInstance] {
        self.partition("train")
    }

    pub fn test(&self) -> &[ProblemInstance] {
        self.partition("test")
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.instances.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serializes to the dataset text format.
    pub fn to_text(&self) -> String {
        let s = &self.settings;
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(
            out,
            "config n={} family={} seed={} mu_fixed={} l_lo={} l_hi={} master_seed={}",
            s.n,
            s.family.as_str(),
            s.seed,
            fmt_f64(s.mu_fixed),
            fmt_f64(s.l_range[0]),
            fmt_f64(s.l_range[1]),
            self.master_seed
        );
        out.push_str("partitions");
        for p in &self.partitions {
            let _ = write!(out, " {}:{}", p.name, p.instances.len());
        }
        out.push('\n');
        for p in &self.partitions {
            for inst in &p.instances {
                let kind = match inst.operator() {
                    Operator::Diagonal(_) => "diagonal",
                    Operator::Dense(_) => "dense",
                };
                let _ = writeln!(
                    out,
                    "instance {} {} mu={} ell={}",
                    p.name,
                    kind,
                    fmt_f64(inst.mu()),
                    fmt_f64(inst.ell())
                );
                match inst.operator() {
                    Operator::Diagonal(d) => write_vector(&mut out, "d", d),
                    Operator::Dense(op) => {
                        for i in 0..op.dim() {
                            write_vector(&mut out, "a", op.row(i));
                        }
                    }
                }
                write_vector(&mut out, "b", inst.rhs());
            }
        }
        out
    }

    /// Parses the dataset text format. Consecutive dense instances with
    /// identical matrices share one operator.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, reason: &str| Error::DatasetFormat {
            line,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            Some((i, _)) => return Err(bad(i, "missing header")),
            None => return Err(bad(0, "empty file")),
        }
        let (cline, config) = lines.next().ok_or_else(|| bad(2, "missing config line"))?;
        let kv = parse_pairs(config.strip_prefix("config ").ok_or_else(|| bad(cline, "expected config"))?);
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| bad(cline, &format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| bad(cline, &format!("bad `{k}`")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| bad(cline, &format!("bad `{k}`")))
        };
        let settings = ProblemSettings {
            n: int("n")? as usize,
            family: Family::parse(get("family")?).ok_or_else(|| bad(cline, "unknown family"))?,
            mu_fixed: num("mu_fixed")?,
            l_range: [num("l_lo")?, num("l_hi")?],
            seed: int("seed")?,
        };
        let master_seed = int("master_seed")?;
        let n = settings.n;

        let (pline, pdecl) = lines.next().ok_or_else(|| bad(3, "missing partitions line"))?;
        let mut partitions = Vec::new();
        let mut expected = Vec::new();
        for tok in pdecl
            .strip_prefix("partitions")
            .ok_or_else(|| bad(pline, "expected partitions"))?
            .split_whitespace()
        {
            let (name, count) = tok.split_once(':').ok_or_else(|| bad(pline, "bad partition"))?;
            let count: usize = count.parse().map_err(|_| bad(pline, "bad partition count"))?;
            partitions.push(Partition {
                name: name.to_string(),
                instances: Vec::with_capacity(count),
            });
            expected.push(count);
        }

        let mut shared: Option<Arc<DenseOperator>> = None;
        while let Some((iline, head)) = lines.next() {
            if head.is_empty() {
                continue;
            }
            let mut parts = head.split_whitespace();
            if parts.next() != Some("instance") {
                return Err(bad(iline, "expected instance record"));
            }
            let pname = parts.next().ok_or_else(|| bad(iline, "missing partition"))?;
            let kind = parts.next().ok_or_else(|| bad(iline, "missing kind"))?;
            let kv = parse_pairs(&parts.collect::<Vec<_>>().join(" "));
            let field = |k: &str| -> Result<f64> {
                kv.iter()
                    .find(|(key, _)| key == k)
                    .and_then(|(_, v)| v.parse().ok())
                    .ok_or_else(|| bad(iline, &format!("bad `{k}`")))
            };
            let (mu, ell) = (field("mu")?, field("ell")?);
            let mut read_vec = |tag: &str| -> Result<Vec<f64>> {
                let (l, body) = lines.next().ok_or_else(|| bad(iline, "truncated instance"))?;
                let rest = body
                    .strip_prefix(tag)
                    .and_then(|r| r.strip_prefix(' '))
                    .ok_or_else(|| bad(l, &format!("expected `{tag}` row")))?;
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(l, "bad number"))?;
                if v.len() != n {
                    return Err(bad(l, "wrong row length"));
                }
                Ok(v)
            };
            let inst = match kind {
                "diagonal" => {
                    let d = read_vec("d")?;
                    let b = read_vec("b")?;
                    ProblemInstance::diagonal(d, b, mu, ell)?
                }
                "dense" => {
                    let mut rows = Vec::with_capacity(n * n);
                    for _ in 0..n {
                        rows.extend(read_vec("a")?);
                    }
                    let b = read_vec("b")?;
                    let op = match &shared {
                        Some(op) if op.matrix == rows => Arc::clone(op),
                        _ => {
                            let op = Arc::new(DenseOperator::new(&DMatrix::from_row_slice(n, n, &rows))?);
                            shared = Some(Arc::clone(&op));
                            op
                        }
                    };
                    ProblemInstance::dense(op, b)?
                }
                _ => return Err(bad(iline, "unknown instance kind")),
            };
            let part = partitions
                .iter_mut()
                .find(|p| p.name == pname)
                .ok_or_else(|| bad(iline, "undeclared partition"))?;
            part.instances.push(inst);
        }
        for (p, want) in partitions.iter().zip(&expected) {
            if p.instances.len() != *want {
                return Err(bad(
                    0,
                    &format!("partition {} has {} instances, header says {want}", p.name, p.instances.len()),
                ));
            }
        }
        Ok(Self {
            settings,
            master_seed,
            partitions,
        })
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_vector(out: &mut String, tag: &str, v: &[f64]) {
    out.push_str(tag);
    for x in v {
        out.push(' ');
        out.push_str(&fmt_f64(*x));
    }
    out.push('\n');
}

fn parse_pairs(s: &str) -> Vec<(String, String)> {
    s.split_whitespace()
        .filter_map(|t| t.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Draws every named partition from its own sub-stream of `seed`.
pub fn generate_dataset(
    config: &ProblemDistributionConfig,
    partitions: &[(String, usize)],
    seed: u64,
) -> Result<Dataset> {
    let partitions = partitions
        .iter()
        .map(|(name, count)| {
            Ok(Partition {
                name: name.clone(),
                instances: config.sample_instances(*count, seed::derive(seed, name))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        settings: config.settings.clone(),
        master_seed: seed,
        partitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(family: Family) -> ProblemDistributionConfig {
        ProblemDistributionConfig::realize(&ProblemSettings::new(5, family, 4)).unwrap()
    }

    fn same(a: &Dataset, b: &Dataset) -> bool {
        a.to_text() == b.to_text()
    }

    #[test]
    fn generation_is_deterministic() {
        let l = law(Family::VaryingSpectrum);
        let sizes = PartitionSizes::new(3, 3, 4, 5).named();
        let a = generate_dataset(&l, &sizes, 9).unwrap();
        let b = generate_dataset(&l, &sizes, 9).unwrap();
        assert!(same(&a, &b));
        assert_eq!(a.train().len(), 4);
        assert_eq!(a.test().len(), 5);
        let c = generate_dataset(&l, &sizes, 10).unwrap();
        assert!(!same(&a, &c));
    }

    #[test]
    fn adding_a_partition_leaves_others_untouched() {
        let l = law(Family::VaryingSpectrum);
        let base = generate_dataset(&l, &PartitionSizes::new(2, 2, 3, 3).named(), 1).unwrap();
        let mut more = PartitionSizes::new(2, 2, 3, 3).named();
        more.insert(0, ("extra".into(), 7));
        let ext = generate_dataset(&l, &more, 1).unwrap();
        for name in ["prior_1", "prior_2", "train", "test"] {
            let a: Vec<_> = base.partition(name).iter().map(|i| i.rhs().to_vec()).collect();
            let b: Vec<_> = ext.partition(name).iter().map(|i| i.rhs().to_vec()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let l = law(Family::VaryingSpectrum);
        let d = generate_dataset(&l, &PartitionSizes::new(0, 0, 0, 0).named(), 3).unwrap();
        assert!(d.is_empty());
        let back = Dataset::from_text(&d.to_text()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.partitions.len(), 4);
    }

    #[test]
    fn text_round_trip_is_exact() {
        for family in [Family::VaryingSpectrum, Family::FixedSpectrum] {
            let l = law(family);
            let d = generate_dataset(&l, &PartitionSizes::new(2, 1, 3, 2).named(), 12).unwrap();
            let text = d.to_text();
            let back = Dataset::from_text(&text).unwrap();
            assert_eq!(back.to_text(), text);
            assert_eq!(back.settings, d.settings);
            for (a, b) in d.train().iter().zip(back.train()) {
                assert_eq!(a.rhs(), b.rhs());
                assert_eq!(a.mu(), b.mu());
                assert_eq!(a.ell(), b.ell());
            }
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(Dataset::from_text("").is_err());
        assert!(Dataset::from_text("nope\n").is_err());
        let l = law(Family::VaryingSpectrum);
        let d = generate_dataset(&l, &PartitionSizes::new(1, 0, 1, 0).named(), 2).unwrap();
        let text = d.to_text();
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            Dataset::from_text(&truncated),
            Err(Error::DatasetFormat { .. })
        ));
    }
}
