//! Binary dataset container.
//!
//! Little-endian throughout. Header: magic, version (u16), case name,
//! split (u8), generator count and window length (u32), sample period (f64),
//! class map, seed (u64), configuration text, record count (u64). Each record
//! holds the class, the scenario, the window start and the window as f32
//! deviations from nominal in `[gen][t][channel]` order. Strings are a u32
//! byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, Provenance, Sample, Split};
use crate::attack::{AttackKind, AttackScenario, GainEntry, PmuWindow, StaticEntry};
use crate::binio::{Reader, Writer};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"GCAP";
pub const DATASET_VERSION: u16 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn kind_code(k: AttackKind) -> u8 {
    match k {
        AttackKind::SinglePoint => 0,
        AttackKind::MultiPoint => 1,
    }
}

/// Encodes a dataset. Windows are stored as f32 deviations, so a decoded
/// dataset re-encodes to identical bytes.
pub fn to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = Writer::with_capacity(64 + ds.len() * (ds.n_gen * ds.window_len * 8 + 64));
    w.bytes(DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    w.str(&ds.case);
    w.u8(ds.split.code());
    w.len(ds.n_gen, "generators")?;
    w.len(ds.window_len, "window samples")?;
    w.f64(ds.sample_period);
    w.len(ds.class_map.len(), "classes")?;
    for &b in &ds.class_map {
        w.u32(b);
    }
    w.u64(ds.provenance.seed);
    w.str(&ds.provenance.config);
    w.u64(ds.len() as u64);
    for (i, s) in ds.samples.iter().enumerate() {
        if s.window.shape() != (ds.n_gen, ds.window_len) {
            return Err(Error::Shape(format!("record {i}: window shape {:?}", s.window.shape())));
        }
        w.len(s.class, "class index")?;
        let sc = &s.scenario;
        w.u8(kind_code(sc.kind));
        w.u32(sc.label_bus);
        w.u16(u16::try_from(sc.gains.len()).map_err(|_| Error::Format("too many gain entries".into()))?);
        for g in &sc.gains {
            w.u32(g.load_bus);
            w.len(g.gen_ordinal, "generator ordinal")?;
            w.f64(g.gain_pu);
        }
        w.u16(u16::try_from(sc.statics.len()).map_err(|_| Error::Format("too many static entries".into()))?);
        for e in &sc.statics {
            w.u32(e.load_bus);
            w.f64(e.mw);
        }
        w.f64(s.window.t_start);
        for p in 0..s.window.n_points() {
            w.f32(s.window.deviation(p, 0) as f32);
            w.f32(s.window.deviation(p, 1) as f32);
        }
    }
    Ok(w.into_inner())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let case = r.str("case name")?;
    let split_code = r.u8("split")?;
    let split = Split::from_code(split_code).ok_or_else(|| Error::Format(format!("unknown split code {split_code}")))?;
    let n_gen = r.u32("generator count")? as usize;
    let window_len = r.u32("window length")? as usize;
    let sample_period = r.f64("sample period")?;
    if !(sample_period > 0.0 && sample_period.is_finite()) {
        return Err(Error::Format(format!("invalid sample period {sample_period}")));
    }
    let n_classes = r.u32("class count")?;
    let n_classes = r.count(n_classes as u64, 4, "class map")?;
    let class_map = (0..n_classes).map(|_| r.u32("class map")).collect::<Result<Vec<_>>>()?;
    let seed = r.u64("seed")?;
    let config = r.str("configuration")?;
    let n_records = r.u64("record count")?;
    let points = n_gen
        .checked_mul(window_len)
        .filter(|&p| p <= bytes.len())
        .ok_or_else(|| Error::Format("window shape exceeds file size".into()))?;
    let min_record = 4 + 1 + 4 + 2 + 2 + 8 + points * 8;
    let n_records = r.count(n_records, min_record, "records")?;
    let mut samples = Vec::with_capacity(n_records);
    for i in 0..n_records {
        let class = r.u32("class")? as usize;
        if class >= class_map.len() {
            return Err(Error::Format(format!("record {i}: class {class} out of range")));
        }
        let kind = match r.u8("attack kind")? {
            0 => AttackKind::SinglePoint,
            1 => AttackKind::MultiPoint,
            k => return Err(Error::Format(format!("record {i}: unknown attack kind {k}"))),
        };
        let label_bus = r.u32("label bus")?;
        let ng = r.u16("gain count")? as u64;
        let ng = r.count(ng, 16, "gain entries")?;
        let mut gains = Vec::with_capacity(ng);
        for _ in 0..ng {
            let load_bus = r.u32("gain bus")?;
            let gen_ordinal = r.u32("gain generator")? as usize;
            let gain_pu = r.f64("gain")?;
            gains.push(GainEntry { load_bus, gen_ordinal, gain_pu });
        }
        let ns = r.u16("static count")? as u64;
        let ns = r.count(ns, 12, "static entries")?;
        let mut statics = Vec::with_capacity(ns);
        for _ in 0..ns {
            let load_bus = r.u32("static bus")?;
            let mw = r.f64("static size")?;
            statics.push(StaticEntry { load_bus, mw });
        }
        let t_start = r.f64("window start")?;
        let mut window = PmuWindow::nominal(n_gen, window_len, sample_period);
        window.t_start = t_start;
        let raw = r.take(points * 8, "window")?;
        for (p, c) in raw.chunks_exact(8).enumerate() {
            let f = f32::from_le_bytes(c[..4].try_into().unwrap());
            let a = f32::from_le_bytes(c[4..].try_into().unwrap());
            window.set_deviation(p, 0, f as f64);
            window.set_deviation(p, 1, a as f64);
        }
        samples.push(Sample { window, class, scenario: AttackScenario { kind, label_bus, gains, statics } });
    }
    r.finish()?;
    let ds = Dataset {
        case,
        split,
        class_map,
        n_gen,
        window_len,
        sample_period,
        provenance: Provenance { seed, config },
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes a dataset and returns the SHA-256 of the written bytes.
pub fn serialize(ds: &Dataset, path: &Path) -> Result<String> {
    let bytes = to_bytes(ds)?;
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Reads a dataset and the SHA-256 of its bytes.
pub fn deserialize(path: &Path) -> Result<(Dataset, String)> {
    let bytes = fs::read(path)?;
    let ds = from_bytes(&bytes)?;
    Ok((ds, sha256_hex(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let mut samples = Vec::new();
        for i in 0..4usize {
            let mut w = PmuWindow::nominal(2, 3, 0.02);
            for p in 0..6 {
                w.set_deviation(p, 0, 1e-3 * (i * 6 + p) as f64);
                w.set_deviation(p, 1, -0.01 * p as f64);
            }
            let sc = if i % 2 == 0 {
                AttackScenario::single_point(7 + i as u32 % 2, 1, 0.5, 1.25)
            } else {
                AttackScenario::multi_point(8, 0, 0.3, vec![StaticEntry { load_bus: 7, mw: 2.0 }])
            };
            samples.push(Sample { window: w, class: i % 2, scenario: sc });
        }
        Dataset {
            case: "toy".into(),
            split: Split::Test,
            class_map: vec![7, 8],
            n_gen: 2,
            window_len: 3,
            sample_period: 0.02,
            provenance: Provenance { seed: 42, config: "seed = 42\n".into() },
            samples,
        }
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let ds = toy();
        let a = to_bytes(&ds).unwrap();
        let back = from_bytes(&a).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), a);
        assert_eq!(back.samples.len(), 4);
        assert_eq!(back.samples[1].scenario, ds.samples[1].scenario);
        assert_eq!(back.provenance, ds.provenance);
        for (x, y) in back.samples.iter().zip(&ds.samples) {
            for p in 0..6 {
                assert!((x.window.deviation(p, 0) - y.window.deviation(p, 0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let a = to_bytes(&toy()).unwrap();
        for cut in [0, 3, 10, a.len() / 2, a.len() - 1] {
            assert!(matches!(from_bytes(&a[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
        let mut long = a.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(Error::Format(_))));
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let mut a = to_bytes(&toy()).unwrap();
        // magic, version, case, split, shape, period, class map, seed, config
        let header_end = 4 + 2 + (4 + 3) + 1 + 8 + 8 + (4 + 8) + 8 + (4 + 10) + 8;
        a[header_end - 8..header_end].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(from_bytes(&a), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip_reports_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.gcap");
        let h = serialize(&toy(), &path).unwrap();
        let (ds, h2) = deserialize(&path).unwrap();
        assert_eq!(h, h2);
        assert_eq!(ds.len(), 4);
    }
}
