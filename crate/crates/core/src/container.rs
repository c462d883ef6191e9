//! Binary container for dense and compressed tensors.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "VIEC"
//!      4     4  version (u32, currently 1)
//!      8     1  kind: 0 dense, 1 tucker, 2 tucker+cp, 3 cp
//!      9     1  truncation rule: 0 none, 1 sigma_max, 2 energy
//!     10     6  reserved, zero
//!     16     8  tolerance (f64, 0 when not applicable)
//!     24    24  dims n1, n2, n3 (u64)
//!     48    24  ranks (u64): tucker (r1, r2, r3); cp-type (r, r, r); dense = dims
//!     72    24  auxiliary ranks (u64): tucker ranks of a tucker+cp form, else 0
//!     96     -  payload
//! ```
//!
//! Payload values are complex numbers stored as `(re, im)` pairs of f64.
//! Dense tensors are written in their linear layout (axis 1 fastest); matrices
//! column by column. Tucker forms store the core followed by `U1, U2, U3`,
//! CP-type forms store their three factor matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde::Serialize;

use crate::decomp::{Compressed, CpForm, TruncationRule, TuckerCpForm, TuckerForm};
use crate::error::{Error, Result};
use crate::tensor::{FactorMatrix, Tensor3};

pub const MAGIC: [u8; 4] = *b"VIEC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 96;

/// Anything the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    Dense(Tensor3),
    Tucker(TuckerForm),
    TuckerCp(TuckerCpForm),
    Cp(CpForm),
}

impl StoredTensor {
    fn kind(&self) -> u8 {
        match self {
            StoredTensor::Dense(_) => 0,
            StoredTensor::Tucker(_) => 1,
            StoredTensor::TuckerCp(_) => 2,
            StoredTensor::Cp(_) => 3,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        match self {
            StoredTensor::Dense(t) => t.dims(),
            StoredTensor::Tucker(f) => f.dims(),
            StoredTensor::TuckerCp(f) => f.dims(),
            StoredTensor::Cp(f) => f.dims(),
        }
    }

    pub fn to_dense(&self) -> Result<Tensor3> {
        match self {
            StoredTensor::Dense(t) => Ok(t.clone()),
            StoredTensor::Tucker(f) => f.reconstruct(),
            StoredTensor::TuckerCp(f) => f.reconstruct(),
            StoredTensor::Cp(f) => f.reconstruct(),
        }
    }
}

fn rule_code(rule: Option<TruncationRule>) -> u8 {
    match rule {
        None => 0,
        Some(TruncationRule::SigmaMax) => 1,
        Some(TruncationRule::Energy) => 2,
    }
}

fn rule_from(code: u8) -> Result<Option<TruncationRule>> {
    match code {
        0 => Ok(None),
        1 => Ok(Some(TruncationRule::SigmaMax)),
        2 => Ok(Some(TruncationRule::Energy)),
        other => Err(Error::Format(format!("unknown truncation rule code {other}"))),
    }
}

fn put_u64x3<W: Write>(w: &mut W, v: [usize; 3]) -> Result<()> {
    for x in v {
        w.write_u64::<LittleEndian>(x as u64)?;
    }
    Ok(())
}

fn put_values<W: Write>(w: &mut W, values: impl Iterator<Item = Complex64>) -> Result<()> {
    for z in values {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)?;
    }
    Ok(())
}

fn put_matrix<W: Write>(w: &mut W, m: &FactorMatrix) -> Result<()> {
    put_values(w, m.iter().copied())
}

/// Writes `item` in container format.
pub fn write_container<W: Write>(w: &mut W, item: &StoredTensor) -> Result<()> {
    let (rule, tol, ranks, aux) = match item {
        StoredTensor::Dense(t) => (None, 0.0, t.dims(), [0; 3]),
        StoredTensor::Tucker(f) => (Some(f.rule), f.tol, f.ranks(), [0; 3]),
        StoredTensor::TuckerCp(f) => (Some(f.rule), f.tol, [f.rank(); 3], f.tucker_ranks),
        StoredTensor::Cp(f) => (None, 0.0, [f.rank(); 3], [0; 3]),
    };
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(item.kind())?;
    w.write_u8(rule_code(rule))?;
    w.write_all(&[0u8; 6])?;
    w.write_f64::<LittleEndian>(tol)?;
    put_u64x3(w, item.dims())?;
    put_u64x3(w, ranks)?;
    put_u64x3(w, aux)?;
    match item {
        StoredTensor::Dense(t) => put_values(w, t.data().iter().copied())?,
        StoredTensor::Tucker(f) => {
            put_values(w, f.core.data().iter().copied())?;
            for u in &f.factors {
                put_matrix(w, u)?;
            }
        }
        StoredTensor::TuckerCp(f) => {
            for u in &f.factors {
                put_matrix(w, u)?;
            }
        }
        StoredTensor::Cp(f) => {
            for u in &f.factors {
                put_matrix(w, u)?;
            }
        }
    }
    Ok(())
}

fn get_u64x3<R: Read>(r: &mut R) -> Result<[usize; 3]> {
    let mut v = [0usize; 3];
    for x in &mut v {
        let raw = r.read_u64::<LittleEndian>()?;
        *x = usize::try_from(raw).map_err(|_| Error::Format(format!("size {raw} does not fit in memory")))?;
    }
    Ok(v)
}

/// Guards allocations against corrupted headers.
const MAX_ELEMENTS: usize = 1 << 34;

fn checked_count(parts: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &p in parts {
        n = n
            .checked_mul(p)
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("implausible payload size {parts:?}")))?;
    }
    Ok(n)
}

fn get_values<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

fn get_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<FactorMatrix> {
    let n = checked_count(&[rows, cols])?;
    Ok(FactorMatrix::from_vec(rows, cols, get_values(r, n)?))
}

fn get_factors<R: Read>(r: &mut R, dims: [usize; 3], rank: usize) -> Result<[FactorMatrix; 3]> {
    Ok([
        get_matrix(r, dims[0], rank)?,
        get_matrix(r, dims[1], rank)?,
        get_matrix(r, dims[2], rank)?,
    ])
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("container is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Reads one item written by [`write_container`].
pub fn read_container<R: Read>(r: &mut R) -> Result<StoredTensor> {
    read_inner(r).map_err(|e| match e {
        Error::Io(io) => truncated(io),
        other => other,
    })
}

fn read_inner<R: Read>(r: &mut R) -> Result<StoredTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let kind = r.read_u8()?;
    let rule = rule_from(r.read_u8()?)?;
    let mut reserved = [0u8; 6];
    r.read_exact(&mut reserved)?;
    let tol = r.read_f64::<LittleEndian>()?;
    let dims = get_u64x3(r)?;
    let ranks = get_u64x3(r)?;
    let aux = get_u64x3(r)?;
    let need_rule = || rule.ok_or_else(|| Error::Format("compressed form without truncation rule".into()));
    let same_rank = || {
        if ranks[0] == ranks[1] && ranks[1] == ranks[2] {
            Ok(ranks[0])
        } else {
            Err(Error::Format(format!("cp-type ranks must agree, got {ranks:?}")))
        }
    };
    match kind {
        0 => {
            let n = checked_count(&dims)?;
            Ok(StoredTensor::Dense(Tensor3::from_vec(dims, get_values(r, n)?)?))
        }
        1 => {
            let rule = need_rule()?;
            let n = checked_count(&ranks)?;
            let core = Tensor3::from_vec(ranks, get_values(r, n)?)?;
            let factors = [
                get_matrix(r, dims[0], ranks[0])?,
                get_matrix(r, dims[1], ranks[1])?,
                get_matrix(r, dims[2], ranks[2])?,
            ];
            Ok(StoredTensor::Tucker(TuckerForm { core, factors, rule, tol }))
        }
        2 => {
            let rule = need_rule()?;
            let factors = get_factors(r, dims, same_rank()?)?;
            Ok(StoredTensor::TuckerCp(TuckerCpForm {
                factors,
                tucker_ranks: aux,
                rule,
                tol,
            }))
        }
        3 => {
            let factors = get_factors(r, dims, same_rank()?)?;
            Ok(StoredTensor::Cp(CpForm { factors }))
        }
        other => Err(Error::Format(format!("unknown container kind {other}"))),
    }
}

pub fn save(path: &Path, item: &StoredTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, item)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<StoredTensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_container(&mut r)
}

/// Pretty-printed JSON side file.
pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Raw little-endian `(re, im)` f64 pairs, no header.
pub fn write_raw_volume<W: Write>(w: &mut W, values: &[Complex64]) -> Result<()> {
    put_values(w, values.iter().copied())
}

/// Reads `count` raw `(re, im)` pairs.
pub fn read_raw_volume<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    get_values(r, count).map_err(|e| match e {
        Error::Io(io) => truncated(io),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{hosvd, tucker_cp};
    use crate::tensor::tests::random_tensor;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_trip(item: &StoredTensor) -> StoredTensor {
        let mut buf = Vec::new();
        write_container(&mut buf, item).unwrap();
        read_container(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn header_layout() {
        let t = Tensor3::zeros([2, 3, 1]);
        let mut buf = Vec::new();
        write_container(&mut buf, &StoredTensor::Dense(t)).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 6 * 16);
        assert_eq!(&buf[0..4], b"VIEC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf[8], 0);
        assert_eq!(u64::from_le_bytes(buf[32..40].try_into().unwrap()), 3);
    }

    #[test]
    fn compressed_forms_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, [5, 4, 3]);
        let h = hosvd(&t, 1e-3, TruncationRule::SigmaMax).unwrap();
        let item = StoredTensor::Tucker(h);
        assert_eq!(round_trip(&item), item);
        let tc = tucker_cp(&t, 1e-6, 50).unwrap().form;
        let item = StoredTensor::TuckerCp(tc);
        let back = round_trip(&item);
        assert_eq!(back, item);
        let cp = CpForm {
            factors: match &item {
                StoredTensor::TuckerCp(f) => f.factors.clone(),
                _ => unreachable!(),
            },
        };
        let item = StoredTensor::Cp(cp);
        assert_eq!(round_trip(&item), item);
        assert_eq!(item.dims(), [5, 4, 3]);
    }

    #[test]
    fn file_round_trip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let item = StoredTensor::Dense(random_tensor(&mut rng, [3, 3, 2]));
        let path = dir.path().join("t.viec");
        save(&path, &item).unwrap();
        assert_eq!(load(&path).unwrap(), item);
        let mpath = dir.path().join("t.json");
        write_manifest(&mpath, &serde_json::json!({"label": "G"})).unwrap();
        let text = std::fs::read_to_string(&mpath).unwrap();
        assert!(text.contains("\"label\""));
    }

    #[test]
    fn rejects_bad_input() {
        let item = StoredTensor::Dense(Tensor3::zeros([2, 2, 2]));
        let mut buf = Vec::new();
        write_container(&mut buf, &item).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_container(&mut bad.as_slice()), Err(Error::Format(_))));

        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_container(&mut bad.as_slice()), Err(Error::Format(_))));

        let mut bad = buf.clone();
        bad[8] = 7;
        assert!(matches!(read_container(&mut bad.as_slice()), Err(Error::Format(_))));

        let short = &buf[..buf.len() - 3];
        match read_container(&mut &short[..]) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated")),
            other => panic!("{other:?}"),
        }

        let mut huge = buf.clone();
        huge[24..32].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_container(&mut huge.as_slice()).is_err());
    }

    #[test]
    fn raw_volume_round_trip() {
        let v = vec![Complex64::new(1.5, -2.0), Complex64::new(0.0, 3.25)];
        let mut buf = Vec::new();
        write_raw_volume(&mut buf, &v).unwrap();
        assert_eq!(buf.len(), 32);
        assert_eq!(read_raw_volume(&mut buf.as_slice(), 2).unwrap(), v);
        assert!(read_raw_volume(&mut &buf[..20], 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dense_round_trip(n1 in 1usize..5, n2 in 1usize..5, n3 in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let item = StoredTensor::Dense(random_tensor(&mut rng, [n1, n2, n3]));
            prop_assert_eq!(round_trip(&item), item);
        }
    }
}
