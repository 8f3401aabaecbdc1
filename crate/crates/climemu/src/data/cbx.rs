//! CBX: a flat little-endian container for scenario datasets.
//!
//! Layout, in order:
//!
//! ```text
//! magic   "CBX1"                         4 bytes
//! header  n_years, n_lat, n_lon, output_mask   4 x u32 LE
//! lat     f64[n_lat]                     degrees, strictly increasing
//! years   i32[n_years]                   strictly increasing
//! co2     f64[n_years]
//! ch4     f64[n_years]
//! so2     f64[n_years * n_lat * n_lon]   year-major, then lat-major
//! bc      f64[n_years * n_lat * n_lon]
//! output  f64[n_years * n_lat * n_lon]   per variable whose mask bit is
//!                                        set, in order tas, dtr, pr, pr90
//! ```
//!
//! Bit i of `output_mask` marks variable i present. Round trips are
//! bit-exact. The dataset name is not stored; readers derive it from the
//! file stem.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Grid, OutputVariable, ScenarioDataset};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const MAGIC: [u8; 4] = *b"CBX1";

pub fn write_cbx(d: &ScenarioDataset, path: &Path) -> Result<()> {
    d.validate()?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    let mut mask = 0u32;
    for var in OutputVariable::ALL {
        if d.outputs.contains_key(&var) {
            mask |= var.mask_bit();
        }
    }
    w.write_u32::<LittleEndian>(d.n_years() as u32)?;
    w.write_u32::<LittleEndian>(d.grid.n_lat as u32)?;
    w.write_u32::<LittleEndian>(d.grid.n_lon as u32)?;
    w.write_u32::<LittleEndian>(mask)?;
    for lat in &d.grid.lat_degrees {
        w.write_f64::<LittleEndian>(*lat)?;
    }
    for year in &d.years {
        w.write_i32::<LittleEndian>(*year)?;
    }
    for v in &d.co2 {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for v in &d.ch4 {
        w.write_f64::<LittleEndian>(*v)?;
    }
    write_f64_slice(&mut w, d.so2.data())?;
    write_f64_slice(&mut w, d.bc.data())?;
    for var in OutputVariable::ALL {
        if let Some(m) = d.outputs.get(&var) {
            write_f64_slice(&mut w, m.data())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cbx(path: &Path) -> Result<ScenarioDataset> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| truncated(e, "magic"))?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }

    let n_years = read_u32(&mut r, "n_years")? as usize;
    let n_lat = read_u32(&mut r, "n_lat")? as usize;
    let n_lon = read_u32(&mut r, "n_lon")? as usize;
    let mask = read_u32(&mut r, "output_mask")?;
    if n_years == 0 || n_lat == 0 || n_lon == 0 {
        return Err(Error::InvalidHeader(format!(
            "zero dimension in header ({n_years} years, {n_lat}x{n_lon} grid)"
        )));
    }
    if mask >= 16 {
        return Err(Error::InvalidHeader(format!(
            "output mask {mask:#x} has unknown bits set"
        )));
    }
    let cells = n_lat
        .checked_mul(n_lon)
        .filter(|c| n_years.checked_mul(*c).is_some_and(|t| t < (1 << 31)))
        .ok_or_else(|| Error::InvalidHeader("grid size overflows".into()))?;

    let lat_degrees = read_f64_vec(&mut r, n_lat, "lat_degrees")?;
    let mut years = Vec::with_capacity(n_years);
    for _ in 0..n_years {
        years.push(
            r.read_i32::<LittleEndian>()
                .map_err(|e| truncated(e, "years"))?,
        );
    }
    let co2 = read_f64_vec(&mut r, n_years, "co2")?;
    let ch4 = read_f64_vec(&mut r, n_years, "ch4")?;
    let so2 = read_field(&mut r, n_years, cells, "so2")?;
    let bc = read_field(&mut r, n_years, cells, "bc")?;

    let mut outputs = BTreeMap::new();
    for var in OutputVariable::ALL {
        if mask & var.mask_bit() != 0 {
            outputs.insert(var, read_field(&mut r, n_years, cells, var.name())?);
        }
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::InvalidHeader("trailing bytes after payload".into()));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let dataset = ScenarioDataset {
        name,
        years,
        grid: Grid {
            n_lat,
            n_lon,
            lat_degrees,
        },
        co2,
        ch4,
        so2,
        bc,
        outputs,
    };
    dataset
        .validate()
        .map_err(|e| Error::InvalidHeader(e.to_string()))?;
    Ok(dataset)
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::TruncatedFile(format!("while reading {what}"))
    } else {
        Error::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    r.read_u32::<LittleEndian>().map_err(|e| truncated(e, what))
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)
        .map_err(|e| truncated(e, what))?;
    Ok(out)
}

fn read_field<R: Read>(r: &mut R, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
    let data = read_f64_vec(r, rows * cols, what)?;
    DenseMatrix::new(rows, cols, data)
        .map_err(|_| Error::InvalidHeader(format!("non-finite values in {what}")))
}

fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::synth::{synth_scenarios, SynthOptions};
    use super::*;
    use std::io::Write as IoWrite;

    fn options(seed: u64) -> SynthOptions {
        SynthOptions {
            seed,
            n_scenarios: 1,
            n_years: 4,
            n_lat: 3,
            n_lon: 5,
            noise: 0.3,
            start_year: 2050,
            linear: false,
        }
    }

    fn bits(m: &DenseMatrix) -> Vec<u64> {
        m.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact_across_seeds() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..50u64 {
            let d = synth_scenarios(&options(seed)).unwrap().remove(0);
            let path = dir.path().join(format!("s{seed}.cbx"));
            write_cbx(&d, &path).unwrap();
            let back = read_cbx(&path).unwrap();
            assert_eq!(back.years, d.years);
            assert_eq!(back.grid, d.grid);
            assert_eq!(
                back.co2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                d.co2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(bits(&back.so2), bits(&d.so2));
            assert_eq!(bits(&back.bc), bits(&d.bc));
            assert_eq!(back.outputs.len(), d.outputs.len());
            for (var, m) in &d.outputs {
                assert_eq!(bits(back.outputs.get(var).unwrap()), bits(m));
            }
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cbx");
        std::fs::write(&path, b"XBC1restofheader").unwrap();
        assert!(matches!(read_cbx(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_scenarios(&options(1)).unwrap().remove(0);
        let full = dir.path().join("full.cbx");
        write_cbx(&d, &full).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        // Claim the same header but drop half the payload.
        let cut = dir.path().join("cut.cbx");
        std::fs::File::create(&cut)
            .unwrap()
            .write_all(&bytes[..bytes.len() / 2])
            .unwrap();
        assert!(matches!(read_cbx(&cut), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.cbx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"CBX1");
        bytes.extend_from_slice(&0u32.to_le_bytes()); // n_years = 0
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cbx(&path), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn unknown_mask_bits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.cbx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"CBX1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0x20u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cbx(&path), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_scenarios(&options(2)).unwrap().remove(0);
        let path = dir.path().join("trail.cbx");
        write_cbx(&d, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0xFF);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cbx(&path), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn prediction_only_dataset_round_trips() {
        let mut d = synth_scenarios(&options(3)).unwrap().remove(0);
        d.outputs.clear();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inputs.cbx");
        write_cbx(&d, &path).unwrap();
        let back = read_cbx(&path).unwrap();
        assert!(back.outputs.is_empty());
        assert_eq!(bits(&back.so2), bits(&d.so2));
    }

    #[test]
    fn name_comes_from_file_stem() {
        let d = synth_scenarios(&options(4)).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ssp245_test.cbx");
        write_cbx(&d, &path).unwrap();
        assert_eq!(read_cbx(&path).unwrap().name, "ssp245_test");
    }
}
