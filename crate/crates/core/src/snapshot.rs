//! Binary form snapshots and chain checkpoints.
//!
//! Form record: magic `VLFM`, format version (u16), n (u8), boundary (u8: 0 free,
//! 1 zero), payload (u8: 0 f64, 1 i64), degree (u8), lower corner (n x i64), upper
//! corner (n x i64), value count (u64), values. All little-endian.
//!
//! Checkpoint: magic `VLCK`, version (u16), config hash (u64), sweep count (u64),
//! RNG counter (u64), record count (u32), then form records.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::Form;
use crate::lattice::{Boundary, Lattice, LatticeSpec};

const FORM_MAGIC: &[u8; 4] = b"VLFM";
const CHECK_MAGIC: &[u8; 4] = b"VLCK";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum FormPayload {
    Real(Form<f64>),
    Int(Form<i64>),
}

fn write_header<W: Write>(w: &mut W, lattice: &Lattice, payload: u8, degree: usize) -> Result<()> {
    let spec = lattice.spec();
    w.write_all(FORM_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[spec.n() as u8, (spec.boundary() == Boundary::Zero) as u8, payload, degree as u8])?;
    for v in spec.lower().iter().chain(spec.upper()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(lattice.count(degree) as u64).to_le_bytes())?;
    Ok(())
}

pub fn write_real<W: Write>(w: &mut W, f: &Form<f64>) -> Result<()> {
    write_header(w, f.lattice(), 0, f.degree())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_int<W: Write>(w: &mut W, f: &Form<i64>) -> Result<()> {
    write_header(w, f.lattice(), 1, f.degree())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_payload<W: Write>(w: &mut W, p: &FormPayload) -> Result<()> {
    match p {
        FormPayload::Real(f) => write_real(w, f),
        FormPayload::Int(f) => write_int(w, f),
    }
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads one form record. With `lattice` given, the header must describe the same box
/// and the form is attached to it; otherwise a new lattice is built from the header.
pub fn read_form<R: Read>(r: &mut R, lattice: Option<&Arc<Lattice>>) -> Result<FormPayload> {
    if &read_exact::<4, _>(r)? != FORM_MAGIC {
        return Err(Error::Snapshot("bad form magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let [n, bnd, payload, degree] = read_exact::<4, _>(r)?;
    let n = n as usize;
    let mut corners = vec![0i64; 2 * n];
    for c in corners.iter_mut() {
        *c = i64::from_le_bytes(read_exact(r)?);
    }
    let boundary = match bnd {
        0 => Boundary::Free,
        1 => Boundary::Zero,
        b => return Err(Error::Snapshot(format!("bad boundary tag {b}"))),
    };
    let spec = LatticeSpec::cuboid(corners[..n].to_vec(), corners[n..].to_vec(), boundary)?;
    let lat = match lattice {
        Some(l) if l.spec() == &spec => l.clone(),
        Some(l) => return Err(Error::Snapshot(format!("snapshot box {spec} does not match {}", l.spec()))),
        None => Lattice::new(spec),
    };
    let degree = degree as usize;
    lat.check_degree(degree)?;
    let count = u64::from_le_bytes(read_exact(r)?) as usize;
    if count != lat.count(degree) {
        return Err(Error::Snapshot(format!("{count} values for {} cells", lat.count(degree))));
    }
    match payload {
        0 => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(f64::from_le_bytes(read_exact(r)?));
            }
            Ok(FormPayload::Real(Form::from_values(&lat, degree, v)?))
        }
        1 => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(i64::from_le_bytes(read_exact(r)?));
            }
            Ok(FormPayload::Int(Form::from_values(&lat, degree, v)?))
        }
        p => Err(Error::Snapshot(format!("bad payload tag {p}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub sweep: u64,
    pub rng_counter: u64,
    pub forms: Vec<FormPayload>,
}

pub fn write_checkpoint<W: Write>(w: &mut W, c: &Checkpoint) -> Result<()> {
    w.write_all(CHECK_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&c.config_hash.to_le_bytes())?;
    w.write_all(&c.sweep.to_le_bytes())?;
    w.write_all(&c.rng_counter.to_le_bytes())?;
    w.write_all(&(c.forms.len() as u32).to_le_bytes())?;
    for f in &c.forms {
        write_payload(w, f)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R, lattice: Option<&Arc<Lattice>>) -> Result<Checkpoint> {
    if &read_exact::<4, _>(r)? != CHECK_MAGIC {
        return Err(Error::Snapshot("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let config_hash = u64::from_le_bytes(read_exact(r)?);
    let sweep = u64::from_le_bytes(read_exact(r)?);
    let rng_counter = u64::from_le_bytes(read_exact(r)?);
    let count = u32::from_le_bytes(read_exact(r)?);
    let mut forms = Vec::new();
    let mut lat = lattice.cloned();
    for _ in 0..count {
        let f = read_form(r, lat.as_ref())?;
        if lat.is_none() {
            lat = Some(match &f {
                FormPayload::Real(g) => g.lattice().clone(),
                FormPayload::Int(g) => g.lattice().clone(),
            });
        }
        forms.push(f);
    }
    Ok(Checkpoint { config_hash, sweep, rng_counter, forms })
}
