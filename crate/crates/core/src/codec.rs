//! Binary record for [`RkhsCovd`].
//!
//! Little-endian layout:
//!
//! | field        | type         |
//! |--------------|--------------|
//! | magic        | `b"RKCV"`    |
//! | version      | `u32` = 1    |
//! | kernel tag   | `u32`: 0 linear, 1 polynomial, 2 rbf |
//! | kernel a     | `f64`: degree, sigma, or 0 |
//! | kernel b     | `f64`: offset, or 0 |
//! | n, m, r      | `u64` each   |
//! | rho          | `f64`        |
//! | X            | `n*m` `f64`, row-major `n x m` |
//! | W            | `m*r` `f64`, row-major `m x r` |
//! | lambdas      | `r` `f64`    |
//!
//! Unused kernel fields must be `+0.0`, so every accepted record is the
//! unique encoding of its descriptor. The decoder checks the declared sizes
//! against the buffer length before allocating anything.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rkhs::RkhsCovd;
use crate::spd::ObservationSet;

pub const MAGIC: &[u8; 4] = b"RKCV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 3 * 8 + 8;

pub fn encode_rkhs_covd(d: &RkhsCovd) -> Vec<u8> {
    let x = d.observations().matrix();
    let (n, m, r) = (x.nrows(), x.ncols(), d.rank());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (n * m + m * r + r));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (tag, a, b) = match *d.kernel() {
        KernelSpec::Linear => (0u32, 0.0, 0.0),
        KernelSpec::Polynomial { degree, offset } => (1, f64::from(degree), offset),
        KernelSpec::Rbf { sigma } => (2, sigma, 0.0),
    };
    out.extend_from_slice(&tag.to_le_bytes());
    for v in [a, b] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [n, m, r] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&d.rho().to_le_bytes());
    let push_rows = |out: &mut Vec<u8>, a: &DMatrix<f64>| {
        for i in 0..a.nrows() {
            for v in a.row(i).iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    push_rows(&mut out, x);
    push_rows(&mut out, d.w());
    for v in d.lambdas().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let b: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        b
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    fn row_major(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_row_iterator(rows, cols, (0..rows * cols).map(|_| self.f64()))
    }
}

fn bad(message: impl Into<String>) -> Error {
    Error::Parse {
        context: "descriptor record".into(),
        message: message.into(),
    }
}

pub fn decode_rkhs_covd(buf: &[u8]) -> Result<RkhsCovd> {
    if buf.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", buf.len())));
    }
    let mut c = Cursor { buf, pos: 0 };
    if &c.take::<4>() != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.u32();
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tag = c.u32();
    let (a, b) = (c.f64(), c.f64());
    let unused_zero = |v: f64| v.to_bits() == 0;
    let kernel = match tag {
        0 if unused_zero(a) && unused_zero(b) => KernelSpec::Linear,
        1 => {
            if !(a >= 1.0 && a <= f64::from(u32::MAX) && a.fract() == 0.0) {
                return Err(bad(format!("invalid polynomial degree {a}")));
            }
            KernelSpec::Polynomial {
                degree: a as u32,
                offset: b,
            }
        }
        2 if unused_zero(b) => KernelSpec::Rbf { sigma: a },
        0 | 2 => return Err(bad("unused kernel fields must be zero")),
        t => return Err(bad(format!("unknown kernel tag {t}"))),
    };
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| bad("size overflows usize"));
    let (n, m, r) = (to_usize(c.u64())?, to_usize(c.u64())?, to_usize(c.u64())?);
    let rho = c.f64();
    let count = n
        .checked_mul(m)
        .and_then(|nm| m.checked_mul(r).and_then(|mr| nm.checked_add(mr)))
        .and_then(|s| s.checked_add(r))
        .and_then(|s| s.checked_mul(8))
        .ok_or_else(|| bad("declared sizes overflow"))?;
    if buf.len() - HEADER_LEN != count {
        return Err(bad(format!(
            "payload is {} bytes, header declares {count}",
            buf.len() - HEADER_LEN
        )));
    }
    let x = c.row_major(n, m);
    let w = c.row_major(m, r);
    let lambdas = DVector::from_iterator(r, (0..r).map(|_| c.f64()));
    let x = ObservationSet::new(x).map_err(|e| bad(e.to_string()))?;
    RkhsCovd::from_parts(kernel, x, w, lambdas, rho).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkhs::fit_rkhs_covd;

    fn sample(kernel: KernelSpec) -> RkhsCovd {
        let x = ObservationSet::new(DMatrix::from_fn(2, 9, |i, j| ((i + 1) * (j + 3)) as f64 * 0.37 % 1.3)).unwrap();
        fit_rkhs_covd(&kernel, &x, 3, 1e-4).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for k in [
            KernelSpec::Linear,
            KernelSpec::Polynomial { degree: 3, offset: 0.5 },
            KernelSpec::Rbf { sigma: 0.8 },
        ] {
            let d = sample(k);
            let bytes = encode_rkhs_covd(&d);
            assert_eq!(decode_rkhs_covd(&bytes).unwrap(), d);
        }
    }

    #[test]
    fn rejects_malformed_records() {
        let bytes = encode_rkhs_covd(&sample(KernelSpec::Rbf { sigma: 0.8 }));
        assert!(decode_rkhs_covd(&bytes[..10]).is_err());
        assert!(decode_rkhs_covd(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_rkhs_covd(&bad_magic).is_err());
        let mut huge = bytes.clone();
        huge[28..36].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_rkhs_covd(&huge).is_err());
        let mut stray = bytes.clone();
        stray[20..28].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(decode_rkhs_covd(&stray).is_err());
        let mut nan_rho = bytes;
        nan_rho[52..60].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_rkhs_covd(&nan_rho).is_err());
    }
}
