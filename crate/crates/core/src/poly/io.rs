//! Plain-text polynomial format.
//!
//! ```text
//! # poly n=1 J=4 degree_cap=5 fourier_cap=6
//! # k|alpha|beta|gamma|re|im
//! |1:1||| 1e0|0e0
//! ```
//!
//! Each term line is `k|alpha|beta|gamma|re|im`. The four multi-indices are
//! comma separated sparse lists of `pos:value` with 1-based positions; an
//! empty field means all zeros. Lines starting with `#` are comments except
//! the first header line, which carries the dimensions and caps.
//! Derivatives with respect to the parameters are not written.

use std::fmt::Write as _;

use num_complex::Complex64;
use smallvec::SmallVec;

use super::{Caps, MonomialKey, PolyError, PolyHamiltonian, SparseExps};

impl PolyHamiltonian {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let caps = self.caps();
        let _ = writeln!(s, "# poly n={} J={} degree_cap={} fourier_cap={}", self.n(), self.j(), caps.degree, caps.fourier);
        let _ = writeln!(s, "# k|alpha|beta|gamma|re|im");
        for (k, c) in self.iter() {
            let _ = writeln!(s, "{}|{:e}|{:e}", k, c.value.re, c.value.im);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PolyError> {
        let mut lines = text.lines().enumerate();
        let (n, j, caps) = loop {
            let Some((ln, line)) = lines.next() else {
                return Err(PolyError::Parse { line: 0, msg: "missing header".into() });
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            break parse_header(line).ok_or(PolyError::Parse { line: ln + 1, msg: "bad header".into() })?;
        };
        let mut p = PolyHamiltonian::new(n, j, caps);
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| PolyError::Parse { line: ln + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 6 {
                return Err(err("expected 6 fields"));
            }
            let k = dense::<i16>(fields[0], n).map_err(|m| err(&m))?;
            let alpha = dense::<u8>(fields[1], n).map_err(|m| err(&m))?;
            let beta = sparse(fields[2], j).map_err(|m| err(&m))?;
            let gamma = sparse(fields[3], j).map_err(|m| err(&m))?;
            let re: f64 = fields[4].trim().parse().map_err(|_| err("bad real part"))?;
            let im: f64 = fields[5].trim().parse().map_err(|_| err("bad imaginary part"))?;
            let key = MonomialKey::from_sparse(k, alpha, beta, gamma);
            if !p.add_value(key, Complex64::new(re, im)) {
                return Err(err("term exceeds the caps in the header"));
            }
        }
        Ok(p)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize, Caps)> {
    let body = line.strip_prefix('#')?.trim().strip_prefix("poly")?;
    let (mut n, mut j, mut d, mut kc) = (None, None, None, None);
    for tok in body.split_whitespace() {
        let (name, val) = tok.split_once('=')?;
        let v: u32 = val.parse().ok()?;
        match name {
            "n" => n = Some(v as usize),
            "J" => j = Some(v as usize),
            "degree_cap" => d = Some(v),
            "fourier_cap" => kc = Some(v),
            _ => return None,
        }
    }
    Some((n?, j?, Caps::new(d?, kc?)))
}

fn pairs(field: &str) -> Result<Vec<(usize, i64)>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|t| {
            let (p, v) = t.split_once(':').ok_or_else(|| format!("bad entry {t:?}"))?;
            let p: usize = p.trim().parse().map_err(|_| format!("bad position {p:?}"))?;
            let v: i64 = v.trim().parse().map_err(|_| format!("bad value {v:?}"))?;
            if p == 0 {
                return Err("positions are 1-based".into());
            }
            Ok((p - 1, v))
        })
        .collect()
}

fn dense<T: TryFrom<i64> + Default + Copy>(field: &str, len: usize) -> Result<SmallVec<[T; 4]>, String> {
    let mut out: SmallVec<[T; 4]> = SmallVec::from_elem(T::default(), len);
    for (p, v) in pairs(field)? {
        if p >= len {
            return Err(format!("position {} out of range", p + 1));
        }
        out[p] = T::try_from(v).map_err(|_| format!("value {v} out of range"))?;
    }
    Ok(out)
}

fn sparse(field: &str, len: usize) -> Result<SparseExps, String> {
    let mut out = SparseExps::new();
    for (p, v) in pairs(field)? {
        if p >= len {
            return Err(format!("mode {} out of range", p + 1));
        }
        if v <= 0 || v > u8::MAX as i64 {
            return Err(format!("power {v} out of range"));
        }
        out.push((p as u16, v as u8));
    }
    out.sort_unstable();
    if out.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err("repeated mode".into());
    }
    Ok(out)
}
