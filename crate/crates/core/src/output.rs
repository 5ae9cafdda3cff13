//! CSV artifacts.
//!
//! Numbers are written with 9 significant digits in plain decimal notation
//! where that stays readable, so identical runs give byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lambda::{mhz, to_mhz};
use crate::spectroscopy::Spectrum;

pub const DYNAMICS_HEADER: [&str; 3] = ["t_us", "T_12", "T_21"];
pub const SPECTRUM_HEADER: [&str; 3] = ["delta_MHz", "T_ss_12", "T_ss_21"];

/// Formats `x` with 9 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // 9.9999999995 rounds up into one more integer digit
        let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
        let leading_zeros = if exp < 0 { (-exp) as usize } else { 0 };
        if decimals > 0 && digits > 9 + leading_zeros {
            return format!("{x:.prec$}", prec = decimals - 1);
        }
        s
    } else {
        format!("{x:.8e}")
    }
}

/// A header row and string-formatted data rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| fmt_sig(v)).collect());
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

/// Dynamics table from two traces sampled on the same grid (seconds).
pub fn dynamics_table(times: &[f64], t12: &[f64], t21: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&DYNAMICS_HEADER);
    for i in 0..times.len() {
        t.push_numbers(&[times[i] * 1e6, t12[i], t21[i]]);
    }
    t
}

/// Spectrum table; detunings in rad/s.
pub fn spectrum_table(detunings: &[f64], t12: &[f64], t21: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&SPECTRUM_HEADER);
    for i in 0..detunings.len() {
        t.push_numbers(&[to_mhz(detunings[i]), t12[i], t21[i]]);
    }
    t
}

#[derive(Debug, Deserialize)]
struct SpectrumRow {
    #[serde(rename = "delta_MHz")]
    delta_mhz: f64,
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "sigma_T", default)]
    sigma_t: Option<f64>,
}

/// Reads a measured spectrum with columns `delta_MHz,T[,sigma_T]`.
pub fn read_spectrum<R: Read>(r: R) -> Result<Spectrum> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    for need in ["delta_MHz", "T"] {
        if !headers.iter().any(|h| h == need) {
            return Err(Error::FitInput(format!("missing column `{need}`")));
        }
    }
    let has_sigma = headers.iter().any(|h| h == "sigma_T");
    let (mut d, mut t, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for row in rd.deserialize() {
        let row: SpectrumRow = row?;
        d.push(mhz(row.delta_mhz));
        t.push(row.t);
        if has_sigma {
            s.push(row.sigma_t.ok_or_else(|| Error::FitInput("sigma_T column has an empty cell".into()))?);
        }
    }
    Spectrum::new(d, t, has_sigma.then_some(s))
}

pub fn read_spectrum_path(path: &Path) -> Result<Spectrum> {
    read_spectrum(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(2.262134567891), "2.26213457");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1.00000000");
        assert_eq!(fmt_sig(-0.0012345678912), "-0.00123456789");
        assert_eq!(fmt_sig(35.71), "35.7100000");
        assert_eq!(fmt_sig(9.9999999999), "10.0000000");
        assert_eq!(fmt_sig(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_sig(1.5e-9), "1.50000000e-9");
        for x in [0.1, 1.0 / 3.0, 123.456, -7.77e-4, 6.02e23] {
            assert_relative_eq!(fmt_sig(x).parse::<f64>().unwrap(), x, max_relative = 5e-9);
        }
    }

    #[test]
    fn empty_trace_writes_header_only() {
        let t = dynamics_table(&[], &[], &[]);
        assert_eq!(t.to_string().unwrap(), "t_us,T_12,T_21\n");
    }

    #[test]
    fn dynamics_rows() {
        let t = dynamics_table(&[0.0, 1e-6], &[1.0, 2.5], &[1.0, 1.0]);
        assert_eq!(
            t.to_string().unwrap(),
            "t_us,T_12,T_21\n0,1.00000000,1.00000000\n1.00000000,2.50000000,1.00000000\n"
        );
    }

    #[test]
    fn spectrum_round_trip() {
        let csv = "delta_MHz,T,sigma_T\n-1.0,0.9,0.01\n0.0,0.5,0.02\n1.0,0.9,0.01\n";
        let s = read_spectrum(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_relative_eq!(s.detunings[2], mhz(1.0));
        assert_eq!(s.sigma.as_ref().unwrap()[1], 0.02);
        let s = read_spectrum("delta_MHz,T\n0,1\n1,1\n".as_bytes()).unwrap();
        assert!(s.sigma.is_none());
        assert!(read_spectrum("d,T\n0,1\n".as_bytes()).is_err());
        assert!(read_spectrum("delta_MHz,T\n1,1\n0,1\n".as_bytes()).is_err());
    }
}
