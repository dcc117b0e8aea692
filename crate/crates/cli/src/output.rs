//! Plain-text exports: CSV tables, summary JSON and gnuplot scripts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// A file produced by a scenario, written relative to its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            contents: self.text,
        }
    }
}

/// Fixed scientific notation so files are stable across platforms.
pub fn sci(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn fixed(x: f64, decimals: usize) -> String {
    format!("{x:.decimals$}")
}

/// Mean over consecutive blocks of `block` samples; a short tail is dropped.
pub fn decimate(values: &[f64], block: usize) -> Vec<f64> {
    values
        .chunks_exact(block.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// Gnuplot script drawing `series` (column pairs of `file`) against column 1.
pub fn gnuplot(
    title: &str,
    file: &str,
    xlabel: &str,
    ylabel: &str,
    columns: &[(usize, &str)],
    logscale: bool,
) -> Artifact {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    if logscale {
        let _ = writeln!(s, "set logscale xy");
    }
    let plots: Vec<String> = columns
        .iter()
        .map(|(c, style)| format!("'{file}' using 1:{c} with {style}"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    Artifact {
        name: format!("{}.gp", file.trim_end_matches(".csv")),
        contents: s,
    }
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[fixed(1.0, 3), sci(2.5)]);
        let a = c.into_artifact("x.csv");
        assert_eq!(a.contents, "a,b\n1.000,2.500000000e0\n");
    }

    #[test]
    fn decimation_drops_tail() {
        assert_eq!(decimate(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0]);
    }
}
