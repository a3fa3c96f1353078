//! CSV and key=value outputs. Floats are written with 17 significant
//! digits; every file ends with `# config_hash=<sha256>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Csv {
    header: Vec<String>,
    body: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { header: header.iter().map(|s| s.to_string()).collect(), body: String::new() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn render(&self, hash: &str) -> String {
        format!("{}\n{}# config_hash={hash}\n", self.header.join(","), self.body)
    }

    pub fn write(&self, dir: &Path, name: &str, hash: &str) -> std::io::Result<PathBuf> {
        write_file(dir, name, &self.render(hash))
    }
}

/// Ordered `key=value` summary.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    body: String,
}

impl Summary {
    pub fn put(&mut self, key: &str, v: impl Into<Cell>) {
        let _ = writeln!(self.body, "{key}={}", v.into().render());
    }

    pub fn render(&self, hash: &str) -> String {
        format!("{}# config_hash={hash}\n", self.body)
    }

    pub fn write(&self, dir: &Path, name: &str, hash: &str) -> std::io::Result<PathBuf> {
        write_file(dir, name, &self.render(hash))
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, text)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(vec![0.1.into(), 3usize.into()]);
        assert_eq!(c.render("ff"), "a,b\n1.0000000000000001e-1,3\n# config_hash=ff\n");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [std::f64::consts::PI, 1e-300, -2.5e17, 0.1 + 0.2] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
