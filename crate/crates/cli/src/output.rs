use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// CSV sink. Every table starts with `#` comment lines naming the quantity,
/// its formula and units, followed by a single header row.
pub struct Csv {
    out: Box<dyn Write>,
}

impl Csv {
    pub fn open(path: Option<&Path>) -> io::Result<Csv> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Csv { out })
    }

    pub fn comment(&mut self, line: &str) -> io::Result<()> {
        writeln!(self.out, "# {line}")
    }

    pub fn header(&mut self, cols: &[&str]) -> io::Result<()> {
        writeln!(self.out, "{}", cols.join(","))
    }

    pub fn row(&mut self, fields: &[Field]) -> io::Result<()> {
        let s: Vec<String> = fields.iter().map(Field::render).collect();
        writeln!(self.out, "{}", s.join(","))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub enum Field {
    F(f64),
    U(u64),
    S(String),
    Empty,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::F(x) => format!("{x:?}"),
            Field::U(n) => n.to_string(),
            Field::S(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Field {
        Field::F(x)
    }
}

impl From<u64> for Field {
    fn from(n: u64) -> Field {
        Field::U(n)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Field {
        Field::S(s.to_string())
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Field {
        x.map_or(Field::Empty, Field::F)
    }
}

#[macro_export]
macro_rules! row {
    ($csv:expr, $($f:expr),+ $(,)?) => {
        $csv.row(&[$($crate::output::Field::from($f)),+])
    };
}
