//! Minimal CSV layer shared by all emitters: a `#`-prefixed comment block
//! recording the run, one header row, comma-separated data rows. Every file
//! written here parses back with [`Table::parse`] (round-trip property).

/// An in-memory CSV table: comment lines (without the `# ` prefix), column
/// names, and string cells. Empty cells encode absent values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            comments: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        assert_eq!(
            cells.len(),
            self.columns.len(),
            "row width does not match header"
        );
        self.rows.push(cells);
    }

    /// Serialize with a trailing newline. Comment lines come first, each
    /// prefixed `# `, then the header, then the rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse text produced by [`Table::to_csv`] (or any comment-annotated
    /// CSV with a fixed column count). Ragged rows are an error.
    pub fn parse(text: &str) -> Result<Table, String> {
        let mut comments = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                comments.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
                continue;
            }
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            match &columns {
                None => columns = Some(cells),
                Some(cols) => {
                    if cells.len() != cols.len() {
                        return Err(format!(
                            "line {}: expected {} cells, got {}",
                            idx + 1,
                            cols.len(),
                            cells.len()
                        ));
                    }
                    rows.push(cells);
                }
            }
        }
        Ok(Table {
            comments,
            columns: columns.ok_or("no header row found")?,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell as a float; `None` for a missing column, empty cell, or
    /// unparseable text.
    pub fn float(&self, row: usize, name: &str) -> Option<f64> {
        let j = self.column(name)?;
        let cell = self.rows.get(row)?.get(j)?;
        if cell.is_empty() {
            None
        } else {
            cell.parse().ok()
        }
    }
}

/// Shortest round-trip form of a float: plain decimal in a moderate range,
/// exponential outside it. Both forms parse back to the same bits.
pub fn fmt(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs();
    if (1e-4..1e7).contains(&mag) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Empty cell for an absent value.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Error text safe to embed in a CSV cell.
pub fn sanitize(msg: &str) -> String {
    msg.replace(',', ";").replace('\n', " ")
}
