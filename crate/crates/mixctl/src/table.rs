use mixlaw::runstore::format_float;

/// Accumulates CSV text row by row.
#[derive(Debug, Default)]
pub struct Table {
    text: String,
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        let mut t = Table::default();
        t.row(header);
        t
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        let line: Vec<String> = fields.iter().map(|f| escape(f.as_ref())).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn num(x: f64) -> String {
    format_float(x)
}

pub fn prefixed(prefix: &str, names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

pub fn nums(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| num(*x)).collect()
}
