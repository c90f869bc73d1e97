//! Aligned two-column rendering of a JSON report.

use serde_json::Value;

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn flatten(path: String, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match v {
        Value::Object(m) if m.is_empty() => out.push((path, "{}".into())),
        Value::Object(m) => {
            for (k, x) in m {
                flatten(join(k), x, out);
            }
        }
        Value::Array(a) => match a.iter().map(scalar).collect::<Option<Vec<_>>>() {
            Some(items) => out.push((path, format!("[{}]", items.join(", ")))),
            None => {
                for (i, x) in a.iter().enumerate() {
                    flatten(format!("{path}[{i}]"), x, out);
                }
            }
        },
        s => out.push((path, scalar(s).unwrap_or_default())),
    }
}

pub fn render(report: &Value) -> String {
    let mut rows = Vec::new();
    flatten(String::new(), report, &mut rows);
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}
