use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table has no rows")]
    EmptyTable,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
}

/// Render a table as one bullet line per row.
///
/// The first cell labels the row. A single remaining cell renders as
/// `• label: value`; several render as `• label: Col: v, Col: v` using the
/// column names. A caption, when present, is the first line.
pub fn linearize_table(table: &TableSpec) -> Result<String, TableError> {
    if table.rows.is_empty() || table.column_names.is_empty() {
        return Err(TableError::EmptyTable);
    }
    let width = table.column_names.len();
    let mut lines = Vec::with_capacity(table.rows.len() + 1);
    if let Some(caption) = table.caption.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
        lines.push(caption.to_string());
    }
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != width {
            return Err(TableError::RaggedRow { row: i, expected: width, found: row.len() });
        }
        let label = row[0].trim();
        let line = match &row[1..] {
            [] => format!("• {label}"),
            [value] => format!("• {label}: {}", value.trim()),
            rest => {
                let cells: Vec<String> = table.column_names[1..]
                    .iter()
                    .zip(rest)
                    .map(|(col, v)| format!("{}: {}", col.trim(), v.trim()))
                    .collect();
                format!("• {label}: {}", cells.join(", "))
            }
        };
        lines.push(line);
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[&str], rows: &[&[&str]]) -> TableSpec {
        TableSpec {
            caption: None,
            column_names: cols.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn two_column_rows() {
        let t = table(
            &["Item", "Amount"],
            &[&["Net income", "$140"], &["Change in net working capital (ΔNWC)", "$18 (increase)"]],
        );
        assert_eq!(
            linearize_table(&t).unwrap(),
            "• Net income: $140\n• Change in net working capital (ΔNWC): $18 (increase)"
        );
    }

    #[test]
    fn wide_rows_name_their_columns() {
        let mut t = table(&["Year", "Revenue", "Cost"], &[&["2023", "$10", "$4"]]);
        t.caption = Some("In millions".into());
        assert_eq!(linearize_table(&t).unwrap(), "In millions\n• 2023: Revenue: $10, Cost: $4");
    }

    #[test]
    fn empty_and_ragged_tables() {
        assert_eq!(linearize_table(&table(&["Item", "Amount"], &[])), Err(TableError::EmptyTable));
        assert!(matches!(
            linearize_table(&table(&["Item", "Amount"], &[&["x"]])),
            Err(TableError::RaggedRow { row: 0, expected: 2, found: 1 })
        ));
    }
}
