use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

/// Rectangular table of mixed cells with a named target column and an
/// optional partition-key column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    target: String,
    key: Option<String>,
}

impl LabeledTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>, target: &str, key: Option<&str>) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::Data(format!(
                "row {bad} has {} cells, table has {} columns",
                rows[bad].len(),
                columns.len()
            )));
        }
        let table = LabeledTable {
            columns,
            rows,
            target: target.to_string(),
            key: key.map(str::to_string),
        };
        table.column_index(target)?;
        if let Some(k) = key {
            table.column_index(k)?;
        }
        Ok(table)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn key(&self) -> Option<&str> {
        self.key.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("no column named {name:?}")))
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[idx]
                    .as_num()
                    .ok_or_else(|| Error::Data(format!("row {r}: column {name:?} is not numeric")))
            })
            .collect()
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<&str>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| match &row[idx] {
                Cell::Text(s) => Ok(s.as_str()),
                Cell::Num(_) | Cell::Missing => Err(Error::Data(format!("row {r}: column {name:?} is not text"))),
            })
            .collect()
    }

    pub fn targets(&self) -> Result<Vec<f64>> {
        self.numeric_column(&self.target)
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabeledTable {
        LabeledTable {
            columns: self.columns.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            target: self.target.clone(),
            key: self.key.clone(),
        }
    }

    /// Splits the table by the distinct values of `column`, in ascending key
    /// order. The key column is removed from each part.
    pub fn partition_by(&self, column: &str) -> Result<Vec<(String, LabeledTable)>> {
        let idx = self.column_index(column)?;
        if column == self.target {
            return Err(Error::Config("cannot partition on the target column".into()));
        }
        let mut groups: BTreeMap<String, Vec<Vec<Cell>>> = BTreeMap::new();
        for (r, row) in self.rows.iter().enumerate() {
            let key = match &row[idx] {
                Cell::Text(s) => s.clone(),
                Cell::Num(v) => format!("{v}"),
                Cell::Missing => return Err(Error::Config(format!("row {r} has no {column:?} key"))),
            };
            let mut rest = row.clone();
            rest.remove(idx);
            groups.entry(key).or_default().push(rest);
        }
        let mut columns = self.columns.clone();
        columns.remove(idx);
        let key = self.key.clone().filter(|k| k != column);
        Ok(groups
            .into_iter()
            .map(|(k, rows)| {
                (
                    k,
                    LabeledTable {
                        columns: columns.clone(),
                        rows,
                        target: self.target.clone(),
                        key: key.clone(),
                    },
                )
            })
            .collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> LabeledTable {
        let rows = vec![
            vec![Cell::Num(1.0), Cell::Text("b".into()), Cell::Num(10.0)],
            vec![Cell::Num(2.0), Cell::Text("a".into()), Cell::Num(20.0)],
            vec![Cell::Num(3.0), Cell::Text("b".into()), Cell::Num(30.0)],
        ];
        LabeledTable::new(vec!["x".into(), "grp".into(), "y".into()], rows, "y", Some("grp")).unwrap()
    }

    #[test]
    fn partition_sizes_and_key_removal() {
        let parts = table().partition_by("grp").unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].0, "a");
        assert_eq!(parts[1].1.len(), 2);
        assert_eq!(parts.iter().map(|(_, t)| t.len()).sum::<usize>(), 3);
        assert!(parts[0].1.column_index("grp").is_err());
        assert_eq!(parts[1].1.targets().unwrap(), vec![10.0, 30.0]);
    }

    #[test]
    fn single_key_gives_whole_table() {
        let rows = vec![vec![Cell::Text("k".into()), Cell::Num(1.0)]; 4];
        let t = LabeledTable::new(vec!["g".into(), "y".into()], rows, "y", None).unwrap();
        let parts = t.partition_by("g").unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].1.len(), 4);
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let rows = vec![vec![Cell::Missing, Cell::Num(1.0)]];
        let t = LabeledTable::new(vec!["g".into(), "y".into()], rows, "y", None).unwrap();
        assert!(matches!(t.partition_by("g"), Err(Error::Config(_))));
    }
}
