use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError, GroupKey, Record, Schema};

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema, DatasetError> {
    let file = File::open(path)?;
    let schema: Schema = serde_json::from_reader(file)?;
    schema.validate()?;
    Ok(schema)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DatasetError> {
    read_csv(File::open(path)?, schema)
}

/// Parse a comma-separated table with one header row. Columns not named by
/// the schema are ignored; rows are returned in file order.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DatasetError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DatasetError::Empty);
    }
    let col = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let feature_cols = schema.features.iter().map(|f| col(f)).collect::<Result<Vec<_>, _>>()?;
    let sensitive_cols = schema.sensitive.iter().map(|s| col(s)).collect::<Result<Vec<_>, _>>()?;
    let label_col = col(&schema.label)?;
    let pred_col = schema.prediction.as_deref().map(col).transpose()?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        if row.len() != headers.len() {
            return Err(DatasetError::RowShape {
                row: line,
                expected: headers.len(),
                found: row.len(),
            });
        }
        let cell = |c: usize| -> Result<&str, DatasetError> {
            let v = row[c].trim();
            if v.is_empty() {
                Err(DatasetError::MissingCell {
                    row: line,
                    column: headers[c].trim().to_string(),
                })
            } else {
                Ok(v)
            }
        };
        let mut x = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let raw = cell(c)?;
            let v: f64 = raw.parse().map_err(|_| DatasetError::Parse {
                row: line,
                column: headers[c].trim().to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Parse {
                    row: line,
                    column: headers[c].trim().to_string(),
                    value: raw.to_string(),
                });
            }
            x.push(v);
        }
        let a = GroupKey(
            sensitive_cols
                .iter()
                .map(|&c| cell(c).map(str::to_string))
                .collect::<Result<_, _>>()?,
        );
        let y = parse_binary(cell(label_col)?, line, &headers[label_col])?;
        let y_hat = match pred_col {
            Some(c) => Some(parse_binary(cell(c)?, line, &headers[c])?),
            None => None,
        };
        records.push(Record { id: i, x, a, y, y_hat });
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::new(schema.clone(), records, None)
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<u8, DatasetError> {
    match raw {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(DatasetError::NonBinary {
            row,
            column: column.trim().to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Write the schema's columns in canonical order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<(), DatasetError> {
    let schema = d.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.column_names())?;
    for r in d.records() {
        let mut cells: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        cells.extend(r.a.0.iter().cloned());
        cells.push(r.y.to_string());
        if schema.prediction.is_some() {
            match r.y_hat {
                Some(p) => cells.push(p.to_string()),
                None => {
                    return Err(DatasetError::MissingCell {
                        row: r.id + 1,
                        column: schema.prediction.clone().unwrap_or_default(),
                    })
                }
            }
        }
        wtr.write_record(&cells)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn insurance_schema() -> Schema {
        Schema::new(vec!["income".into(), "fitness".into()], vec!["age".into()], "Y", None).unwrap()
    }

    #[test]
    fn parses_four_row_table() {
        let text = "income,fitness,age,Y\n0.1,0.9,young,1\n0.5,0.2,elderly,0\n0.7,0.7,young,1\n0.3,0.1,elderly,0\n";
        let d = read_csv(text.as_bytes(), &insurance_schema()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.k(), 2);
        assert_eq!(d.records()[1].x, vec![0.5, 0.2]);
        assert_eq!(d.records()[1].a, GroupKey::new(["elderly"]));
        assert_eq!(d.group_keys().len(), 2);
    }

    #[test]
    fn non_binary_label_names_row() {
        let text = "income,fitness,age,Y\n0.1,0.9,young,1\n0.5,0.2,elderly,2\n";
        let err = read_csv(text.as_bytes(), &insurance_schema()).unwrap_err();
        match err {
            DatasetError::NonBinary { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "Y");
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_column_and_bad_cells() {
        let text = "income,age,Y\n0.1,young,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &insurance_schema()),
            Err(DatasetError::MissingColumn(c)) if c == "fitness"
        ));
        let text = "income,fitness,age,Y\n0.1,abc,young,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &insurance_schema()),
            Err(DatasetError::Parse { row: 1, .. })
        ));
        let text = "income,fitness,age,Y\n0.1,,young,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &insurance_schema()),
            Err(DatasetError::MissingCell { row: 1, .. })
        ));
        let text = "income,fitness,age,Y\n0.1,0.3,young\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &insurance_schema()),
            Err(DatasetError::RowShape { row: 1, .. })
        ));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(
            read_csv("".as_bytes(), &insurance_schema()),
            Err(DatasetError::Empty) | Err(DatasetError::MissingColumn(_))
        ));
        assert!(matches!(
            read_csv("income,fitness,age,Y\n".as_bytes(), &insurance_schema()),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn prediction_column_is_parsed() {
        let schema = Schema::new(
            vec!["income".into(), "fitness".into()],
            vec!["age".into()],
            "Y",
            Some("pred".into()),
        )
        .unwrap();
        let text = "pred,income,fitness,age,Y,extra\n1,0.1,0.9,young,1,zzz\n0,0.5,0.2,elderly,0,q\n";
        let d = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.records()[0].y_hat, Some(1));
        assert_eq!(d.records()[1].y_hat, Some(0));
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            (-1e6f64..1e6, any::<f64>().prop_filter("finite", |v| v.is_finite()), 0usize..3, 0u8..2, 0u8..2),
            1..40,
        )) {
            let schema = Schema::new(
                vec!["f1".into(), "f2".into()],
                vec!["grp".into()],
                "label",
                Some("pred".into()),
            ).unwrap();
            let names = ["alpha", "beta", "gamma"];
            let records: Vec<Record> = rows.iter().enumerate().map(|(i, (a, b, g, y, p))| Record {
                id: i,
                x: vec![*a, *b],
                a: GroupKey::new([names[*g]]),
                y: *y,
                y_hat: Some(*p),
            }).collect();
            let d = Dataset::new(schema.clone(), records, None).unwrap();
            let mut buf = Vec::new();
            write_csv(&d, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), &schema).unwrap();
            prop_assert_eq!(back.len(), d.len());
            prop_assert_eq!(back.records(), d.records());
        }
    }
}
