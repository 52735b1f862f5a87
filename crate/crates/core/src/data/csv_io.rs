use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset, JumpRecord, Regime};

/// Column order of the dataset CSV file.
pub const CSV_HEADER: [&str; 13] = [
    "athlete_id",
    "event_id",
    "season",
    "regime",
    "qual_rank_nominal",
    "pre_event_rank",
    "round1_distance_points",
    "round1_style_points",
    "round1_total",
    "advanced",
    "wc_points_before",
    "previous_event_rank",
    "home_event",
];

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Reject rows that break record invariants (rank range, regime mapping).
    pub validate: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            validate: true,
        }
    }
}

pub fn load_csv(path: &Path, options: CsvOptions) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    read_csv(file, &path.display().to_string(), options)
}

pub fn read_csv<R: Read>(
    reader: R,
    provenance: &str,
    options: CsvOptions,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let missing: Vec<&str> = CSV_HEADER
        .iter()
        .copied()
        .filter(|c| !index.contains_key(c))
        .collect();
    if !missing.is_empty() {
        return Err(DataError::Schema(format!("missing column(s): {}", missing.join(", "))));
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DataError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |name: &str| row.get(index[name]).unwrap_or("");
        let parse_err = |column: &str, message: String| DataError::Parse {
            row: row_no,
            column: column.to_string(),
            message,
        };
        let required = |name: &str| -> Result<&str, DataError> {
            let v = field(name);
            if v.is_empty() {
                Err(parse_err(name, "value required".into()))
            } else {
                Ok(v)
            }
        };
        let float = |name: &str| -> Result<f64, DataError> {
            let v = required(name)?;
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(name, format!("`{v}` is not a finite number")))
        };
        let rank = |name: &str| -> Result<Option<u32>, DataError> {
            let v = field(name);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<u32>()
                .map(Some)
                .map_err(|_| parse_err(name, format!("`{v}` is not a nonnegative integer")))
        };
        let flag = |name: &str| -> Result<bool, DataError> {
            match required(name)? {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(parse_err(name, format!("`{v}` is not 0 or 1"))),
            }
        };

        let record = JumpRecord {
            athlete_id: required("athlete_id")?.to_string(),
            event_id: required("event_id")?.to_string(),
            season: field("season").to_string(),
            regime: required("regime")?
                .parse::<Regime>()
                .map_err(|m| parse_err("regime", m))?,
            qual_rank_nominal: rank("qual_rank_nominal")?,
            pre_event_rank: rank("pre_event_rank")?
                .ok_or_else(|| parse_err("pre_event_rank", "value required".into()))?,
            round1_distance_points: float("round1_distance_points")?,
            round1_style_points: float("round1_style_points")?,
            round1_total: float("round1_total")?,
            advanced: flag("advanced")?,
            wc_points_before: float("wc_points_before")?,
            previous_event_rank: rank("previous_event_rank")?,
            home_event: flag("home_event")?,
        };
        if options.validate {
            record
                .check()
                .map_err(|message| DataError::Invariant { row: row_no, message })?;
        }
        records.push(record);
    }
    Ok(Dataset::new(records, provenance))
}

fn opt(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_csv_to<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &ds.records {
        w.write_record([
            r.athlete_id.clone(),
            r.event_id.clone(),
            r.season.clone(),
            r.regime.to_string(),
            opt(r.qual_rank_nominal),
            r.pre_event_rank.to_string(),
            r.round1_distance_points.to_string(),
            r.round1_style_points.to_string(),
            r.round1_total.to_string(),
            flag(r.advanced).to_string(),
            r.wc_points_before.to_string(),
            opt(r.previous_event_rank),
            flag(r.home_event).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    write_csv_to(ds, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_record;
    use proptest::prelude::*;

    const HEADER: &str = "athlete_id,event_id,season,regime,qual_rank_nominal,pre_event_rank,round1_distance_points,round1_style_points,round1_total,advanced,wc_points_before,previous_event_rank,home_event\n";

    fn parse(body: &str) -> Result<Dataset, DataError> {
        read_csv(format!("{HEADER}{body}").as_bytes(), "test", CsvOptions::default())
    }

    #[test]
    fn reads_well_formed_file() {
        let ds = parse(
            "a1,e1,2016-17,before,,3,60.5,52,112.5,1,480,2,0\n\
             a2,e1,2016-17,before,20,30,55,50.5,105.5,0,12,,1\n\
             a3,e2,2018-19,after,31,31,58,51,109,1,0,33,0\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[0].qual_rank_nominal, None);
        assert_eq!(ds.records[1].previous_event_rank, None);
        assert_eq!(ds.records[1].qual_rank_nominal, Some(20));
        assert_eq!(ds.records[1].pre_event_rank, 30);
        assert!(ds.records[1].home_event);
    }

    #[test]
    fn rank_out_of_range_names_row() {
        let err = parse(
            "a1,e1,s,after,1,1,60,50,110,1,0,,0\n\
             a2,e1,s,after,51,51,60,50,110,0,0,,0\n",
        )
        .unwrap_err();
        match err {
            DataError::Invariant { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("51"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_values() {
        let err = parse("a1,e1,s,after,1,1,sixty,50,110,1,0,,0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { row: 1, ref column, .. } if column == "round1_distance_points"));
        let err = parse("a1,e1,s,during,1,1,60,50,110,1,0,,0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { ref column, .. } if column == "regime"));
        let err = parse("a1,e1,s,after,1,1,60,50,110,2,0,,0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { ref column, .. } if column == "advanced"));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = read_csv(
            "athlete_id,event_id\na,b\n".as_bytes(),
            "t",
            CsvOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::Schema(ref m) if m.contains("pre_event_rank")));
    }

    fn arb_record() -> impl Strategy<Value = JumpRecord> {
        (
            1u32..=50,
            any::<bool>(),
            0.0f64..200.0,
            0.0f64..=60.0,
            0.0f64..2000.0,
            proptest::option::of(1u32..=60),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(rank, after, dist, style, wc, prev, adv, home)| {
                let regime = if after { Regime::After } else { Regime::Before };
                let mut r = test_record(rank, regime);
                r.round1_distance_points = dist;
                r.round1_style_points = style;
                r.round1_total = dist + style;
                r.wc_points_before = wc;
                r.previous_event_rank = prev;
                r.advanced = adv;
                r.home_event = home;
                r
            })
    }

    proptest! {
        #[test]
        fn csv_roundtrip(records in proptest::collection::vec(arb_record(), 0..20)) {
            let ds = Dataset::new(records, "test");
            let mut buf = Vec::new();
            write_csv_to(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), "test", CsvOptions::default()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
