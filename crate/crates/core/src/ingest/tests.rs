use std::io::Read;

use proptest::prelude::*;

use super::*;

fn events(text: &str, policy: ErrorPolicy) -> Result<(Vec<RawEvent>, ParseStats), crate::Error> {
    parse_table::<_, RawEvent>(text.as_bytes(), policy)?.collect_all()
}

#[test]
fn minimal_header_single_row() {
    let text = "SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM\n12,211,2101-03-04 05:06:00,88\n";
    let (rows, stats) = events(text, ErrorPolicy::Skip).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(stats.rows_dropped, 0);
    assert_eq!(rows[0].item_id, 211);
    assert_eq!(rows[0].value_num, Some(88.0));
    assert_eq!(rows[0].icustay_id, None);
}

#[test]
fn bad_timestamp_skipped() {
    let text = "SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM\n12,211,not a date,88\n";
    let (rows, stats) = events(text, ErrorPolicy::Skip).unwrap();
    assert!(rows.is_empty());
    assert_eq!(stats.rows_dropped, 1);
    assert_eq!(stats.rows_read, 1);
}

#[test]
fn strict_reports_line_of_short_row() {
    let text = "SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM\n\
                1,211,2101-01-01 00:00:00,80\n\
                2,211,2101-01-01 00:00:00\n\
                3,211,2101-01-01 00:00:00,82\n";
    let mut rdr = parse_table::<_, RawEvent>(text.as_bytes(), ErrorPolicy::Strict).unwrap();
    assert!(rdr.next().unwrap().is_ok());
    match rdr.next().unwrap() {
        Err(crate::Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected malformed row, got {other:?}"),
    }
    assert!(rdr.next().is_none());

    let (rows, stats) = events(text, ErrorPolicy::Skip).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(stats.rows_dropped, 1);
}

#[test]
fn missing_required_column_named() {
    let text = "SUBJECT_ID,CHARTTIME,VALUENUM\n1,2101-01-01 00:00:00,3\n";
    let err = parse_table::<_, RawEvent>(text.as_bytes(), ErrorPolicy::Skip)
        .err()
        .unwrap();
    assert!(err.to_string().contains("ITEMID"), "{err}");
}

#[test]
fn header_case_insensitive() {
    let text = "subject_id,ItemId,charttime,value\n1,211,2101-01-01 00:00:00,ERROR\n";
    let (rows, _) = events(text, ErrorPolicy::Strict).unwrap();
    assert_eq!(rows[0].value_text.as_deref(), Some("ERROR"));
    assert_eq!(rows[0].value_num, None);
}

#[test]
fn row_without_any_value_is_malformed() {
    let text = "SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM,VALUE\n1,211,2101-01-01 00:00:00,,\n";
    let (rows, stats) = events(text, ErrorPolicy::Skip).unwrap();
    assert!(rows.is_empty());
    assert_eq!(stats.rows_dropped, 1);
}

#[test]
fn nonpositive_item_rejected() {
    let text = "SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM\n1,0,2101-01-01 00:00:00,1\n";
    assert!(events(text, ErrorPolicy::Strict).is_err());
}

#[test]
fn parse_numeric_examples() {
    assert_eq!(parse_numeric(Some(7.4), None), Some(7.4));
    assert_eq!(parse_numeric(None, Some("ERROR")), None);
    assert_eq!(parse_numeric(None, Some("98.6")), Some(98.6));
    assert_eq!(parse_numeric(None, None), None);
    assert_eq!(parse_numeric(Some(1.0), Some("2")), Some(1.0));
}

#[test]
fn timestamps() {
    let t = parse_timestamp("2101-03-04 05:06:07").unwrap();
    assert_eq!(format_timestamp(&t), "2101-03-04 05:06:07");
    assert!(parse_timestamp("2101-03-04").is_some());
    assert!(parse_timestamp("03/04/2101").is_none());
}

#[test]
fn admission_and_stay_rows() {
    let text =
        "ROW_ID,SUBJECT_ID,HADM_ID,ADMITTIME,DEATHTIME,ADMISSION_TYPE,HOSPITAL_EXPIRE_FLAG\n\
                1,5,50,2101-01-01 00:00:00,,emergency,0\n";
    let (rows, _) = parse_table::<_, AdmissionRow>(text.as_bytes(), ErrorPolicy::Strict)
        .unwrap()
        .collect_all()
        .unwrap();
    assert_eq!(rows[0].admission_type, "EMERGENCY");
    assert_eq!(rows[0].hospital_expire_flag, Some(false));

    let text = "SUBJECT_ID,HADM_ID,ICUSTAY_ID,INTIME,OUTTIME\n5,50,500,2101-01-01 00:00:00,\n";
    let (rows, _) = parse_table::<_, IcuStayRow>(text.as_bytes(), ErrorPolicy::Strict)
        .unwrap()
        .collect_all()
        .unwrap();
    assert_eq!(rows[0].outtime, None);
}

/// A reader handing out the underlying bytes in fixed-size pieces.
struct Chunked<'a> {
    data: &'a [u8],
    sizes: Vec<usize>,
    next: usize,
}

impl Read for Chunked<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.data.is_empty() {
            return Ok(0);
        }
        let want = self.sizes[self.next % self.sizes.len()].max(1);
        self.next += 1;
        let n = want.min(buf.len()).min(self.data.len());
        buf[..n].copy_from_slice(&self.data[..n]);
        self.data = &self.data[n..];
        Ok(n)
    }
}

fn arb_event_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (1i64..1000, 1i64..300000, 0u32..48, 0.0f64..200.0).prop_map(|(s, i, h, v)| format!(
            "{s},{i},2101-01-0{} {:02}:15:00,{v},",
            1 + h / 24,
            h % 24
        )),
        Just("7,211,garbage,1,".to_string()),
        Just("7,211,2101-01-01 00:00:00,,ERROR".to_string()),
        Just("7,211".to_string()),
    ]
}

proptest! {
    #[test]
    fn chunking_does_not_change_records(
        lines in proptest::collection::vec(arb_event_line(), 0..40),
        sizes in proptest::collection::vec(1usize..17, 1..6),
    ) {
        let text = format!("SUBJECT_ID,ITEMID,CHARTTIME,VALUENUM,VALUE\n{}\n", lines.join("\n"));
        let (whole, whole_stats) = events(&text, ErrorPolicy::Skip).unwrap();
        let reader = Chunked { data: text.as_bytes(), sizes, next: 0 };
        let (parts, part_stats) = parse_table::<_, RawEvent>(reader, ErrorPolicy::Skip)
            .unwrap()
            .collect_all()
            .unwrap();
        prop_assert_eq!(&whole, &parts);
        prop_assert_eq!(whole_stats, part_stats);
        prop_assert_eq!(whole_stats.rows_read, whole_stats.rows_kept + whole_stats.rows_dropped);
    }
}
