mod common;

use std::io::{Cursor, Write};

use common::adversarial_dump;
use vocabforge::ingest::{
    ingest_file, load_tsv, open_input, parse_sql_dump, write_tsv, GraphAssembler, IngestError, RawRecord, RecordKind,
    Table, TableSchema, TsvKind,
};
use vocabforge_core::Title;

fn parse_all(text: &str, schema: TableSchema) -> Result<Vec<Vec<String>>, IngestError> {
    parse_sql_dump(Cursor::new(text.as_bytes()), schema).map(|r| r.map(|r| r.columns)).collect()
}

#[test]
fn single_tuple_with_all_columns() {
    let got =
        parse_all("INSERT INTO category VALUES (5,'Computer_science',10,2,0);", TableSchema::category().keep_all())
            .unwrap();
    assert_eq!(got, [["5", "Computer_science", "10", "2", "0"]]);
}

#[test]
fn escaped_quote_is_unescaped() {
    let got =
        parse_all(r"INSERT INTO `category` VALUES (7,'O\'Reilly_books',1,0,0);", TableSchema::category()).unwrap();
    assert_eq!(got, [["7", "O'Reilly_books"]]);
    let doubled =
        parse_all("INSERT INTO `category` VALUES (7,'O''Reilly_books',1,0,0);", TableSchema::category()).unwrap();
    assert_eq!(doubled, got);
}

#[test]
fn records_span_statements_in_order() {
    let text = "INSERT INTO category VALUES (1,'A',0,0,0),(2,'B',0,0,0),(3,'C',0,0,0);\n\
                INSERT INTO category VALUES (4,'D',0,0,0),(5,'E',0,0,0);\n";
    let got = parse_all(text, TableSchema::category()).unwrap();
    let ids: Vec<&str> = got.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ids, ["1", "2", "3", "4", "5"]);
}

#[test]
fn other_tables_and_ddl_are_skipped() {
    let text = "CREATE TABLE `category` (`cat_id` int(10), `cat_title` varbinary(255) DEFAULT '');\n\
                INSERT INTO `page` VALUES (1,0,'x;)',0);\n\
                INSERT INTO `category` VALUES (1,'A',0,0,0);\n";
    let mut records = parse_sql_dump(Cursor::new(text.as_bytes()), TableSchema::category());
    let got: Vec<RawRecord> = records.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].kind, RecordKind::Sql(Table::Category));
    assert_eq!(records.skipped_statements(), 2);
}

#[test]
fn adversarial_dumps_parse_exactly() {
    for seed in 0..20 {
        let (dump, want) = adversarial_dump(500, seed);
        let got = parse_all(&dump, TableSchema::category().keep_all()).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(got.len(), want.len(), "seed {seed}");
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_eq!(g, w, "seed {seed}, record {i}");
        }
    }
}

/// Reading through a tiny buffer exercises every lookahead across refills.
#[test]
fn tiny_read_buffer_gives_same_records() {
    let (dump, want) = adversarial_dump(300, 99);
    let reader = std::io::BufReader::with_capacity(1, Cursor::new(dump.into_bytes()));
    let got: Vec<Vec<String>> =
        parse_sql_dump(reader, TableSchema::category().keep_all()).map(|r| r.unwrap().columns).collect();
    assert_eq!(got, want);
}

#[test]
fn malformed_tuple_reports_offset() {
    let text = "INSERT INTO category VALUES (1,'A',0,0,0),(2,'B',0,0,0;\n";
    match parse_all(text, TableSchema::category()) {
        Err(IngestError::Parse { offset, .. }) => assert!(offset >= 42, "offset {offset}"),
        other => panic!("expected parse error, got {other:?}"),
    }
    let unterminated = "INSERT INTO category VALUES (1,'A,0,0,0);\n";
    assert!(matches!(parse_all(unterminated, TableSchema::category()), Err(IngestError::Parse { offset: 31, .. })));
}

#[test]
fn column_count_mismatch_is_schema_error() {
    let text = "INSERT INTO category VALUES (1,'A',0,0,0),(2,'B',0,0);\n";
    match parse_all(text, TableSchema::category()) {
        Err(IngestError::Schema { offset, expected, found, .. }) => {
            assert_eq!((offset, expected, found), (42, 5, 4));
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn records_before_an_error_are_yielded() {
    let text = "INSERT INTO category VALUES (1,'A',0,0,0),(2,'B',0,0);\n";
    let results: Vec<_> = parse_sql_dump(Cursor::new(text.as_bytes()), TableSchema::category()).collect();
    assert_eq!(results.len(), 2);
    assert!(results[0].is_ok() && results[1].is_err());
}

#[test]
fn tsv_skips_comments_blank_lines_and_crlf() {
    let text = "# child\tparent\n\nA\tB\r\nC\tD\n";
    let got: Vec<RawRecord> = load_tsv(Cursor::new(text), TsvKind::CatEdges).collect::<Result<_, _>>().unwrap();
    let cols: Vec<&[String]> = got.iter().map(|r| r.columns.as_slice()).collect();
    assert_eq!(cols, [["A", "B"], ["C", "D"]]);
}

#[test]
fn tsv_wrong_field_count_reports_line() {
    let text = "A\tB\n# comment\nC\tD\tE\n";
    let err = load_tsv(Cursor::new(text), TsvKind::CatEdges).collect::<Result<Vec<_>, _>>().unwrap_err();
    assert!(matches!(err, IngestError::Tsv { line: 3, .. }), "{err}");
}

#[test]
fn tsv_round_trip() {
    let text = "1\tAlpha\tcat\n2\tBeta_gamma\tpage\n";
    let records: Vec<RawRecord> = load_tsv(Cursor::new(text), TsvKind::Titles).collect::<Result<_, _>>().unwrap();
    let mut out = Vec::new();
    write_tsv(&mut out, &records).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
    let bad = RawRecord { kind: RecordKind::Tsv(TsvKind::CatEdges), columns: vec!["a\tb".into(), "c".into()] };
    assert!(write_tsv(Vec::new(), [&bad]).is_err());
}

#[test]
fn gzip_input_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let text = "INSERT INTO category VALUES (5,'Computer_science',10,2,0);\n";
    let plain = dir.path().join("category.sql");
    std::fs::write(&plain, text).unwrap();
    let gz = dir.path().join("category.sql.gz");
    let mut enc = flate2::write::GzEncoder::new(std::fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap();
    let read = |p| -> Vec<Vec<String>> {
        parse_sql_dump(open_input(p).unwrap(), TableSchema::category()).map(|r| r.unwrap().columns).collect()
    };
    assert_eq!(read(&plain), read(&gz));
    assert_eq!(read(&gz), [["5", "Computer_science"]]);
}

#[test]
fn assembled_graph_from_sql_tables() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        (
            "category.sql",
            Table::Category,
            "INSERT INTO category VALUES (1,'Computer_science',0,1,0),(2,'Algorithms',0,0,0);",
        ),
        (
            "page.sql",
            Table::Page,
            "INSERT INTO page VALUES (10,14,'Computer_science',0),(11,14,'Algorithms',0),(20,0,'Quicksort',0),\
             (21,0,'Quick_sort',1),(30,6,'Diagram.png',0);",
        ),
        (
            "categorylinks.sql",
            Table::Categorylinks,
            "INSERT INTO categorylinks VALUES (11,'Computer_science','','','','','subcat'),\
             (20,'Algorithms','','','','','page'),(30,'Algorithms','','','','','file');",
        ),
        ("redirect.sql", Table::Redirect, "INSERT INTO redirect VALUES (21,0,'Quicksort','','');"),
    ];
    let mut asm = GraphAssembler::new();
    for (name, table, text) in files {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        ingest_file(&mut asm, &path, RecordKind::Sql(table), 4).unwrap();
    }
    let assembled = asm.finish();
    let title = |s: &str| Title::normalize(s).unwrap();
    let g = &assembled.graph;
    let cs = g.category_id(&title("computer science")).expect("category");
    let algo = g.category_id(&title("algorithms")).expect("category");
    assert_eq!(g.children(cs), [algo]);
    let pages: Vec<&str> = g.pages_of(algo).iter().map(|&p| g.page_title(p).as_str()).collect();
    assert_eq!(pages, ["quicksort"]);
    assert_eq!(assembled.redirects.len(), 1);
    assert_eq!(assembled.redirects[0].0.as_str(), "quick sort");
    assert_eq!(assembled.summary.skipped_file_links, 1);
}
