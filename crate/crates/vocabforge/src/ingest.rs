//! Raw category-tree inputs: MediaWiki SQL dumps and plain TSV edge lists.
//!
//! Both readers stream. The SQL reader makes a single pass over the bytes,
//! holding at most one tuple in memory, and keeps only the columns a
//! [`TableSchema`] asks for.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vocabforge_core::graph::LoadSummary;
use vocabforge_core::{CategoryGraph, GraphBuilder, Title};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("schema error at byte {offset}: table {table} has {expected} columns, tuple has {found}")]
    Schema { offset: u64, table: String, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// MediaWiki tables the dump reader understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Category,
    Categorylinks,
    Page,
    Redirect,
}

impl Table {
    pub fn name(self) -> &'static str {
        match self {
            Table::Category => "category",
            Table::Categorylinks => "categorylinks",
            Table::Page => "page",
            Table::Redirect => "redirect",
        }
    }
}

/// Plain-text edge and title lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsvKind {
    CatEdges,
    CatPages,
    Titles,
    Redirects,
}

impl TsvKind {
    pub fn fields(self) -> usize {
        match self {
            TsvKind::Titles => 3,
            _ => 2,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            TsvKind::CatEdges => "cat_edges.tsv",
            TsvKind::CatPages => "cat_pages.tsv",
            TsvKind::Titles => "titles.tsv",
            TsvKind::Redirects => "redirects.tsv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sql(Table),
    Tsv(TsvKind),
}

/// One parsed tuple or line. String values are fully unescaped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub kind: RecordKind,
    pub columns: Vec<String>,
}

/// Declared column count of a dump table and the columns kept from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub table: Table,
    pub columns: usize,
    pub keep: Vec<usize>,
}

impl TableSchema {
    /// `cat_id, cat_title, cat_pages, cat_subcats, cat_files`; keeps id and title.
    pub fn category() -> Self {
        TableSchema { table: Table::Category, columns: 5, keep: vec![0, 1] }
    }

    /// `cl_from, cl_to, cl_sortkey, cl_timestamp, cl_sortkey_prefix,
    /// cl_collation, cl_type`; keeps source page id, target title and type.
    pub fn categorylinks() -> Self {
        TableSchema { table: Table::Categorylinks, columns: 7, keep: vec![0, 1, 6] }
    }

    /// Keeps `page_id, page_namespace, page_title, page_is_redirect`. The
    /// column count varies between MediaWiki releases, hence the parameter.
    pub fn page(columns: usize) -> Self {
        TableSchema { table: Table::Page, columns, keep: vec![0, 1, 2, 3] }
    }

    /// `rd_from, rd_namespace, rd_title, rd_interwiki, rd_fragment`.
    pub fn redirect() -> Self {
        TableSchema { table: Table::Redirect, columns: 5, keep: vec![0, 1, 2] }
    }

    pub fn for_table(table: Table, page_columns: usize) -> Self {
        match table {
            Table::Category => Self::category(),
            Table::Categorylinks => Self::categorylinks(),
            Table::Page => Self::page(page_columns),
            Table::Redirect => Self::redirect(),
        }
    }

    /// Keeps every column; used to check the parser against generated tuples.
    pub fn keep_all(mut self) -> Self {
        self.keep = (0..self.columns).collect();
        self
    }
}

/// Opens a file, transparently decompressing gzip (detected by magic bytes).
pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let mut reader = BufReader::with_capacity(1 << 16, File::open(path)?);
    let gz = reader.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if gz {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Byte reader that tracks its absolute offset.
struct Bytes<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> Bytes<R> {
    fn peek(&mut self) -> io::Result<Option<u8>> {
        loop {
            match self.inner.fill_buf() {
                Ok(buf) => return Ok(buf.first().copied()),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
    }

    fn next(&mut self) -> io::Result<Option<u8>> {
        let b = self.peek()?;
        if b.is_some() {
            self.inner.consume(1);
            self.offset += 1;
        }
        Ok(b)
    }

    fn skip_whitespace(&mut self) -> io::Result<()> {
        while let Some(b) = self.peek()? {
            if !b.is_ascii_whitespace() {
                break;
            }
            self.next()?;
        }
        Ok(())
    }
}

enum Head {
    Insert,
    Eof,
}

/// Longest statement prefix retained while looking for `INSERT INTO name`.
const HEAD_LIMIT: usize = 4096;

/// Streaming reader over the `INSERT` tuples of one table in a SQL dump.
///
/// Statements for other tables, DDL, `SET`/`LOCK` lines and comments are
/// skipped; quotes are honored while skipping so a `;` inside a string does
/// not end a statement.
pub struct SqlRecords<R> {
    src: Bytes<R>,
    schema: TableSchema,
    in_values: bool,
    pending_open: Option<u64>,
    failed: bool,
    skipped_statements: usize,
}

pub fn parse_sql_dump<R: BufRead>(reader: R, schema: TableSchema) -> SqlRecords<R> {
    SqlRecords {
        src: Bytes { inner: reader, offset: 0 },
        schema,
        in_values: false,
        pending_open: None,
        failed: false,
        skipped_statements: 0,
    }
}

impl<R: BufRead> SqlRecords<R> {
    pub fn skipped_statements(&self) -> usize {
        self.skipped_statements
    }

    pub fn offset(&self) -> u64 {
        self.src.offset
    }

    fn parse_error(&self, offset: u64, message: impl Into<String>) -> IngestError {
        IngestError::Parse { offset, message: message.into() }
    }

    /// Reads up to the first tuple of the next `INSERT` for our table.
    fn statement_head(&mut self) -> Result<Head, IngestError> {
        loop {
            self.src.skip_whitespace()?;
            let Some(first) = self.src.peek()? else { return Ok(Head::Eof) };
            if (first == b'-' || first == b'/' || first == b'#') && self.skip_comment()? {
                continue;
            }
            let mut head: Vec<u8> = Vec::new();
            let mut word: Vec<u8> = Vec::new();
            let mut last_word: Vec<u8> = Vec::new();
            loop {
                let Some(b) = self.src.next()? else {
                    self.skipped_statements += usize::from(!head.is_empty());
                    return Ok(Head::Eof);
                };
                match b {
                    b';' => {
                        self.skipped_statements += 1;
                        break;
                    }
                    b'\'' | b'"' | b'`' => {
                        let at = self.src.offset - 1;
                        let text = self.quoted(b, at)?;
                        if head.len() < HEAD_LIMIT {
                            head.push(b);
                            head.extend_from_slice(text.as_bytes());
                            head.push(b);
                        }
                        word.clear();
                    }
                    b'(' => {
                        if !word.is_empty() {
                            last_word = std::mem::take(&mut word);
                        }
                        if last_word.eq_ignore_ascii_case(b"values") {
                            if insert_target(&head).is_some_and(|t| t.eq_ignore_ascii_case(self.schema.table.name())) {
                                self.in_values = true;
                                self.pending_open = Some(self.src.offset - 1);
                                return Ok(Head::Insert);
                            }
                            self.skip_statement()?;
                            break;
                        }
                        if head.len() < HEAD_LIMIT {
                            head.push(b);
                        }
                    }
                    _ => {
                        if b.is_ascii_alphanumeric() || b == b'_' {
                            word.push(b);
                        } else if !word.is_empty() {
                            last_word = std::mem::take(&mut word);
                        }
                        if head.len() < HEAD_LIMIT {
                            head.push(b);
                        }
                    }
                }
            }
        }
    }

    /// Skips a `--`, `#` or `/* */` comment. Returns false (consuming
    /// nothing) when the bytes do not start a comment.
    fn skip_comment(&mut self) -> Result<bool, IngestError> {
        let start = self.src.offset;
        let first = self.src.peek()?.unwrap_or(0);
        if first == b'#' {
            self.skip_line()?;
            return Ok(true);
        }
        // Two-byte lookahead through the buffer.
        let second = {
            let buf = self.src.inner.fill_buf()?;
            if buf.len() >= 2 {
                Some(buf[1])
            } else {
                None
            }
        };
        let second = match second {
            Some(s) => s,
            None => {
                // Rare: the buffer boundary splits the comment opener.
                self.src.next()?;
                let s = self.src.peek()?.unwrap_or(0);
                return match (first, s) {
                    (b'-', b'-') => self.skip_line().map(|_| true),
                    (b'/', b'*') => self.skip_block(start).map(|_| true),
                    _ => Err(self.parse_error(start, "unexpected byte at statement start")),
                };
            }
        };
        match (first, second) {
            (b'-', b'-') => {
                self.skip_line()?;
                Ok(true)
            }
            (b'/', b'*') => {
                self.src.next()?;
                self.skip_block(start)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn skip_line(&mut self) -> Result<(), IngestError> {
        while let Some(b) = self.src.next()? {
            if b == b'\n' {
                break;
            }
        }
        Ok(())
    }

    /// Called with `/` consumed; consumes through `*/`.
    fn skip_block(&mut self, start: u64) -> Result<(), IngestError> {
        self.src.next()?; // '*'
        let mut prev = 0u8;
        loop {
            let Some(b) = self.src.next()? else {
                return Err(self.parse_error(start, "unterminated comment"));
            };
            if prev == b'*' && b == b'/' {
                return Ok(());
            }
            prev = b;
        }
    }

    /// Skips the rest of a statement up to and including `;`, honoring quotes.
    fn skip_statement(&mut self) -> Result<(), IngestError> {
        self.skipped_statements += 1;
        loop {
            match self.src.next()? {
                None => return Ok(()),
                Some(b';') => return Ok(()),
                Some(q @ (b'\'' | b'"' | b'`')) => {
                    let at = self.src.offset - 1;
                    self.quoted(q, at)?;
                }
                Some(_) => {}
            }
        }
    }

    /// Reads a quoted string whose opening quote is already consumed.
    fn quoted(&mut self, quote: u8, start: u64) -> Result<String, IngestError> {
        let mut out: Vec<u8> = Vec::new();
        loop {
            let Some(b) = self.src.next()? else {
                return Err(self.parse_error(start, "unterminated string"));
            };
            if b == quote {
                if self.src.peek()? == Some(quote) {
                    self.src.next()?;
                    out.push(quote);
                    continue;
                }
                break;
            }
            if b == b'\\' && quote != b'`' {
                let Some(e) = self.src.next()? else {
                    return Err(self.parse_error(start, "unterminated string"));
                };
                match e {
                    b'0' => out.push(0),
                    b'n' => out.push(b'\n'),
                    b't' => out.push(b'\t'),
                    b'r' => out.push(b'\r'),
                    b'b' => out.push(0x08),
                    b'Z' => out.push(0x1a),
                    b'%' | b'_' => {
                        out.push(b'\\');
                        out.push(e);
                    }
                    other => out.push(other),
                }
                continue;
            }
            out.push(b);
        }
        String::from_utf8(out).map_err(|_| self.parse_error(start, "string is not valid UTF-8"))
    }

    /// Parses one `( ... )` tuple starting at the current position.
    fn tuple(&mut self) -> Result<RawRecord, IngestError> {
        self.src.skip_whitespace()?;
        let start = self.src.offset;
        match self.src.next()? {
            Some(b'(') => {}
            Some(_) => return Err(self.parse_error(start, "expected '(' to open a tuple")),
            None => return Err(self.parse_error(start, "unexpected end of input inside INSERT")),
        }
        self.tuple_body(start)
    }

    /// Parses tuple values after the opening parenthesis at `start`.
    fn tuple_body(&mut self, start: u64) -> Result<RawRecord, IngestError> {
        let mut values: Vec<String> = Vec::with_capacity(self.schema.columns);
        loop {
            self.src.skip_whitespace()?;
            let value_start = self.src.offset;
            let value = match self.src.peek()? {
                None => return Err(self.parse_error(start, "unbalanced parenthesis: tuple never closed")),
                Some(q @ (b'\'' | b'"')) => {
                    self.src.next()?;
                    self.quoted(q, value_start)?
                }
                Some(_) => {
                    let mut raw = Vec::new();
                    while let Some(b) = self.src.peek()? {
                        if b == b',' || b == b')' || b.is_ascii_whitespace() {
                            break;
                        }
                        if b == b'(' || b == b'\'' || b == b'"' || b == b';' {
                            return Err(self.parse_error(self.src.offset, "unexpected byte inside value"));
                        }
                        raw.push(b);
                        self.src.next()?;
                    }
                    if raw.is_empty() {
                        return Err(self.parse_error(value_start, "empty value"));
                    }
                    String::from_utf8(raw).map_err(|_| self.parse_error(value_start, "value is not valid UTF-8"))?
                }
            };
            values.push(value);
            self.src.skip_whitespace()?;
            match self.src.next()? {
                Some(b',') => continue,
                Some(b')') => break,
                None => return Err(self.parse_error(start, "unbalanced parenthesis: tuple never closed")),
                Some(_) => return Err(self.parse_error(self.src.offset - 1, "expected ',' or ')' after value")),
            }
        }
        if values.len() != self.schema.columns {
            return Err(IngestError::Schema {
                offset: start,
                table: self.schema.table.name().into(),
                expected: self.schema.columns,
                found: values.len(),
            });
        }
        let columns = if self.schema.keep.len() == values.len() {
            values
        } else {
            let mut values: Vec<Option<String>> = values.into_iter().map(Some).collect();
            self.schema.keep.iter().map(|&i| values[i].take().unwrap_or_default()).collect()
        };
        Ok(RawRecord { kind: RecordKind::Sql(self.schema.table), columns })
    }

    fn next_record(&mut self) -> Result<Option<RawRecord>, IngestError> {
        if !self.in_values {
            match self.statement_head()? {
                Head::Eof => return Ok(None),
                Head::Insert => {}
            }
        }
        let rec = match self.pending_open.take() {
            Some(start) => self.tuple_body(start)?,
            None => self.tuple()?,
        };
        self.after_tuple()?;
        Ok(Some(rec))
    }

    /// After a tuple: `,` continues the statement, `;` or end of input ends it.
    fn after_tuple(&mut self) -> Result<(), IngestError> {
        self.src.skip_whitespace()?;
        match self.src.peek()? {
            Some(b',') => {
                self.src.next()?;
            }
            Some(b';') => {
                self.src.next()?;
                self.in_values = false;
            }
            None => self.in_values = false,
            Some(_) => return Err(self.parse_error(self.src.offset, "expected ',' or ';' after tuple")),
        }
        Ok(())
    }
}

impl<R: BufRead> Iterator for SqlRecords<R> {
    type Item = Result<RawRecord, IngestError>;

    /// Yields records in file order; after the first error the stream ends.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Table named by `INSERT [IGNORE] INTO name` (or `REPLACE INTO`), unquoted.
fn insert_target(head: &[u8]) -> Option<String> {
    let text = String::from_utf8_lossy(head);
    let mut words = text.split_whitespace();
    let verb = words.next()?;
    if !verb.eq_ignore_ascii_case("insert") && !verb.eq_ignore_ascii_case("replace") {
        return None;
    }
    let mut next = words.next()?;
    while !next.eq_ignore_ascii_case("into") {
        next = words.next()?;
    }
    let name = words.next()?;
    let name = name.split('(').next().unwrap_or(name);
    let name = name.rsplit('.').next().unwrap_or(name);
    Some(name.trim_matches(|c| c == '`' || c == '"').to_string())
}

/// Streaming reader over a TSV file of one [`TsvKind`].
pub struct TsvRecords<R> {
    reader: R,
    kind: TsvKind,
    line: usize,
    buf: Vec<u8>,
    failed: bool,
}

pub fn load_tsv<R: BufRead>(reader: R, kind: TsvKind) -> TsvRecords<R> {
    TsvRecords { reader, kind, line: 0, buf: Vec::new(), failed: false }
}

impl<R: BufRead> TsvRecords<R> {
    fn next_record(&mut self) -> Result<Option<RawRecord>, IngestError> {
        loop {
            self.buf.clear();
            if self.reader.read_until(b'\n', &mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let line = std::str::from_utf8(&self.buf)
                .map_err(|_| IngestError::Tsv { line: self.line, message: "not valid UTF-8".into() })?;
            let line = line.strip_suffix('\n').unwrap_or(line);
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let columns: Vec<String> = line.split('\t').map(str::to_string).collect();
            if columns.len() != self.kind.fields() {
                return Err(IngestError::Tsv {
                    line: self.line,
                    message: format!("expected {} fields, found {}", self.kind.fields(), columns.len()),
                });
            }
            return Ok(Some(RawRecord { kind: RecordKind::Tsv(self.kind), columns }));
        }
    }
}

impl<R: BufRead> Iterator for TsvRecords<R> {
    type Item = Result<RawRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes records as tab-separated lines. Values must not contain tabs or
/// newlines; such records are rejected rather than silently mangled.
pub fn write_tsv<'a, W: Write>(mut out: W, records: impl IntoIterator<Item = &'a RawRecord>) -> io::Result<()> {
    for r in records {
        if r.columns.iter().any(|c| c.contains(['\t', '\n', '\r'])) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("value not representable in TSV: {:?}", r.columns),
            ));
        }
        out.write_all(r.columns.join("\t").as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Everything ingest produced besides the graph itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub graph: LoadSummary,
    pub redirects: usize,
    pub records: BTreeMap<String, usize>,
    pub unresolved_page_ids: usize,
    pub skipped_file_links: usize,
    pub invalid_redirects: usize,
    pub namespace_mismatches: usize,
}

/// Category graph plus `(alias, canonical)` redirect pairs.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub graph: CategoryGraph,
    pub redirects: Vec<(Title, Title)>,
    pub summary: IngestSummary,
}

const NS_ARTICLE: i64 = 0;
const NS_CATEGORY: i64 = 14;

#[derive(Debug, Clone)]
struct PageRow {
    namespace: i64,
    title: String,
    is_redirect: bool,
}

/// Buffers records from any mix of inputs and resolves them into a graph.
///
/// Dump links reference pages by id, so resolution waits for [`finish`].
/// When no title records (category table, page table or titles TSV) were
/// seen, link endpoints declare themselves.
///
/// [`finish`]: GraphAssembler::finish
#[derive(Debug, Default)]
pub struct GraphAssembler {
    category_titles: Vec<String>,
    page_rows: BTreeMap<u64, PageRow>,
    titles: Vec<(i64, String)>,
    sql_links: Vec<(u64, String, String)>,
    cat_edges: Vec<(String, String)>,
    cat_pages: Vec<(String, String)>,
    sql_redirects: Vec<(u64, i64, String)>,
    tsv_redirects: Vec<(String, String)>,
    summary: IngestSummary,
}

fn parse_int<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("{what} is not an integer: {value:?}"))
}

impl GraphAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends everything `other` buffered, as if its records had been
    /// pushed here after this assembler's own.
    pub fn absorb(&mut self, other: GraphAssembler) {
        self.category_titles.extend(other.category_titles);
        self.page_rows.extend(other.page_rows);
        self.titles.extend(other.titles);
        self.sql_links.extend(other.sql_links);
        self.cat_edges.extend(other.cat_edges);
        self.cat_pages.extend(other.cat_pages);
        self.sql_redirects.extend(other.sql_redirects);
        self.tsv_redirects.extend(other.tsv_redirects);
        for (k, v) in other.summary.records {
            *self.summary.records.entry(k).or_default() += v;
        }
    }

    pub fn push(&mut self, record: RawRecord) -> Result<(), String> {
        let label = match record.kind {
            RecordKind::Sql(t) => t.name().to_string(),
            RecordKind::Tsv(k) => k.file_name().to_string(),
        };
        *self.summary.records.entry(label).or_default() += 1;
        let mut c = record.columns.into_iter();
        let mut col = || c.next().ok_or_else(|| "record is missing a column".to_string());
        match record.kind {
            RecordKind::Sql(Table::Category) => {
                let _id = col()?;
                self.category_titles.push(col()?);
            }
            RecordKind::Sql(Table::Page) => {
                let id = parse_int(&col()?, "page_id")?;
                let namespace = parse_int(&col()?, "page_namespace")?;
                let title = col()?;
                let is_redirect = parse_int::<i64>(&col()?, "page_is_redirect")? != 0;
                self.page_rows.insert(id, PageRow { namespace, title, is_redirect });
            }
            RecordKind::Sql(Table::Categorylinks) => {
                let from = parse_int(&col()?, "cl_from")?;
                let to = col()?;
                let kind = col()?;
                self.sql_links.push((from, to, kind));
            }
            RecordKind::Sql(Table::Redirect) => {
                let from = parse_int(&col()?, "rd_from")?;
                let namespace = parse_int(&col()?, "rd_namespace")?;
                self.sql_redirects.push((from, namespace, col()?));
            }
            RecordKind::Tsv(TsvKind::Titles) => {
                let _id: i64 = parse_int(&col()?, "id")?;
                let title = col()?;
                let namespace = parse_int(&col()?, "namespace")?;
                self.titles.push((namespace, title));
            }
            RecordKind::Tsv(TsvKind::CatEdges) => {
                let child = col()?;
                self.cat_edges.push((child, col()?));
            }
            RecordKind::Tsv(TsvKind::CatPages) => {
                let page = col()?;
                self.cat_pages.push((page, col()?));
            }
            RecordKind::Tsv(TsvKind::Redirects) => {
                let alias = col()?;
                self.tsv_redirects.push((alias, col()?));
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Assembled {
        let has_titles = !self.category_titles.is_empty() || !self.page_rows.is_empty() || !self.titles.is_empty();
        let mut builder = GraphBuilder::new().with_implicit_titles(!has_titles);
        for (namespace, title) in &self.titles {
            match *namespace {
                NS_CATEGORY => {
                    builder.add_category(title);
                }
                NS_ARTICLE => {
                    builder.add_page(title);
                }
                _ => self.summary.namespace_mismatches += 1,
            }
        }
        for title in &self.category_titles {
            builder.add_category(title);
        }
        for row in self.page_rows.values() {
            match row.namespace {
                NS_CATEGORY => {
                    builder.add_category(&row.title);
                }
                NS_ARTICLE if !row.is_redirect => {
                    builder.add_page(&row.title);
                }
                _ => {}
            }
        }
        for (from, to, kind) in &self.sql_links {
            let Some(row) = self.page_rows.get(from) else {
                self.summary.unresolved_page_ids += 1;
                continue;
            };
            match (kind.as_str(), row.namespace) {
                ("subcat", NS_CATEGORY) => builder.add_category_link(&row.title, to),
                ("page", NS_ARTICLE) => builder.add_page_link(&row.title, to),
                ("file", _) => self.summary.skipped_file_links += 1,
                _ => self.summary.namespace_mismatches += 1,
            }
        }
        for (child, parent) in &self.cat_edges {
            builder.add_category_link(child, parent);
        }
        for (page, category) in &self.cat_pages {
            builder.add_page_link(page, category);
        }

        let mut redirects = Vec::new();
        let mut push_redirect = |alias: &str, target: &str, summary: &mut IngestSummary| match (
            Title::normalize(alias),
            Title::normalize(target),
        ) {
            (Ok(a), Ok(t)) if a != t => redirects.push((a, t)),
            _ => summary.invalid_redirects += 1,
        };
        for (from, namespace, target) in &self.sql_redirects {
            match self.page_rows.get(from) {
                Some(row) if row.namespace == NS_ARTICLE && *namespace == NS_ARTICLE => {
                    push_redirect(&row.title, target, &mut self.summary)
                }
                Some(_) => self.summary.namespace_mismatches += 1,
                None => self.summary.unresolved_page_ids += 1,
            }
        }
        for (alias, target) in &self.tsv_redirects {
            push_redirect(alias, target, &mut self.summary);
        }
        redirects.sort();
        redirects.dedup_by(|a, b| a.0 == b.0);

        let graph = builder.build();
        self.summary.graph = graph.summary().clone();
        self.summary.redirects = redirects.len();
        Assembled { graph, redirects, summary: self.summary }
    }
}

/// Reads a whole input file into the assembler, choosing the reader by kind.
pub fn ingest_file(
    assembler: &mut GraphAssembler,
    path: &Path,
    kind: RecordKind,
    page_columns: usize,
) -> Result<(), IngestError> {
    let reader = open_input(path)?;
    let push = |assembler: &mut GraphAssembler, r: RawRecord, at: IngestError| {
        assembler.push(r).map_err(|message| match at {
            IngestError::Tsv { line, .. } => IngestError::Tsv { line, message },
            IngestError::Parse { offset, .. } => IngestError::Parse { offset, message },
            other => other,
        })
    };
    match kind {
        RecordKind::Sql(table) => {
            let mut records = parse_sql_dump(reader, TableSchema::for_table(table, page_columns));
            while let Some(r) = records.next() {
                let at = IngestError::Parse { offset: records.offset(), message: String::new() };
                push(assembler, r?, at)?;
            }
        }
        RecordKind::Tsv(k) => {
            let mut records = load_tsv(reader, k);
            while let Some(r) = records.next() {
                let at = IngestError::Tsv { line: records.line, message: String::new() };
                push(assembler, r?, at)?;
            }
        }
    }
    Ok(())
}
