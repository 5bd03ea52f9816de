//! Campaign data: CSV files, estimation from period reports and synthetic
//! instances.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so an instance survives a write/read cycle bit for bit.

mod estimate;
mod generate;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdGroupSpec, Assignment, KeywordStat, Moments2, ProblemInstance};

pub use estimate::{estimate_stats, Estimated};
pub use generate::{generate, GeneratedKeywords, GeneratorSpec, PopulationSummary, RateOverflow};

const INSTANCE_HEAD: [&str; 5] = ["keyword_id", "demand", "vps", "product_label", "hierarchy_label"];
const BLOCK: [&str; 7] = [
    "ctr_mean",
    "ctr_sd",
    "cvr_mean",
    "cvr_sd",
    "cpc",
    "cost_mean",
    "cost_sd",
];
const REPORT_HEAD: [&str; 9] = [
    "keyword_id",
    "period",
    "impressions",
    "clicks",
    "conversions",
    "cost",
    "revenue",
    "product_label",
    "hierarchy_label",
];
const ADGROUP_HEAD: [&str; 3] = ["adgroup_id", "budget", "alpha"];

/// One line of a campaign report: a keyword's activity in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub keyword_id: String,
    pub period: String,
    pub impressions: u64,
    pub clicks: u64,
    pub conversions: u64,
    pub cost: f64,
    pub revenue: f64,
    #[serde(default)]
    pub product_label: Option<String>,
    #[serde(default)]
    pub hierarchy_label: Option<String>,
}

impl ReportRow {
    fn check(&self) -> std::result::Result<(), String> {
        if self.clicks > self.impressions {
            return Err(format!(
                "clicks {} exceed impressions {}",
                self.clicks, self.impressions
            ));
        }
        if self.conversions > self.clicks {
            return Err(format!(
                "conversions {} exceed clicks {}",
                self.conversions, self.clicks
            ));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(format!("cost {} must be finite and >= 0", self.cost));
        }
        if !(self.revenue.is_finite() && self.revenue >= 0.0) {
            return Err(format!("revenue {} must be finite and >= 0", self.revenue));
        }
        Ok(())
    }
}

fn csv_err(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn from_csv(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            csv_err(source, line, format!("expected {expected_len} fields, found {len}"))
        }
        csv::ErrorKind::Utf8 { .. } => csv_err(source, line, "invalid UTF-8"),
        kind => csv_err(source, line, format!("{kind:?}")),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn label(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn num(v: f64) -> String {
    format!("{v}")
}

struct Fields<'a> {
    record: &'a csv::StringRecord,
    header: &'a csv::StringRecord,
    source: &'a str,
    line: u64,
}

impl Fields<'_> {
    fn str(&self, k: usize) -> &str {
        self.record.get(k).unwrap_or("")
    }

    fn f64(&self, k: usize) -> Result<f64> {
        let raw = self.str(k);
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
            csv_err(
                self.source,
                self.line,
                format!("column `{}`: `{raw}` is not a finite number", &self.header[k]),
            )
        })
    }
}

/// Header of an instance file with `m` adgroup blocks.
pub fn instance_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = INSTANCE_HEAD.iter().map(|s| s.to_string()).collect();
    for j in 1..=m {
        h.extend(BLOCK.iter().map(|s| format!("{s}_{j}")));
    }
    h
}

pub fn write_instance<W: Write>(w: W, keywords: &[KeywordStat]) -> Result<()> {
    let m = keywords.first().map_or(0, KeywordStat::num_adgroups);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(instance_header(m))
        .map_err(|e| from_csv("<output>", e))?;
    for k in keywords {
        let mut rec = vec![
            k.id.clone(),
            num(k.demand),
            num(k.value_per_sale),
            k.product_label.clone().unwrap_or_default(),
            k.hierarchy_label.clone().unwrap_or_default(),
        ];
        for j in 0..m {
            rec.extend([
                num(k.ctr[j].mean),
                num(k.ctr[j].sd),
                num(k.cvr[j].mean),
                num(k.cvr[j].sd),
                num(k.cpc[j]),
                num(k.cost[j].mean),
                num(k.cost[j].sd),
            ]);
        }
        out.write_record(&rec).map_err(|e| from_csv("<output>", e))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads keywords from an instance file; the adgroup count follows from the header.
pub fn read_instance<R: Read>(r: R, source: &str) -> Result<Vec<KeywordStat>> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| from_csv(source, e))?.clone();
    let extra = header.len().saturating_sub(INSTANCE_HEAD.len());
    if header.len() < INSTANCE_HEAD.len() + BLOCK.len() || extra % BLOCK.len() != 0 {
        return Err(csv_err(
            source,
            1,
            format!("expected 5 + 7m columns, found {}", header.len()),
        ));
    }
    let m = extra / BLOCK.len();
    for (k, (got, want)) in header.iter().zip(instance_header(m)).enumerate() {
        if got != want {
            return Err(csv_err(
                source,
                1,
                format!("column {}: expected `{want}`, found `{got}`", k + 1),
            ));
        }
    }

    let mut keywords = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let record = rec.map_err(|e| from_csv(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = Fields {
            record: &record,
            header: &header,
            source,
            line,
        };
        let id = f.str(0).to_string();
        if id.is_empty() {
            return Err(csv_err(source, line, "empty keyword_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(csv_err(source, line, format!("duplicate keyword_id `{id}`")));
        }
        let mut k = KeywordStat {
            id,
            demand: f.f64(1)?,
            value_per_sale: f.f64(2)?,
            ctr: Vec::with_capacity(m),
            cvr: Vec::with_capacity(m),
            cpc: Vec::with_capacity(m),
            cost: Vec::with_capacity(m),
            product_label: label(f.str(3)),
            hierarchy_label: label(f.str(4)),
        };
        for j in 0..m {
            let b = INSTANCE_HEAD.len() + j * BLOCK.len();
            k.ctr.push(Moments2::new(f.f64(b)?, f.f64(b + 1)?));
            k.cvr.push(Moments2::new(f.f64(b + 2)?, f.f64(b + 3)?));
            k.cpc.push(f.f64(b + 4)?);
            k.cost.push(Moments2::new(f.f64(b + 5)?, f.f64(b + 6)?));
        }
        keywords.push(k);
    }
    if keywords.is_empty() {
        return Err(csv_err(source, 1, "no keywords"));
    }
    Ok(keywords)
}

pub fn write_adgroups<W: Write>(w: W, adgroups: &[AdGroupSpec]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ADGROUP_HEAD).map_err(|e| from_csv("<output>", e))?;
    for g in adgroups {
        out.write_record([g.id.clone(), num(g.budget), num(g.alpha)])
            .map_err(|e| from_csv("<output>", e))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_adgroups<R: Read>(r: R, source: &str) -> Result<Vec<AdGroupSpec>> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| from_csv(source, e))?.clone();
    if header.iter().ne(ADGROUP_HEAD) {
        return Err(csv_err(
            source,
            1,
            format!("expected header `{}`", ADGROUP_HEAD.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let record = rec.map_err(|e| from_csv(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = Fields {
            record: &record,
            header: &header,
            source,
            line,
        };
        let g = AdGroupSpec::new(f.str(0), f.f64(1)?, f.f64(2)?);
        if g.id.is_empty() {
            return Err(csv_err(source, line, "empty adgroup_id"));
        }
        if !(g.budget > 0.0) {
            return Err(csv_err(source, line, format!("budget {} must be > 0", g.budget)));
        }
        if !(0.5..1.0).contains(&g.alpha) {
            return Err(csv_err(source, line, format!("alpha {} must lie in [0.5, 1)", g.alpha)));
        }
        out.push(g);
    }
    if out.is_empty() {
        return Err(csv_err(source, 1, "no adgroups"));
    }
    Ok(out)
}

pub fn read_report<R: Read>(r: R, source: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| from_csv(source, e))?.clone();
    if headers.iter().ne(REPORT_HEAD) {
        return Err(csv_err(
            source,
            1,
            format!("expected header `{}`", REPORT_HEAD.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let record = rec.map_err(|e| from_csv(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row: ReportRow = record
            .deserialize(Some(&headers))
            .map_err(|e| csv_err(source, line, e.to_string()))?;
        row.product_label = row.product_label.filter(|s| !s.is_empty());
        row.hierarchy_label = row.hierarchy_label.filter(|s| !s.is_empty());
        row.check().map_err(|m| csv_err(source, line, m))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_report<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(|e| from_csv("<output>", e))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes an assignment as a 0/1 matrix: `keyword_id` then one column per adgroup id.
pub fn write_assignment<W: Write>(w: W, inst: &ProblemInstance, x: &Assignment) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["keyword_id".to_string()];
    header.extend(inst.adgroups().iter().map(|g| g.id.clone()));
    out.write_record(&header).map_err(|e| from_csv("<output>", e))?;
    for (k, row) in inst.keywords().iter().zip(x.to_matrix()) {
        let mut rec = vec![k.id.clone()];
        rec.extend(row.iter().map(u8::to_string));
        out.write_record(&rec).map_err(|e| from_csv("<output>", e))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an assignment matrix written by [`write_assignment`]. Rows are matched
/// to keywords by id and columns to adgroups by id; keywords missing from the
/// file are unassigned. A row with two 1s is an [`Error::RowSum`].
pub fn read_assignment<R: Read>(r: R, source: &str, inst: &ProblemInstance) -> Result<Assignment> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| from_csv(source, e))?.clone();
    if header.get(0) != Some("keyword_id") {
        return Err(csv_err(source, 1, "first column must be `keyword_id`"));
    }
    let mut columns = Vec::new();
    for name in header.iter().skip(1) {
        let j = inst
            .adgroups()
            .iter()
            .position(|g| g.id == name)
            .ok_or_else(|| csv_err(source, 1, format!("unknown adgroup `{name}`")))?;
        columns.push(j);
    }
    let mut x = vec![vec![0.0; inst.m()]; inst.n()];
    for rec in rdr.records() {
        let record = rec.map_err(|e| from_csv(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = Fields {
            record: &record,
            header: &header,
            source,
            line,
        };
        let id = f.str(0);
        let i = inst
            .keyword_index(id)
            .ok_or_else(|| csv_err(source, line, format!("unknown keyword `{id}`")))?;
        for (k, &j) in columns.iter().enumerate() {
            x[i][j] = f.f64(k + 1)?;
        }
    }
    Assignment::from_matrix(inst, &x)
}

pub fn load_instance(path: &Path) -> Result<Vec<KeywordStat>> {
    read_instance(open(path)?, &path.display().to_string())
}

pub fn save_instance(path: &Path, keywords: &[KeywordStat]) -> Result<()> {
    write_instance(create(path)?, keywords)
}

pub fn load_adgroups(path: &Path) -> Result<Vec<AdGroupSpec>> {
    read_adgroups(open(path)?, &path.display().to_string())
}

pub fn save_adgroups(path: &Path, adgroups: &[AdGroupSpec]) -> Result<()> {
    write_adgroups(create(path)?, adgroups)
}

pub fn load_report(path: &Path) -> Result<Vec<ReportRow>> {
    read_report(open(path)?, &path.display().to_string())
}

pub fn load_assignment(path: &Path, inst: &ProblemInstance) -> Result<Assignment> {
    read_assignment(open(path)?, &path.display().to_string(), inst)
}

pub fn save_assignment(path: &Path, inst: &ProblemInstance, x: &Assignment) -> Result<()> {
    write_assignment(create(path)?, inst, x)
}

#[cfg(test)]
mod tests;
