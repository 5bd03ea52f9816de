use std::collections::HashMap;

use log::warn;

use super::ReportRow;
use crate::error::{Error, Result};
use crate::model::{KeywordStat, Moments2};

/// Keywords estimated from a report, plus the reasons any were dropped or
/// are only partially estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimated {
    pub keywords: Vec<KeywordStat>,
    pub warnings: Vec<String>,
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for a single value).
pub(super) fn moments(xs: &[f64]) -> Moments2 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Moments2::new(mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Moments2::new(mean, (ss / (n - 1.0)).sqrt())
}

/// Per-keyword statistics from period rows, replicated over `m` adgroup columns.
///
/// Keywords without clicks or conversions have no defined conversion rate or
/// value per sale and are left out. Periods without impressions (clicks) do
/// not contribute to the CTR (CVR) moments.
pub fn estimate_stats(rows: &[ReportRow], m: usize) -> Result<Estimated> {
    if m == 0 {
        return Err(Error::Config("at least one adgroup is required".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&ReportRow>> = HashMap::new();
    for row in rows {
        groups
            .entry(row.keyword_id.as_str())
            .or_insert_with(|| {
                order.push(row.keyword_id.as_str());
                Vec::new()
            })
            .push(row);
    }

    let mut keywords = Vec::with_capacity(order.len());
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };
    for id in order {
        let periods = &groups[id];
        let clicks: u64 = periods.iter().map(|r| r.clicks).sum();
        let conversions: u64 = periods.iter().map(|r| r.conversions).sum();
        if clicks == 0 {
            note(format!(
                "keyword `{id}`: no clicks, conversion rate undefined; excluded"
            ));
            continue;
        }
        if conversions == 0 {
            note(format!(
                "keyword `{id}`: no conversions, value per sale undefined; excluded"
            ));
            continue;
        }
        if periods.len() < 2 {
            note(format!("keyword `{id}`: single period, standard deviations set to 0"));
        }

        let impressions: Vec<f64> = periods.iter().map(|r| r.impressions as f64).collect();
        let ctr: Vec<f64> = periods
            .iter()
            .filter(|r| r.impressions > 0)
            .map(|r| r.clicks as f64 / r.impressions as f64)
            .collect();
        let cvr: Vec<f64> = periods
            .iter()
            .filter(|r| r.clicks > 0)
            .map(|r| r.conversions as f64 / r.clicks as f64)
            .collect();
        let cost: Vec<f64> = periods.iter().map(|r| r.cost).collect();
        let total_cost: f64 = cost.iter().sum();
        let revenue: f64 = periods.iter().map(|r| r.revenue).sum();

        let first = periods[0];
        keywords.push(KeywordStat {
            id: id.to_string(),
            demand: moments(&impressions).mean,
            value_per_sale: revenue / conversions as f64,
            ctr: vec![moments(&ctr); m],
            cvr: vec![moments(&cvr); m],
            cpc: vec![total_cost / clicks as f64; m],
            cost: vec![moments(&cost); m],
            product_label: first.product_label.clone(),
            hierarchy_label: first.hierarchy_label.clone(),
        });
    }
    Ok(Estimated { keywords, warnings })
}
