//! Global feature binning for histogram split finding.

/// Per-feature bin assignment computed once from the training columns.
///
/// A column with at most `max_bins` distinct values gets one bin per value,
/// which makes histogram search see exactly the candidates exact search
/// sees. Wider columns are cut at sample quantiles.
#[derive(Debug, Clone)]
pub(crate) struct BinnedColumns {
    pub bins: Vec<Vec<u16>>,
    pub n_bins: Vec<usize>,
}

impl BinnedColumns {
    pub fn new(columns: &[Vec<f64>], max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let (bins, n_bins) = columns
            .iter()
            .map(|column| {
                let bounds = upper_bounds(column, max_bins);
                let assigned = column
                    .iter()
                    .map(|&v| bounds.partition_point(|&u| u < v) as u16)
                    .collect();
                (assigned, bounds.len())
            })
            .unzip();
        BinnedColumns { bins, n_bins }
    }
}

/// Ascending, distinct inclusive upper bounds; the last one is the column max.
fn upper_bounds(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct;
    }
    let n = sorted.len();
    let mut bounds: Vec<f64> = (1..max_bins).map(|b| sorted[b * n / max_bins - 1]).collect();
    bounds.push(sorted[n - 1]);
    bounds.dedup();
    bounds
}
