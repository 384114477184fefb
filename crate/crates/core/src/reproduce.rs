//! Published statistics for the housing data and a cell-by-cell comparison
//! against freshly computed tables.

use serde::Serialize;

use crate::dispersion::DispersionMethod;
use crate::divergence::PowerDivergence;
use crate::error::Result;
use crate::estimation::{ClusterDataset, FitOptions};
use crate::gof::{table_scan, ScanTable};
use crate::model::LogLinearModel;

/// Grid used on both axes: `-0.5, 0, 2/3, 1, 2`.
pub const GRID: [f64; 5] = [-0.5, 0.0, 2.0 / 3.0, 1.0, 2.0];

/// Statistics are compared after rounding to four decimals.
pub const TOLERANCE: f64 = 5e-4;

/// A published p-value: either a value or the bound `< 0.0001`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PublishedP {
    Value(f64),
    BelowMin,
}

use PublishedP::{BelowMin as LT, Value as P};

/// Reference table; rows `lambda1`, columns `lambda2`.
pub struct ReferenceTable {
    pub method: DispersionMethod,
    pub statistic: [[f64; 5]; 5],
    pub p_value: [[PublishedP; 5]; 5],
    pub vartheta: [f64; 5],
}

pub const SEMIPARAMETRIC: ReferenceTable = ReferenceTable {
    method: DispersionMethod::Semiparametric,
    statistic: [
        [7.5621, 11.2413, 15.6963, 17.6234, 22.1483],
        [7.7504, 9.7014, 12.2489, 13.4095, 16.2120],
        [10.4138, 10.3330, 11.3428, 11.9922, 13.7789],
        [13.0422, 11.2813, 11.4143, 11.8302, 13.2202],
        [33.6045, 17.5637, 13.0587, 12.5518, 12.6781],
    ],
    p_value: [
        [P(0.1090), P(0.0240), P(0.0035), P(0.0015), P(0.0002)],
        [P(0.1012), P(0.0458), P(0.0156), P(0.0094), P(0.0027)],
        [P(0.0340), P(0.0352), P(0.0230), P(0.0174), P(0.0080)],
        [P(0.0111), P(0.0236), P(0.0223), P(0.0187), P(0.0102)],
        [LT, P(0.0015), P(0.0110), P(0.0137), P(0.0130)],
    ],
    vartheta: [2.1815, 1.5869, 1.3314, 1.2707, 1.1813],
};

pub const BRIER: ReferenceTable = ReferenceTable {
    method: DispersionMethod::Brier,
    statistic: [
        [15.4857, 16.7462, 19.6173, 21.0219, 24.5600],
        [15.8714, 14.4521, 15.3087, 15.9953, 17.9773],
        [21.3256, 15.3931, 14.1762, 14.3048, 15.2792],
        [26.7079, 16.8057, 14.2656, 14.1115, 14.6597],
        [68.8157, 26.1646, 16.3207, 14.9723, 14.0586],
    ],
    p_value: [
        [P(0.0038), P(0.0022), P(0.0006), P(0.0003), P(0.0001)],
        [P(0.0032), P(0.0060), P(0.0041), P(0.0030), P(0.0012)],
        [P(0.0003), P(0.0040), P(0.0068), P(0.0064), P(0.0042)],
        [LT, P(0.0021), P(0.0065), P(0.0069), P(0.0055)],
        [LT, LT, P(0.0026), P(0.0048), P(0.0071)],
    ],
    vartheta: [1.0653; 5],
};

#[derive(Debug, Clone, Serialize)]
pub struct CellCheck {
    pub method: DispersionMethod,
    pub quantity: &'static str,
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub expected: String,
    pub computed: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checks: Vec<CellCheck>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &CellCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

fn grid() -> Vec<PowerDivergence> {
    GRID.iter()
        .map(|&l| PowerDivergence::new(l).expect("finite"))
        .collect()
}

pub fn scan(ds: &ClusterDataset, method: DispersionMethod) -> Result<ScanTable> {
    let model = LogLinearModel::independence(3, 3)?;
    let g = grid();
    table_scan(ds, &model, &g, &g, method, &FitOptions::default())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE
}

/// Compares a computed scan against a reference table.
pub fn compare(table: &ScanTable, reference: &ReferenceTable) -> Vec<CellCheck> {
    let mut checks = Vec::new();
    for (i, &l1) in GRID.iter().enumerate() {
        for (j, &l2) in GRID.iter().enumerate() {
            let res = table.get(i, j);
            let stat = res.map(|r| r.statistic);
            checks.push(CellCheck {
                method: reference.method,
                quantity: "statistic",
                lambda1: Some(l1),
                lambda2: l2,
                expected: format!("{:.4}", reference.statistic[i][j]),
                computed: stat,
                ok: stat.is_some_and(|s| close(s, reference.statistic[i][j])),
            });
            let p = res.map(|r| r.p_value);
            let (expected, ok) = match reference.p_value[i][j] {
                PublishedP::Value(v) => (format!("{v:.4}"), p.is_some_and(|p| close(p, v))),
                PublishedP::BelowMin => ("<0.0001".to_string(), p.is_some_and(|p| p < 1e-4)),
            };
            checks.push(CellCheck {
                method: reference.method,
                quantity: "p_value",
                lambda1: Some(l1),
                lambda2: l2,
                expected,
                computed: p,
                ok,
            });
        }
    }
    let n_vartheta = match reference.method {
        DispersionMethod::Semiparametric => GRID.len(),
        // one estimate, shared by every column
        DispersionMethod::Brier => 1,
    };
    for (j, &lambda2) in GRID.iter().enumerate().take(n_vartheta) {
        let v = table.vartheta[j];
        checks.push(CellCheck {
            method: reference.method,
            quantity: "vartheta",
            lambda1: None,
            lambda2,
            expected: format!("{:.4}", reference.vartheta[j]),
            computed: v,
            ok: v.is_some_and(|v| close(v, reference.vartheta[j])),
        });
    }
    checks
}

/// Recomputes both housing tables from `ds` and checks every cell.
pub fn reproduce(ds: &ClusterDataset) -> Result<(ScanTable, ScanTable, Report)> {
    let semi = scan(ds, DispersionMethod::Semiparametric)?;
    let brier = scan(ds, DispersionMethod::Brier)?;
    let mut checks = compare(&semi, &SEMIPARAMETRIC);
    checks.extend(compare(&brier, &BRIER));
    Ok((semi, brier, Report { checks }))
}
