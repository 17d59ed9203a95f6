use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::metrics::{optimal_k, PerformanceCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AlwaysBetter,
    AlwaysWorse,
    Conditional,
}

/// How retrieval at each depth compares with answering closed-book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedBookVerdict {
    pub verdict: Verdict,
    /// Depths where F1 is strictly above the closed-book F1.
    pub condition_ks: Vec<u32>,
    pub no_context_f1: f64,
    pub grid: Vec<u32>,
}

impl ClosedBookVerdict {
    /// Table cell text: a check mark, a cross, or the depth condition under
    /// which retrieval wins ("only for k ≥ 5").
    pub fn render(&self) -> String {
        match self.verdict {
            Verdict::AlwaysBetter => "✓".to_owned(),
            Verdict::AlwaysWorse => "✗".to_owned(),
            Verdict::Conditional => {
                format!("only for {}", describe_ks(&self.condition_ks, &self.grid))
            }
        }
    }
}

fn describe_ks(ks: &[u32], grid: &[u32]) -> String {
    if let [only] = ks {
        return format!("k = {only}");
    }
    let start = grid.iter().position(|g| *g == ks[0]).unwrap_or(0);
    let contiguous = grid[start..].iter().take(ks.len()).eq(ks.iter());
    if contiguous && start + ks.len() == grid.len() {
        return format!("k ≥ {}", ks[0]);
    }
    if contiguous && start == 0 {
        return format!("k ≤ {}", ks[ks.len() - 1]);
    }
    let list: Vec<String> = ks.iter().map(u32::to_string).collect();
    format!("k ∈ {{{}}}", list.join(", "))
}

fn check_grid(grid: &[u32]) -> Result<(), AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::InvalidInput("empty grid".into()));
    }
    Ok(())
}

pub fn closed_book_verdict(
    curve: &PerformanceCurve,
    no_context_f1: f64,
    grid: &[u32],
) -> Result<ClosedBookVerdict, AnalysisError> {
    check_grid(grid)?;
    let on_grid = curve.restrict_to(grid)?;
    let condition_ks: Vec<u32> = on_grid
        .points()
        .iter()
        .filter(|p| p.f1 > no_context_f1)
        .map(|p| p.k)
        .collect();
    let verdict = if condition_ks.len() == grid.len() {
        Verdict::AlwaysBetter
    } else if condition_ks.is_empty() {
        Verdict::AlwaysWorse
    } else {
        Verdict::Conditional
    };
    Ok(ClosedBookVerdict {
        verdict,
        condition_ks,
        no_context_f1,
        grid: grid.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Mean over the grid of F1(k) minus the closed-book F1.
    Average,
    /// F1(k*) minus the closed-book F1.
    AtOptimal,
}

pub fn gain_over_closed_book(
    curve: &PerformanceCurve,
    no_context_f1: f64,
    mode: GainMode,
    grid: &[u32],
) -> Result<f64, AnalysisError> {
    check_grid(grid)?;
    let on_grid = curve.restrict_to(grid)?;
    Ok(match mode {
        GainMode::Average => {
            on_grid
                .points()
                .iter()
                .map(|p| p.f1 - no_context_f1)
                .sum::<f64>()
                / grid.len() as f64
        }
        GainMode::AtOptimal => {
            on_grid.f1_at(optimal_k(&on_grid)).expect("k* on grid") - no_context_f1
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::CurveLabel;

    const GRID: [u32; 6] = [1, 2, 5, 10, 20, 50];

    fn curve(f1: [f64; 6]) -> PerformanceCurve {
        let label = CurveLabel {
            dataset: "d".into(),
            retriever: "r".into(),
            reader: "m".into(),
            condition: "top_k".into(),
            variant: "standard".into(),
        };
        PerformanceCurve::from_pairs(label, GRID.iter().copied().zip(f1)).unwrap()
    }

    #[test]
    fn always_better_and_worse() {
        let v = closed_book_verdict(&curve([40.0; 6]), 30.0, &GRID).unwrap();
        assert_eq!(v.verdict, Verdict::AlwaysBetter);
        assert_eq!(v.render(), "✓");
        let v = closed_book_verdict(&curve([20.0; 6]), 30.0, &GRID).unwrap();
        assert_eq!(v.verdict, Verdict::AlwaysWorse);
        assert_eq!(v.render(), "✗");
    }

    #[test]
    fn ties_are_not_better() {
        let v = closed_book_verdict(&curve([30.0; 6]), 30.0, &GRID).unwrap();
        assert_eq!(v.verdict, Verdict::AlwaysWorse);
    }

    #[test]
    fn conditional_suffix() {
        let v =
            closed_book_verdict(&curve([20.0, 25.0, 31.0, 35.0, 36.0, 33.0]), 30.0, &GRID).unwrap();
        assert_eq!(v.verdict, Verdict::Conditional);
        assert_eq!(v.condition_ks, vec![5, 10, 20, 50]);
        assert_eq!(v.render(), "only for k ≥ 5");
    }

    #[test]
    fn conditional_prefix_single_and_set() {
        let v =
            closed_book_verdict(&curve([35.0, 32.0, 20.0, 20.0, 20.0, 20.0]), 30.0, &GRID).unwrap();
        assert_eq!(v.render(), "only for k ≤ 2");
        let v =
            closed_book_verdict(&curve([20.0, 32.0, 20.0, 20.0, 20.0, 20.0]), 30.0, &GRID).unwrap();
        assert_eq!(v.render(), "only for k = 2");
        let v =
            closed_book_verdict(&curve([20.0, 32.0, 20.0, 32.0, 20.0, 20.0]), 30.0, &GRID).unwrap();
        assert_eq!(v.render(), "only for k ∈ {2, 10}");
    }

    #[test]
    fn grid_mismatch() {
        assert!(closed_book_verdict(&curve([1.0; 6]), 0.0, &[1, 3]).is_err());
    }

    #[test]
    fn gains() {
        let c = curve([10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        assert_eq!(
            gain_over_closed_book(&c, 10.0, GainMode::Average, &GRID).unwrap(),
            25.0
        );
        assert_eq!(
            gain_over_closed_book(&c, 10.0, GainMode::AtOptimal, &GRID).unwrap(),
            50.0
        );
        let flat = curve([30.0; 6]);
        assert_eq!(
            gain_over_closed_book(&flat, 30.0, GainMode::Average, &GRID).unwrap(),
            0.0
        );
        assert_eq!(
            gain_over_closed_book(&flat, 30.0, GainMode::AtOptimal, &GRID).unwrap(),
            0.0
        );
    }
}
