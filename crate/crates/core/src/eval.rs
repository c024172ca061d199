//! Pixel IoU per class, accumulated over whole datasets.
//!
//! Counts are summed over every evaluated image before dividing, so a
//! report describes the dataset rather than an average of per-image scores.
//! All arithmetic is integral until the final rounding to hundredths.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_text, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::raster::LabelMask;

pub const NUM_CLASSES: usize = 2;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["Background", "Trees"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub intersection: u64,
    pub pred: u64,
    pub gt: u64,
}

impl ClassCounts {
    pub fn union(&self) -> u64 {
        self.pred + self.gt - self.intersection
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionAccumulator {
    classes: [ClassCounts; NUM_CLASSES],
    pixels: u64,
}

impl ConfusionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self, class: usize) -> ClassCounts {
        self.classes[class]
    }

    pub fn pixels(&self) -> u64 {
        self.pixels
    }

    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::Geometry(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        // [pred][gt] joint histogram
        let mut joint = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
            joint[p as usize][g as usize] += 1;
        }
        for c in 0..NUM_CLASSES {
            let counts = &mut self.classes[c];
            counts.intersection += joint[c][c];
            counts.pred += joint[c].iter().sum::<u64>();
            counts.gt += joint.iter().map(|row| row[c]).sum::<u64>();
        }
        self.pixels += pred.classes().len() as u64;
        Ok(())
    }

    pub fn merge(mut self, other: &ConfusionAccumulator) -> Self {
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.intersection += b.intersection;
            a.pred += b.pred;
            a.gt += b.gt;
        }
        self.pixels += other.pixels;
        self
    }

    pub fn finalize(&self, pair: EvalPair) -> Result<IoUReport> {
        if self.pixels == 0 {
            return Err(Error::EmptyEvaluation);
        }
        let classes: Vec<ClassIoU> = self
            .classes
            .iter()
            .enumerate()
            .map(|(c, counts)| ClassIoU {
                class: CLASS_NAMES[c].to_owned(),
                counts: *counts,
                iou: iou_hundredths(counts).map(Percent),
            })
            .collect();
        let defined: Vec<&ClassCounts> = self.classes.iter().filter(|c| c.union() > 0).collect();
        let macro_average = if defined.is_empty() {
            None
        } else {
            let sum = defined
                .iter()
                .map(|c| Ratio::new(u128::from(c.intersection), u128::from(c.union())))
                .fold(Ratio::from_integer(0u128), |acc, r| acc + r);
            let mean =
                sum * Ratio::from_integer(10_000u128) / Ratio::from_integer(defined.len() as u128);
            Some(Percent(round_half_up(*mean.numer(), *mean.denom()) as u32))
        };
        Ok(IoUReport {
            source: pair.source,
            target: pair.target,
            classes,
            macro_average,
            pixels: self.pixels,
        })
    }
}

fn round_half_up(numer: u128, denom: u128) -> u128 {
    (2 * numer + denom) / (2 * denom)
}

/// `100 * I / U` in hundredths of a percent, half-up; `None` when the union is empty.
pub fn iou_hundredths(counts: &ClassCounts) -> Option<u32> {
    let u = counts.union();
    (u > 0).then(|| round_half_up(10_000 * u128::from(counts.intersection), u128::from(u)) as u32)
}

/// A percentage stored in hundredths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(pub u32);

impl Percent {
    pub fn value(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Model trained on `source`, evaluated on `target`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvalPair {
    pub source: String,
    pub target: String,
}

impl EvalPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        EvalPair {
            source: source.into(),
            target: target.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassIoU {
    pub class: String,
    pub counts: ClassCounts,
    /// `None` when the class appears in neither prediction nor ground truth.
    pub iou: Option<Percent>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoUReport {
    pub source: String,
    pub target: String,
    pub classes: Vec<ClassIoU>,
    /// Mean over classes with a non-empty union.
    pub macro_average: Option<Percent>,
    pub pixels: u64,
}

impl IoUReport {
    pub fn pair(&self) -> EvalPair {
        EvalPair::new(&self.source, &self.target)
    }

    pub fn iou(&self, class: usize) -> Option<Percent> {
        self.classes.get(class).and_then(|c| c.iou)
    }
}

/// Evaluates `pred_dir/<id>.png` against every mask of `target` in `split`
/// (all entries when `split` is `None`).
pub fn evaluate_directory(
    target: &DatasetManifest,
    pred_dir: &Path,
    source: &str,
    split: Option<Split>,
) -> Result<IoUReport> {
    let mut acc = ConfusionAccumulator::new();
    let mut seen = 0usize;
    for entry in target
        .entries
        .iter()
        .filter(|e| split.is_none() || e.split == split)
    {
        let pred_path = pred_dir.join(format!("{}.png", entry.id));
        if !pred_path.is_file() {
            return Err(Error::MissingPrediction(entry.id.clone()));
        }
        let pred = LabelMask::read_png(&pred_path)?;
        let gt = LabelMask::read_png(&entry.mask_path)?;
        acc.accumulate(&pred, &gt)
            .map_err(|e| Error::Geometry(format!("{}: {e}", entry.id)))?;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::EmptyEvaluation);
    }
    acc.finalize(EvalPair::new(source, &target.name))
}

/// Reports keyed by `(source, target)` in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossMatrix {
    reports: Vec<IoUReport>,
}

pub fn cross_matrix(reports: Vec<IoUReport>) -> Result<CrossMatrix> {
    let mut seen = std::collections::HashSet::new();
    for r in &reports {
        if !seen.insert(r.pair()) {
            return Err(Error::DuplicateEvaluation(
                r.source.clone(),
                r.target.clone(),
            ));
        }
    }
    Ok(CrossMatrix { reports })
}

fn cell(p: Option<Percent>) -> String {
    p.map_or_else(|| "NA".to_owned(), |p| p.to_string())
}

impl CrossMatrix {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn reports(&self) -> &[IoUReport] {
        &self.reports
    }

    pub fn get(&self, source: &str, target: &str) -> Option<&IoUReport> {
        self.reports
            .iter()
            .find(|r| r.source == source && r.target == target)
    }

    /// Evaluations where the model was tested on its own training domain.
    pub fn diagonal(&self) -> impl Iterator<Item = &IoUReport> {
        self.reports.iter().filter(|r| r.source == r.target)
    }

    /// Source-only transfer evaluations.
    pub fn off_diagonal(&self) -> impl Iterator<Item = &IoUReport> {
        self.reports.iter().filter(|r| r.source != r.target)
    }

    /// Adds or replaces the report for its `(source, target)` key.
    pub fn upsert(&mut self, report: IoUReport) {
        match self.reports.iter_mut().find(|r| r.pair() == report.pair()) {
            Some(slot) => *slot = report,
            None => self.reports.push(report),
        }
    }

    /// `source,target,class,iou` rows; three per evaluation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,class,iou\n");
        for r in &self.reports {
            for (c, name) in CLASS_NAMES.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    r.source,
                    r.target,
                    name.to_lowercase(),
                    cell(r.iou(c))
                );
            }
            let _ = writeln!(
                out,
                "{},{},average,{}",
                r.source,
                r.target,
                cell(r.macro_average)
            );
        }
        out
    }

    /// One column per evaluation, rows Background / Trees / Average.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Class |");
        for r in &self.reports {
            let _ = write!(out, " {} → {} |", r.source, r.target);
        }
        out.push_str("\n|---|");
        for _ in &self.reports {
            out.push_str("---:|");
        }
        out.push('\n');
        for (c, name) in CLASS_NAMES.iter().enumerate() {
            let _ = write!(out, "| {name} |");
            for r in &self.reports {
                let _ = write!(out, " {} |", cell(r.iou(c)));
            }
            out.push('\n');
        }
        out.push_str("| Average |");
        for r in &self.reports {
            let _ = write!(out, " {} |", cell(r.macro_average));
        }
        out.push('\n');
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let matrix: CrossMatrix = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cross_matrix(matrix.reports)
    }

    /// Writes `reports.json`, `report.csv` and `report.md` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let json_path = dir.join("reports.json");
        let mut json = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: json_path.clone(),
            source,
        })?;
        json.push('\n');
        write_text(&json_path, &json)?;
        write_text(&dir.join("report.csv"), &self.to_csv())?;
        write_text(&dir.join("report.md"), &self.to_markdown())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: u32, h: u32, trees: &[(u32, u32)]) -> LabelMask {
        let mut c = vec![0u8; (w * h) as usize];
        for &(x, y) in trees {
            c[(y * w + x) as usize] = 1;
        }
        LabelMask::new(w, h, c).unwrap()
    }

    fn pair() -> EvalPair {
        EvalPair::new("P20", "P20")
    }

    /// Set-counting oracle: IoU hundredths for `class` by enumerating pixels.
    fn oracle(preds: &[LabelMask], gts: &[LabelMask], class: u8) -> Option<u32> {
        let (mut inter, mut union) = (0u128, 0u128);
        for (p, g) in preds.iter().zip(gts) {
            for (&a, &b) in p.classes().iter().zip(g.classes()) {
                let (in_p, in_g) = (a == class, b == class);
                inter += u128::from(in_p && in_g);
                union += u128::from(in_p || in_g);
            }
        }
        (union > 0).then(|| ((20_000 * inter + union) / (2 * union)) as u32)
    }

    #[test]
    fn hand_checked_four_by_four() {
        let pred = mask(4, 4, &[(0, 0), (1, 0)]);
        let gt = mask(4, 4, &[(1, 0), (1, 1)]);
        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(&pred, &gt).unwrap();
        let c = acc.counts(1);
        assert_eq!((c.intersection, c.union()), (1, 3));
        let report = acc.finalize(pair()).unwrap();
        assert_eq!(report.iou(1).unwrap().to_string(), "33.33");
        assert_eq!(report.iou(1), oracle(&[pred], &[gt], 1).map(Percent));
        // background: I = 16 - 3 = 13, U = 14 + 14 - 13 = 15 -> 86.67
        assert_eq!(report.iou(0).unwrap().to_string(), "86.67");
        // macro = (13/15 + 1/3) / 2 = 0.6
        assert_eq!(report.macro_average.unwrap().to_string(), "60.00");
    }

    #[test]
    fn identity_and_empty_intersection() {
        let gt = mask(8, 8, &[(1, 1), (2, 2), (7, 0)]);
        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(&gt, &gt).unwrap();
        let r = acc.finalize(pair()).unwrap();
        assert_eq!(r.iou(0), Some(Percent(10_000)));
        assert_eq!(r.iou(1), Some(Percent(10_000)));
        assert_eq!(r.macro_average, Some(Percent(10_000)));

        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(&mask(8, 8, &[]), &gt).unwrap();
        assert_eq!(acc.finalize(pair()).unwrap().iou(1), Some(Percent(0)));
    }

    #[test]
    fn absent_class_is_excluded_from_macro() {
        let empty = mask(4, 4, &[]);
        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(&empty, &empty).unwrap();
        let r = acc.finalize(pair()).unwrap();
        assert_eq!(r.iou(1), None);
        assert_eq!(r.macro_average, r.iou(0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ConfusionAccumulator::new().finalize(pair()),
            Err(Error::EmptyEvaluation)
        ));
        let mut acc = ConfusionAccumulator::new();
        assert!(matches!(
            acc.accumulate(&mask(4, 4, &[]), &mask(4, 2, &[])),
            Err(Error::Geometry(_))
        ));
    }

    fn report(source: &str, target: &str) -> IoUReport {
        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(
            &mask(4, 4, &[(0, 0), (1, 0)]),
            &mask(4, 4, &[(1, 0), (1, 1)]),
        )
        .unwrap();
        acc.finalize(EvalPair::new(source, target)).unwrap()
    }

    #[test]
    fn matrix_rendering_and_keys() {
        assert!(cross_matrix(vec![]).unwrap().is_empty());
        assert!(matches!(
            cross_matrix(vec![report("P20", "P20"), report("P20", "P20")]),
            Err(Error::DuplicateEvaluation(..))
        ));
        let m = cross_matrix(vec![report("P20", "P20"), report("P50", "P20")]).unwrap();
        assert_eq!(m.diagonal().count(), 1);
        assert_eq!(m.off_diagonal().next().unwrap().source, "P50");
        let csv = m.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "source,target,class,iou");
        assert!(csv.contains("P50,P20,trees,33.33\n"));
        assert!(csv.contains("P20,P20,average,60.00\n"));
        assert_eq!(csv.lines().count(), 7);
        let md = m.to_markdown();
        assert!(md.starts_with("| Class | P20 → P20 | P50 → P20 |"));
        assert!(md.contains("| Trees | 33.33 | 33.33 |"));
        assert!(md.contains("| Average | 60.00 | 60.00 |"));
    }

    #[test]
    fn upsert_replaces_same_key() {
        let mut m = CrossMatrix::default();
        m.upsert(report("a", "b"));
        m.upsert(report("a", "b"));
        m.upsert(report("a", "c"));
        assert_eq!(m.len(), 2);
    }

    fn arb_mask() -> impl Strategy<Value = LabelMask> {
        proptest::collection::vec(0u8..2, 256).prop_map(|c| LabelMask::new(16, 16, c).unwrap())
    }

    proptest! {
        #[test]
        fn matches_set_counting_oracle(p in arb_mask(), g in arb_mask()) {
            let mut acc = ConfusionAccumulator::new();
            acc.accumulate(&p, &g).unwrap();
            let r = acc.finalize(pair()).unwrap();
            for c in 0..2u8 {
                prop_assert_eq!(r.iou(c as usize).map(|p| p.0), oracle(std::slice::from_ref(&p), std::slice::from_ref(&g), c));
            }
        }

        #[test]
        fn symmetric(p in arb_mask(), g in arb_mask()) {
            let mut a = ConfusionAccumulator::new();
            a.accumulate(&p, &g).unwrap();
            let mut b = ConfusionAccumulator::new();
            b.accumulate(&g, &p).unwrap();
            prop_assert_eq!(a.finalize(pair()).unwrap().classes.iter().map(|c| c.iou).collect::<Vec<_>>(),
                            b.finalize(pair()).unwrap().classes.iter().map(|c| c.iou).collect::<Vec<_>>());
        }

        #[test]
        fn merge_equals_streaming(masks in proptest::collection::vec((arb_mask(), arb_mask()), 1..8), cut in 0usize..8) {
            let mut whole = ConfusionAccumulator::new();
            for (p, g) in &masks {
                whole.accumulate(p, g).unwrap();
            }
            let cut = cut.min(masks.len());
            let (mut a, mut b) = (ConfusionAccumulator::new(), ConfusionAccumulator::new());
            for (p, g) in &masks[..cut] { a.accumulate(p, g).unwrap(); }
            for (p, g) in &masks[cut..] { b.accumulate(p, g).unwrap(); }
            prop_assert_eq!(a.merge(&b), whole);
            prop_assert_eq!(b.merge(&a), whole);
            let r = whole.finalize(pair()).unwrap();
            for c in &r.classes {
                prop_assert!(c.counts.intersection <= c.counts.pred.min(c.counts.gt));
                prop_assert!(c.iou.is_none_or(|p| p.0 <= 10_000));
            }
        }
    }
}
