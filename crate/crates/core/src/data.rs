//! Observational datasets, CSV exchange, splits and per-arm batch sampling.
//!
//! CSV layout: a mandatory header; columns `t` (0/1) and `y`; every other
//! column not prefixed `gt_` is a covariate, kept in file order. Ground
//! truth travels in `gt_y0, gt_y1, gt_m0, gt_m1` and, optionally, the
//! cross-world outcomes `gt_y1m0` (= y(1, m(0))) and `gt_y0m1`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Arm;
use crate::objective::Batch;

const GT_BASE: [&str; 4] = ["gt_y0", "gt_y1", "gt_m0", "gt_m1"];
const GT_CROSS: [&str; 2] = ["gt_y1m0", "gt_y0m1"];

/// Outcomes of the two cross worlds, y(1, m(0)) and y(0, m(1)).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossWorld {
    pub y1_m0: Vec<f64>,
    pub y0_m1: Vec<f64>,
}

/// Per-individual potential outcomes and mediators.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// y(0, m(0))
    pub y0: Vec<f64>,
    /// y(1, m(1))
    pub y1: Vec<f64>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub cross: Option<CrossWorld>,
}

/// Population effects implied by a [`GroundTruth`], using the same
/// conventions as the model estimators (MTE at factual status, DTE with the
/// mediator at the factual arm).
#[derive(Debug, Clone, PartialEq)]
pub struct TrueEffects {
    pub ite: Vec<f64>,
    pub mte: Option<Vec<f64>>,
    pub dte: Option<Vec<f64>>,
    pub ate: f64,
    pub att: Option<f64>,
    pub ame: Option<f64>,
    pub ade: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.y0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y0.is_empty()
    }

    pub fn ite(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> GroundTruth {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        GroundTruth {
            y0: pick(&self.y0),
            y1: pick(&self.y1),
            m0: pick(&self.m0),
            m1: pick(&self.m1),
            cross: self.cross.as_ref().map(|c| CrossWorld { y1_m0: pick(&c.y1_m0), y0_m1: pick(&c.y0_m1) }),
        }
    }

    pub fn effects(&self, t: &[u8]) -> TrueEffects {
        let ite = self.ite();
        let treated: Vec<f64> = ite.iter().zip(t).filter(|(_, &ti)| ti == 1).map(|(&e, _)| e).collect();
        let (mte, dte) = match &self.cross {
            Some(c) => {
                let mut mte = Vec::with_capacity(t.len());
                let mut dte = Vec::with_capacity(t.len());
                for (i, &ti) in t.iter().enumerate() {
                    if ti == 1 {
                        mte.push(self.y1[i] - c.y1_m0[i]);
                        dte.push(self.y1[i] - c.y0_m1[i]);
                    } else {
                        mte.push(c.y0_m1[i] - self.y0[i]);
                        dte.push(c.y1_m0[i] - self.y0[i]);
                    }
                }
                (Some(mte), Some(dte))
            }
            None => (None, None),
        };
        TrueEffects {
            ate: mean(&ite),
            att: (!treated.is_empty()).then(|| mean(&treated)),
            ame: mte.as_deref().map(mean),
            ade: dte.as_deref().map(mean),
            ite,
            mte,
            dte,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    pub x: Array2<f64>,
    pub t: Vec<u8>,
    pub y: Array1<f64>,
    pub covariate_names: Vec<String>,
    pub truth: Option<GroundTruth>,
}

impl ObservationalDataset {
    pub fn new(x: Array2<f64>, t: Vec<u8>, y: Array1<f64>, covariate_names: Vec<String>, truth: Option<GroundTruth>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        if t.len() != n || y.len() != n {
            return Err(Error::shape("dataset columns", n, format!("t: {}, y: {}", t.len(), y.len())));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::shape("covariate names", x.ncols(), covariate_names.len()));
        }
        if let Some(i) = t.iter().position(|&v| v > 1) {
            return Err(Error::InvalidInput(format!("treatment must be binary, row {} has {}", i + 1, t[i])));
        }
        if let Some(gt) = &truth {
            let lens = [gt.y0.len(), gt.y1.len(), gt.m0.len(), gt.m1.len()];
            let cross_ok = gt.cross.as_ref().is_none_or(|c| c.y1_m0.len() == n && c.y0_m1.len() == n);
            if lens.iter().any(|&l| l != n) || !cross_ok {
                return Err(Error::shape("ground truth columns", n, format!("{lens:?}")));
            }
        }
        Ok(ObservationalDataset { x, t, y, covariate_names, truth })
    }

    pub fn default_names(d: usize) -> Vec<String> {
        (1..=d).map(|k| format!("x{k}")).collect()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        let want = arm == Arm::Treated;
        self.t.iter().filter(|&&v| (v == 1) == want).count()
    }

    /// Positions in `indices` whose individual belongs to `arm`.
    pub fn arm_members(&self, indices: &[usize], arm: Arm) -> Vec<usize> {
        let want = u8::from(arm == Arm::Treated);
        indices.iter().copied().filter(|&i| self.t[i] == want).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> ObservationalDataset {
        ObservationalDataset {
            x: self.x.select(Axis(0), idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: self.y.select(Axis(0), idx),
            covariate_names: self.covariate_names.clone(),
            truth: self.truth.as_ref().map(|g| g.subset(idx)),
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch { x: self.x.select(Axis(0), idx), y: self.y.select(Axis(0), idx) }
    }

    /// Copy without the named covariates. Unknown names are an error.
    pub fn drop_covariates(&self, names: &[String]) -> Result<ObservationalDataset> {
        for name in names {
            if !self.covariate_names.contains(name) {
                return Err(Error::InvalidInput(format!("unknown covariate '{name}'")));
            }
        }
        let keep: Vec<usize> = (0..self.dim()).filter(|&j| !names.contains(&self.covariate_names[j])).collect();
        if keep.is_empty() {
            return Err(Error::InvalidInput("cannot drop every covariate".into()));
        }
        Ok(ObservationalDataset {
            x: self.x.select(Axis(1), &keep),
            covariate_names: keep.iter().map(|&j| self.covariate_names[j].clone()).collect(),
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.covariate_names.clone();
        header.push("t".into());
        header.push("y".into());
        if let Some(gt) = &self.truth {
            header.extend(GT_BASE.iter().map(|s| s.to_string()));
            if gt.cross.is_some() {
                header.extend(GT_CROSS.iter().map(|s| s.to_string()));
            }
        }
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|&v| encode(v)));
            record.push(self.t[i].to_string());
            record.push(encode(self.y[i]));
            if let Some(gt) = &self.truth {
                record.extend([gt.y0[i], gt.y1[i], gt.m0[i], gt.m1[i]].map(encode));
                if let Some(c) = &gt.cross {
                    record.extend([c.y1_m0[i], c.y0_m1[i]].map(encode));
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<ObservationalDataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), &path.display().to_string())
    }

    /// Parses a dataset; `source` names the input in error messages.
    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<ObservationalDataset> {
        let parse_err = |row: usize, column: &str, reason: String| Error::Parse {
            path: source.to_string(),
            row,
            column: column.to_string(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| header.iter().position(|h| h == name);

        let t_col = find("t").ok_or_else(|| parse_err(0, "t", "missing mandatory column".into()))?;
        let y_col = find("y").ok_or_else(|| parse_err(0, "y", "missing mandatory column".into()))?;
        let gt_cols: Vec<Option<usize>> = GT_BASE.iter().map(|c| find(c)).collect();
        let present = gt_cols.iter().filter(|c| c.is_some()).count();
        if present != 0 && present != GT_BASE.len() {
            let missing = GT_BASE.iter().zip(&gt_cols).find(|(_, c)| c.is_none()).map(|(n, _)| *n).unwrap_or("gt_*");
            return Err(parse_err(0, missing, "ground truth columns must be all present or all absent".into()));
        }
        let cross_cols: Vec<Option<usize>> = GT_CROSS.iter().map(|c| find(c)).collect();
        let cross_present = cross_cols.iter().filter(|c| c.is_some()).count();
        if cross_present != 0 && (cross_present != GT_CROSS.len() || present == 0) {
            return Err(parse_err(0, "gt_y1m0", "cross-world columns need each other and the base ground truth".into()));
        }
        let cov_cols: Vec<usize> = (0..header.len())
            .filter(|&j| j != t_col && j != y_col && !header[j].starts_with("gt_"))
            .collect();
        if cov_cols.is_empty() {
            return Err(parse_err(0, "x1", "no covariate columns".into()));
        }

        let mut xs: Vec<f64> = Vec::new();
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        let mut gts: [Vec<f64>; 6] = Default::default();
        for (r, rec) in rdr.records().enumerate() {
            let row = r + 1;
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(parse_err(row, "*", format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            let num = |j: usize| -> Result<f64> {
                let cell = rec[j].trim();
                let v: f64 = cell.parse().map_err(|_| parse_err(row, &header[j], format!("not a number: '{cell}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(row, &header[j], format!("non-finite value '{cell}'")));
                }
                Ok(v)
            };
            for &j in &cov_cols {
                xs.push(num(j)?);
            }
            let t = num(t_col)?;
            if t != 0.0 && t != 1.0 {
                return Err(parse_err(row, "t", format!("treatment must be 0 or 1, found '{}'", rec[t_col].trim())));
            }
            ts.push(t as u8);
            ys.push(num(y_col)?);
            for (slot, col) in gts.iter_mut().zip(gt_cols.iter().chain(&cross_cols)) {
                if let Some(j) = col {
                    slot.push(num(*j)?);
                }
            }
        }
        let n = ts.len();
        if n == 0 {
            return Err(parse_err(0, "*", "no data rows".into()));
        }
        let x = Array2::from_shape_vec((n, cov_cols.len()), xs).map_err(|e| Error::shape("covariates", n, e))?;
        let [y0, y1, m0, m1, y1_m0, y0_m1] = gts;
        let truth = (present > 0).then(|| GroundTruth {
            y0,
            y1,
            m0,
            m1,
            cross: (cross_present > 0).then_some(CrossWorld { y1_m0, y0_m1 }),
        });
        let names = cov_cols.iter().map(|&j| header[j].clone()).collect();
        ObservationalDataset::new(x, ts, Array1::from(ys), names, truth)
    }
}

/// 17 significant digits; parses back to the identical double.
fn encode(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffled split: test is ⌊0.2 n⌋, validation ⌊0.2 (n − test)⌋, the rest trains.
pub fn split(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::InvalidInput(format!("split needs at least 5 rows, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let n_test = n / 5;
    let n_val = (n - n_test) / 5;
    let mut test = perm[..n_test].to_vec();
    let mut validation = perm[n_test..n_test + n_val].to_vec();
    let mut train = perm[n_test + n_val..].to_vec();
    test.sort_unstable();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, validation, test, seed })
}

/// Uniform mini-batch of `arm` members within `indices`: without replacement
/// when the arm has at least `size` members, with replacement otherwise.
/// Returns the batch and the dataset rows it was drawn from.
pub fn sample_arm_batch<R: Rng + ?Sized>(
    data: &ObservationalDataset,
    indices: &[usize],
    arm: Arm,
    size: usize,
    rng: &mut R,
) -> Result<(Batch, Vec<usize>)> {
    let members = data.arm_members(indices, arm);
    if members.is_empty() {
        return Err(Error::InvalidInput(format!("{} arm is empty", arm.name())));
    }
    let rows: Vec<usize> = if members.len() >= size {
        rand::seq::index::sample(rng, members.len(), size).iter().map(|k| members[k]).collect()
    } else {
        (0..size).map(|_| members[rng.random_range(0..members.len())]).collect()
    };
    Ok((data.batch(&rows), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> ObservationalDataset {
        ObservationalDataset::new(
            array![[0.1, -2.5], [3.0, 1e-300]],
            vec![1, 0],
            array![1.5, -0.25],
            ObservationalDataset::default_names(2),
            None,
        )
        .unwrap()
    }

    #[test]
    fn handcrafted_round_trip() {
        let text = "x1,x2,t,y\n0.1,-2.5,1,1.5\n3.0,1e-300,0,-0.25\n";
        let ds = ObservationalDataset::read_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(ds, tiny());
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = ObservationalDataset::read_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn non_binary_treatment_names_row() {
        let text = "x1,t,y\n0.5,1,2\n0.1,2,3\n";
        match ObservationalDataset::read_csv(text.as_bytes(), "mem") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "t");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn structured_parse_errors() {
        let missing = "x1,y\n0.5,2\n";
        assert!(matches!(ObservationalDataset::read_csv(missing.as_bytes(), "m"), Err(Error::Parse { column, .. }) if column == "t"));
        let bad_cell = "x1,t,y\n0.5,1,abc\n";
        assert!(matches!(ObservationalDataset::read_csv(bad_cell.as_bytes(), "m"), Err(Error::Parse { row: 1, column, .. }) if column == "y"));
        let ragged = "x1,t,y\n0.5,1,2\n0.5,1\n";
        assert!(matches!(ObservationalDataset::read_csv(ragged.as_bytes(), "m"), Err(Error::Parse { row: 2, .. })));
        let partial_gt = "x1,t,y,gt_y0\n0.5,1,2,1\n";
        assert!(ObservationalDataset::read_csv(partial_gt.as_bytes(), "m").is_err());
    }

    #[test]
    fn split_proportions() {
        let s = split(100, 7).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (20, 16, 64));
        let s = split(5, 7).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (1, 0, 4));
        assert_eq!(split(100, 7).unwrap(), split(100, 7).unwrap());
        assert!(split(4, 1).is_err());
    }

    #[test]
    fn tiny_arm_is_sampled_with_replacement() {
        let ds = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (batch, rows) = sample_arm_batch(&ds, &[0, 1], Arm::Control, 3, &mut rng).unwrap();
        assert_eq!(rows, vec![1, 1, 1]);
        assert_eq!(batch.y, array![-0.25, -0.25, -0.25]);
        let err = sample_arm_batch(&ds, &[0], Arm::Control, 2, &mut rng).unwrap_err();
        assert!(err.to_string().contains("control"));
    }

    #[test]
    fn full_size_batch_is_permutation_and_replayable() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let t: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let ds = ObservationalDataset::new(x, t, Array1::zeros(n), ObservationalDataset::default_names(1), None).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let treated = ds.arm_members(&all, Arm::Treated);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, mut rows) = sample_arm_batch(&ds, &all, Arm::Treated, treated.len(), &mut rng).unwrap();
        rows.sort_unstable();
        assert_eq!(rows, treated);

        let a = sample_arm_batch(&ds, &all, Arm::Control, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_arm_batch(&ds, &all, Arm::Control, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drop_covariates_shrinks_dimension() {
        let ds = tiny();
        let dropped = ds.drop_covariates(&["x1".to_string()]).unwrap();
        assert_eq!(dropped.covariate_names, vec!["x2".to_string()]);
        assert_eq!(dropped.x.column(0), ds.x.column(1));
        assert!(ds.drop_covariates(&["nope".to_string()]).is_err());
    }
}
