//! Patients grouped by identical observation weeks.
//!
//! Every patient in a group shares one covariance matrix and one design
//! matrix, so the samplers factorize once per group instead of once per
//! patient.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::data::TrialDataset;
use crate::error::{LgpError, Result};
use crate::gp::{factor, CovMatrix};
use crate::kernel::{KernelKind, KernelParams, LagTable};
use crate::model::design_matrix;

#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub weeks: Vec<u32>,
    pub times: Vec<f64>,
    /// Patient indices per arm.
    pub members: [Vec<usize>; 2],
    /// Full `K × (M+1)` design; lower degrees use its leading columns.
    pub design: DMatrix<f64>,
}

impl Group {
    pub fn k(&self) -> usize {
        self.weeks.len()
    }

    pub fn size(&self) -> usize {
        self.members[0].len() + self.members[1].len()
    }

    pub fn cov_values(&self, table: &LagTable) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |u, v| {
            let lag = self.weeks[u].abs_diff(self.weeks[v]) as usize;
            table.value[lag] + if u == v { table.nugget } else { 0.0 }
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub groups: Vec<Group>,
    pub max_lag: u32,
    pub time_scale: f64,
    /// Week offsets of the longest group, set when every group's offsets are
    /// a prefix of it. Under a stationary kernel each group's covariance is
    /// then a leading block of the reference covariance, so one Cholesky
    /// factor serves them all. Staggered-entry trial data has this shape.
    pub nest: Option<Vec<u32>>,
}

fn offsets(weeks: &[u32]) -> impl Iterator<Item = u32> + '_ {
    weeks.iter().map(move |w| w - weeks[0])
}

fn find_nest(groups: &[Group]) -> Option<Vec<u32>> {
    if groups.len() < 2 {
        return None;
    }
    let longest = groups.iter().max_by_key(|g| g.k())?;
    let reference: Vec<u32> = offsets(&longest.weeks).collect();
    groups
        .iter()
        .all(|g| offsets(&g.weeks).eq(reference[..g.k()].iter().copied()))
        .then_some(reference)
}

impl Layout {
    pub fn new(data: &TrialDataset, max_degree: usize) -> Self {
        let mut index: HashMap<&[u32], usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for (i, p) in data.patients.iter().enumerate() {
            let g = *index.entry(p.weeks.as_slice()).or_insert_with(|| {
                let times = data.times(i);
                groups.push(Group {
                    weeks: p.weeks.clone(),
                    design: design_matrix(&times, max_degree),
                    times,
                    members: [Vec::new(), Vec::new()],
                });
                groups.len() - 1
            });
            groups[g].members[p.arm.index()].push(i);
        }
        let max_lag = groups
            .iter()
            .map(|g| g.weeks.last().unwrap_or(&0) - g.weeks.first().unwrap_or(&0))
            .max()
            .unwrap_or(0);
        Layout {
            nest: find_nest(&groups),
            groups,
            max_lag,
            time_scale: data.time_scale,
        }
    }

    pub fn table(&self, kind: KernelKind, p: &KernelParams, with_grad: bool) -> LagTable {
        LagTable::new(kind, p, self.max_lag, self.time_scale, with_grad)
    }
}

/// Precision of one group's covariance at fixed hyperparameters.
#[derive(Debug, Clone)]
pub(crate) struct GroupFactor {
    pub prec: DMatrix<f64>,
}

/// Inverse Cholesky factor of the reference covariance of a nested layout.
/// Leading `K × K` blocks of `linv` invert the factors of the shorter groups.
pub(crate) struct NestFactor {
    pub linv: DMatrix<f64>,
    /// `logdet[K]` is the log-determinant of the leading `K × K` block.
    pub logdet: Vec<f64>,
}

impl NestFactor {
    pub fn new(reference: &[u32], table: &LagTable) -> Result<NestFactor> {
        let k = reference.len();
        let cov = DMatrix::from_fn(k, k, |u, v| {
            table.value[reference[u].abs_diff(reference[v]) as usize] + if u == v { table.nugget } else { 0.0 }
        });
        let (chol, _) = factor(&cov)?;
        let l = chol.l();
        let mut logdet = vec![0.0; k + 1];
        for i in 0..k {
            logdet[i + 1] = logdet[i] + 2.0 * l[(i, i)].ln();
        }
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| LgpError::Numerical("singular Cholesky factor".into()))?;
        Ok(NestFactor { linv, logdet })
    }

    /// Precision matrices of the leading blocks for each requested size,
    /// accumulated as `P_K = Σ_{i<K} uᵢ uᵢᵀ` over rows `uᵢ` of `L⁻¹`.
    pub fn precisions(&self, sizes: &[usize]) -> HashMap<usize, DMatrix<f64>> {
        let kmax = sizes.iter().copied().max().unwrap_or(0);
        let mut out = HashMap::new();
        let mut p = DMatrix::zeros(kmax, kmax);
        for i in 0..kmax {
            for b in 0..=i {
                let ub = self.linv[(i, b)];
                for a in 0..=i {
                    p[(a, b)] += self.linv[(i, a)] * ub;
                }
            }
            if sizes.contains(&(i + 1)) {
                out.insert(i + 1, p.view((0, 0), (i + 1, i + 1)).clone_owned());
            }
        }
        out
    }
}

pub(crate) fn factorize(layout: &Layout, kind: KernelKind, p: &KernelParams) -> Result<Vec<GroupFactor>> {
    let table = layout.table(kind, p, false);
    if let Some(reference) = &layout.nest {
        let nf = NestFactor::new(reference, &table)?;
        let sizes: Vec<usize> = layout.groups.iter().map(Group::k).collect();
        let precs = nf.precisions(&sizes);
        return Ok(sizes.iter().map(|k| GroupFactor { prec: precs[k].clone() }).collect());
    }
    layout
        .groups
        .iter()
        .map(|g| {
            let cov = CovMatrix::new(g.cov_values(&table))?;
            Ok(GroupFactor { prec: cov.inverse() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Arm, PatientSeries};
    use crate::gp::build_cov;

    #[test]
    fn groups_by_weeks_across_arms() {
        let data = TrialDataset::new(
            vec![
                PatientSeries::new(Arm::Control, "a", vec![1, 2, 3], vec![true, false, true]),
                PatientSeries::new(Arm::Experimental, "b", vec![1, 2, 3], vec![true, true, true]),
                PatientSeries::new(Arm::Control, "c", vec![2, 9], vec![false, true]),
            ],
            35,
        )
        .unwrap();
        let layout = Layout::new(&data, 2);
        assert_eq!(layout.groups.len(), 2);
        assert_eq!(layout.groups[0].members, [vec![0], vec![1]]);
        assert_eq!(layout.groups[1].members, [vec![2], vec![]]);
        assert_eq!(layout.max_lag, 7);
        assert_eq!(layout.groups[1].design.shape(), (2, 3));

        let p = KernelParams::new(0.8, 3.5, 1.7);
        let f = factorize(&layout, KernelKind::Periodic, &p).unwrap();
        let direct = build_cov(&data.times(2), KernelKind::Periodic, &p).unwrap();
        assert!((&f[1].prec - direct.inverse()).amax() < 1e-12);
        let table = layout.table(KernelKind::Periodic, &p, false);
        assert!((layout.groups[1].cov_values(&table) - &direct.values).amax() < 1e-14);
        assert!(layout.nest.is_none());
    }

    fn staggered() -> TrialDataset {
        let patients = (1..=6u32)
            .map(|e| {
                let weeks: Vec<u32> = (e..=9).collect();
                let out = weeks.iter().map(|w| w % 2 == 0).collect();
                PatientSeries::new(if e % 2 == 0 { Arm::Control } else { Arm::Experimental }, format!("p{e}"), weeks, out)
            })
            .collect();
        TrialDataset::new(patients, 35).unwrap()
    }

    #[test]
    fn staggered_entry_is_nested() {
        let data = staggered();
        let mut layout = Layout::new(&data, 2);
        assert_eq!(layout.nest.as_deref(), Some(&[0, 1, 2, 3, 4, 5, 6, 7, 8][..]));
        let p = KernelParams::new(1.2, 2.7, 1.9);
        let nested = factorize(&layout, KernelKind::Periodic, &p).unwrap();
        layout.nest = None;
        let plain = factorize(&layout, KernelKind::Periodic, &p).unwrap();
        for (a, b) in nested.iter().zip(&plain) {
            assert!((&a.prec - &b.prec).amax() < 1e-9 * b.prec.amax());
        }

        let table = layout.table(KernelKind::Periodic, &p, false);
        let nf = NestFactor::new(&[0, 1, 2, 3, 4, 5, 6, 7, 8], &table).unwrap();
        for g in &layout.groups {
            let direct = CovMatrix::new(g.cov_values(&table)).unwrap();
            assert!((nf.logdet[g.k()] - direct.logdet).abs() < 1e-10);
        }
    }

    #[test]
    fn gaps_break_nesting() {
        let data = TrialDataset::new(
            vec![
                PatientSeries::new(Arm::Control, "a", vec![1, 2, 3], vec![true, false, true]),
                PatientSeries::new(Arm::Control, "b", vec![2, 4], vec![true, true]),
            ],
            35,
        )
        .unwrap();
        assert!(Layout::new(&data, 1).nest.is_none());
        // a shifted copy of a prefix pattern still nests
        let data = TrialDataset::new(
            vec![
                PatientSeries::new(Arm::Control, "a", vec![1, 3, 4], vec![true, false, true]),
                PatientSeries::new(Arm::Control, "b", vec![5, 7], vec![true, true]),
            ],
            35,
        )
        .unwrap();
        assert_eq!(Layout::new(&data, 1).nest, Some(vec![0, 2, 3]));
    }
}
