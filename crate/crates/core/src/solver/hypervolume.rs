use std::cmp::Ordering;

use super::pareto::ParetoSet;
use super::SolverError;
use crate::value::ValueVector;

/// Measure of the union of boxes `[reference, v]` over the front.
///
/// Two objectives use an exact sweep; more objectives slice along the last
/// coordinate and recurse.
pub fn hypervolume(front: &ParetoSet, reference: &ValueVector) -> Result<f64, SolverError> {
    for v in front {
        if v.dim() != reference.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: reference.dim(),
                found: v.dim(),
            });
        }
        if !v.weakly_dominates(reference) {
            return Err(SolverError::InvalidReference {
                reference: reference.clone(),
                member: v.clone(),
            });
        }
    }
    let points: Vec<&[f64]> = front.iter().map(|v| v.as_slice()).collect();
    Ok(volume(&points, reference.as_slice()))
}

fn volume(points: &[&[f64]], reference: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    match reference.len() {
        0 => 0.0,
        1 => points.iter().map(|p| p[0]).fold(reference[0], f64::max) - reference[0],
        2 => sweep_2d(points, reference),
        d => {
            let last = d - 1;
            let mut sorted: Vec<&[f64]> = points.to_vec();
            sorted.sort_by(|a, b| b[last].total_cmp(&a[last]));
            let mut total = 0.0;
            for i in 0..sorted.len() {
                let top = sorted[i][last];
                let bottom = sorted.get(i + 1).map_or(reference[last], |p| p[last]);
                let height = top - bottom;
                if height > 0.0 {
                    let slice: Vec<&[f64]> = sorted[..=i].iter().map(|p| &p[..last]).collect();
                    total += volume(&slice, &reference[..last]) * height;
                }
            }
            total
        }
    }
}

fn sweep_2d(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| match b[0].total_cmp(&a[0]) {
        Ordering::Equal => b[1].total_cmp(&a[1]),
        ord => ord,
    });
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in sorted {
        if p[1] > ceiling {
            area += (p[0] - reference[0]) * (p[1] - ceiling);
            ceiling = p[1];
        }
    }
    area
}

/// Volume each point adds beyond all the others.
pub(crate) fn exclusive_contributions(points: &[ValueVector], reference: &ValueVector) -> Vec<f64> {
    let all: Vec<&[f64]> = points.iter().map(|v| v.as_slice()).collect();
    let total = volume(&all, reference.as_slice());
    (0..points.len())
        .map(|skip| {
            let rest: Vec<&[f64]> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, p)| *p)
                .collect();
            total - volume(&rest, reference.as_slice())
        })
        .collect()
}
