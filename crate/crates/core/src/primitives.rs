//! Incremental over-segmentation of Gaussians into primitives, and the
//! per-primitive task distribution fed to the clustering stage.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::relevance::UpdateOutcome;
use crate::state::MapState;
use crate::types::Primitive;

/// One mask's association set for the current frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSet {
    pub mask_id: u64,
    pub gaussian_ids: Vec<u64>,
    pub outcome: UpdateOutcome,
}

/// Applies one frame's association sets, in order.
///
/// For each accepted set, unassigned Gaussians start a new primitive. An
/// already assigned Gaussian stays where it is when its primitive is smaller
/// than the set, and otherwise moves into the new primitive. Sizes are read
/// before the set is applied. Primitives emptied by moves are deleted.
///
/// Returns the ids of surviving primitives that were created or changed.
pub fn assign_primitives(state: &mut MapState, frame_sets: &[FrameSet]) -> Result<Vec<u64>> {
    let mut touched = BTreeSet::new();
    for set in frame_sets {
        if set.outcome.is_rejected() || set.gaussian_ids.is_empty() {
            continue;
        }
        let set_len = set.gaussian_ids.len();
        let mut joining = Vec::new();
        let mut moves: Vec<(u64, u64)> = Vec::new();
        for &gid in &set.gaussian_ids {
            let record = state.gaussian(gid).ok_or(Error::UnknownGaussian(gid))?;
            match record.primitive_id {
                None => joining.push(gid),
                Some(pid) => {
                    let current = state.primitives.get(&pid).map_or(0, Primitive::len);
                    if current >= set_len {
                        joining.push(gid);
                        moves.push((gid, pid));
                    }
                }
            }
        }
        if joining.is_empty() {
            continue;
        }
        let new_id = state.next_primitive_id;
        state.next_primitive_id += 1;
        for (gid, old) in moves {
            let emptied = match state.primitives.get_mut(&old) {
                Some(prim) => {
                    prim.gaussian_ids.remove(&gid);
                    prim.is_empty()
                }
                None => false,
            };
            if emptied {
                state.primitives.remove(&old);
                touched.remove(&old);
            } else {
                touched.insert(old);
            }
        }
        for &gid in &joining {
            if let Some(record) = state.record_by_id_mut(gid) {
                record.primitive_id = Some(new_id);
            }
        }
        state.primitives.insert(
            new_id,
            Primitive {
                id: new_id,
                gaussian_ids: joining.into_iter().collect(),
            },
        );
        touched.insert(new_id);
    }
    Ok(touched.into_iter().collect())
}

/// Normalised distribution over the T tasks plus a trailing null task.
///
/// Task entries are the unweighted mean of member posteriors; the null entry is
/// the probability that no task is relevant, treating tasks as independent.
pub fn distribution_from_posteriors<'a>(posteriors: impl IntoIterator<Item = &'a [f64]>, task_count: usize) -> Option<Vec<f64>> {
    let mut raw = vec![0.0; task_count + 1];
    let mut n = 0usize;
    for posterior in posteriors {
        for (r, p) in raw.iter_mut().zip(posterior) {
            *r += p;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    for r in &mut raw[..task_count] {
        *r /= n as f64;
    }
    raw[task_count] = raw[..task_count].iter().map(|p| 1.0 - p).product();
    let total: f64 = raw.iter().sum();
    for r in &mut raw {
        *r /= total;
    }
    Some(raw)
}

/// Task distribution p(y | x) of one primitive.
pub fn primitive_distribution(state: &MapState, primitive_id: u64) -> Result<Vec<f64>> {
    let prim = state
        .primitive(primitive_id)
        .ok_or(Error::EmptyPrimitive(primitive_id))?;
    let posteriors = prim
        .gaussian_ids
        .iter()
        .filter_map(|id| state.gaussian(*id))
        .map(|g| g.posterior.as_slice());
    distribution_from_posteriors(posteriors, state.task_count()).ok_or(Error::EmptyPrimitive(primitive_id))
}

/// Current Gaussian → primitive map, for diagnostics and footprint accounting.
pub fn assignment_map(state: &MapState) -> HashMap<u64, u64> {
    state
        .primitives()
        .flat_map(|p| p.gaussian_ids.iter().map(move |&g| (g, p.id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PipelineConfig;
    use crate::types::{TaskList, Vec3};
    use approx::assert_relative_eq;

    fn state(n: u64, tasks: usize) -> MapState {
        let names: Vec<String> = (0..tasks).map(|i| format!("task {i}")).collect();
        MapState::new(
            (0..n).map(|i| (i, Vec3::new(i as f64, 0.0, 0.0))),
            TaskList::new(names).unwrap(),
            &PipelineConfig::default(),
        )
        .unwrap()
    }

    fn accepted(mask_id: u64, ids: impl IntoIterator<Item = u64>) -> FrameSet {
        FrameSet {
            mask_id,
            gaussian_ids: ids.into_iter().collect(),
            outcome: UpdateOutcome::Accepted,
        }
    }

    #[test]
    fn first_mask_creates_one_primitive() {
        let mut s = state(10, 1);
        let touched = assign_primitives(&mut s, &[accepted(0, 0..10)]).unwrap();
        assert_eq!(touched, vec![0]);
        assert_eq!(s.primitive(0).unwrap().len(), 10);
        s.check_partition().unwrap();
    }

    #[test]
    fn smaller_primitive_keeps_its_members() {
        let mut s = state(10, 1);
        assign_primitives(&mut s, &[accepted(0, [0, 1, 2])]).unwrap();
        // gaussian 0 sits in a primitive of size 3 < 5, so it stays.
        assign_primitives(&mut s, &[accepted(1, [0, 5, 6, 7, 8])]).unwrap();
        assert_eq!(s.gaussian(0).unwrap().primitive_id, Some(0));
        let newest = s.primitive(1).unwrap();
        assert_eq!(newest.gaussian_ids.iter().copied().collect::<Vec<_>>(), vec![5, 6, 7, 8]);
        s.check_partition().unwrap();
    }

    #[test]
    fn larger_primitive_loses_members_and_empty_ones_vanish() {
        let mut s = state(10, 1);
        assign_primitives(&mut s, &[accepted(0, 0..6)]).unwrap();
        assign_primitives(&mut s, &[accepted(1, [0, 1, 2])]).unwrap();
        assert_eq!(s.gaussian(0).unwrap().primitive_id, Some(1));
        assert_eq!(s.primitive(0).unwrap().len(), 3);
        assign_primitives(&mut s, &[accepted(2, [3, 4, 5])]).unwrap();
        assert!(s.primitive(0).is_none());
        assert_eq!(s.primitive(2).unwrap().len(), 3);
        s.check_partition().unwrap();
    }

    #[test]
    fn rejected_masks_are_skipped() {
        let mut s = state(4, 1);
        let set = FrameSet {
            mask_id: 0,
            gaussian_ids: vec![0, 1],
            outcome: UpdateOutcome::RejectedAsOutlier,
        };
        assert!(assign_primitives(&mut s, &[set]).unwrap().is_empty());
        assert_eq!(s.primitive_count(), 0);
    }

    #[test]
    fn unknown_gaussian_is_an_error() {
        let mut s = state(4, 1);
        assert!(matches!(
            assign_primitives(&mut s, &[accepted(0, [99])]),
            Err(Error::UnknownGaussian(99))
        ));
    }

    #[test]
    fn distribution_examples() {
        let d = distribution_from_posteriors([&[0.05][..]], 1).unwrap();
        assert_relative_eq!(d[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(d[1], 0.95, epsilon = 1e-15);

        let d = distribution_from_posteriors([&[1.0 - 1e-6][..], &[1e-6][..]], 1).unwrap();
        assert_relative_eq!(d[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(d[1], 0.5, epsilon = 1e-9);

        let d = distribution_from_posteriors([&[0.05, 0.05][..]], 2).unwrap();
        let total = 0.05 + 0.05 + 0.9025;
        assert_relative_eq!(d[0], 0.05 / total, epsilon = 1e-15);
        assert_relative_eq!(d[2], 0.9025 / total, epsilon = 1e-15);
        assert!((d[0] - 0.0499).abs() < 1e-4 && (d[2] - 0.9002).abs() < 1e-4);
    }

    #[test]
    fn distribution_of_primitive_in_state() {
        let mut s = state(3, 2);
        assign_primitives(&mut s, &[accepted(0, 0..3)]).unwrap();
        let d = primitive_distribution(&s, 0).unwrap();
        assert_eq!(d.len(), 3);
        assert_relative_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(primitive_distribution(&s, 7).is_err());
    }
}
