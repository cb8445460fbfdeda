//! Dominance utilities over (time, cost) points.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::ObjectivePoint;

fn lex(a: &ObjectivePoint, b: &ObjectivePoint) -> Ordering {
    a.time.total_cmp(&b.time).then(a.cost.total_cmp(&b.cost))
}

/// Non-dominated subset of `points`, sorted by (time, cost) with duplicates
/// collapsed.
pub fn pareto_front(points: &[ObjectivePoint]) -> Vec<ObjectivePoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(lex);
    sorted.dedup();
    // After the lexicographic sort a point survives iff its cost is strictly
    // below every cost seen so far.
    let mut front: Vec<ObjectivePoint> = Vec::new();
    let mut best_cost = f64::INFINITY;
    for p in sorted {
        if p.cost < best_cost {
            best_cost = p.cost;
            front.push(p);
        }
    }
    front
}

/// Indices of the non-dominated points, in input order.
pub fn nondominated_indices(points: &[ObjectivePoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| q.dominates(&points[i])))
        .collect()
}

/// Fronts of the fast non-dominated sort: rank `r` holds the indices of all
/// points dominated only by points of lower ranks.
pub fn fast_nondominated_sort(points: &[ObjectivePoint]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].dominates(&points[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if points[j].dominates(&points[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Rank of every point (0 = non-dominated).
pub fn ranks(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut rank = vec![0; points.len()];
    for (r, front) in fast_nondominated_sort(points).iter().enumerate() {
        for &i in front {
            rank[i] = r;
        }
    }
    rank
}

/// Crowding distance of each member of `front` (indices into `points`),
/// returned in the order of `front`.
///
/// A point whose value in either objective equals that objective's minimum
/// or maximum over the front is a boundary point and gets `f64::INFINITY`;
/// this makes the result independent of how ties are ordered.
pub fn crowding_distance(points: &[ObjectivePoint], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut distance = vec![0.0; m];
    if m == 0 {
        return distance;
    }
    let objectives: [fn(&ObjectivePoint) -> f64; 2] = [|p| p.time, |p| p.cost];
    for value in objectives {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| value(&points[front[a]]).total_cmp(&value(&points[front[b]])));
        let lo = value(&points[front[order[0]]]);
        let hi = value(&points[front[order[m - 1]]]);
        for (pos, &slot) in order.iter().enumerate() {
            let v = value(&points[front[slot]]);
            if v == lo || v == hi {
                distance[slot] = f64::INFINITY;
            } else {
                let prev = value(&points[front[order[pos - 1]]]);
                let next = value(&points[front[order[pos + 1]]]);
                distance[slot] += (next - prev) / (hi - lo);
            }
        }
    }
    distance
}

/// Area dominated by `points` and bounded by `reference` (both objectives
/// minimized). Points not strictly better than the reference in both
/// objectives contribute nothing.
pub fn hypervolume(points: &[ObjectivePoint], reference: ObjectivePoint) -> f64 {
    let inside: Vec<ObjectivePoint> = points
        .iter()
        .copied()
        .filter(|p| p.time < reference.time && p.cost < reference.cost)
        .collect();
    let front = pareto_front(&inside);
    let mut area = 0.0;
    let mut ceiling = reference.cost;
    for p in &front {
        area += (reference.time - p.time) * (ceiling - p.cost);
        ceiling = p.cost;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<ObjectivePoint> {
        v.iter().map(|&(t, c)| ObjectivePoint::new(t, c)).collect()
    }

    fn quadratic_front(points: &[ObjectivePoint]) -> Vec<ObjectivePoint> {
        let mut out: Vec<ObjectivePoint> = Vec::new();
        for p in points {
            let dominated = points.iter().any(|q| q.dominates(p));
            if !dominated && !out.contains(p) {
                out.push(*p);
            }
        }
        out.sort_by(lex);
        out
    }

    #[test]
    fn front_examples() {
        let p = pts(&[(1.0, 9.0), (2.0, 2.0), (9.0, 1.0), (3.0, 3.0)]);
        assert_eq!(pareto_front(&p), pts(&[(1.0, 9.0), (2.0, 2.0), (9.0, 1.0)]));
        assert_eq!(pareto_front(&pts(&[(4.0, 4.0)])), pts(&[(4.0, 4.0)]));
        assert_eq!(pareto_front(&pts(&[(4.0, 4.0), (4.0, 4.0)])), pts(&[(4.0, 4.0)]));
        assert!(pareto_front(&[]).is_empty());
    }

    #[test]
    fn sort_examples() {
        assert_eq!(ranks(&pts(&[(1.0, 2.0), (2.0, 1.0), (3.0, 3.0)])), vec![0, 0, 1]);
        assert_eq!(ranks(&pts(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])), vec![0, 1, 2]);
    }

    #[test]
    fn identical_points_share_rank_zero_and_are_boundary() {
        let p = pts(&[(5.0, 5.0); 6]);
        let fronts = fast_nondominated_sort(&p);
        assert_eq!(fronts, vec![(0..6).collect::<Vec<_>>()]);
        assert!(crowding_distance(&p, &fronts[0]).iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn crowding_interior_points() {
        let p = pts(&[(0.0, 4.0), (1.0, 3.0), (3.0, 1.0), (4.0, 0.0)]);
        let d = crowding_distance(&p, &[0, 1, 2, 3]);
        assert!(d[0].is_infinite() && d[3].is_infinite());
        assert!((d[1] - 1.5).abs() < 1e-12);
        assert!((d[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_of_staircase() {
        let p = pts(&[(1.0, 3.0), (2.0, 1.0)]);
        // (4-1)*(4-3) + (4-2)*(3-1)
        assert_eq!(hypervolume(&p, ObjectivePoint::new(4.0, 4.0)), 7.0);
        assert_eq!(hypervolume(&p, ObjectivePoint::new(1.0, 1.0)), 0.0);
    }

    fn arb_points(max: usize) -> impl Strategy<Value = Vec<ObjectivePoint>> {
        prop::collection::vec((0u8..30, 0u8..30), 1..max)
            .prop_map(|v| v.into_iter().map(|(t, c)| ObjectivePoint::new(t as f64, c as f64)).collect())
    }

    proptest! {
        #[test]
        fn front_matches_quadratic_scan(points in arb_points(200)) {
            let front = pareto_front(&points);
            prop_assert_eq!(&front, &quadratic_front(&points));
            for a in &front {
                for b in &front {
                    prop_assert!(!a.dominates(b));
                }
            }
        }

        #[test]
        fn rank_zero_is_the_front(points in arb_points(500)) {
            let fronts = fast_nondominated_sort(&points);
            let first: Vec<ObjectivePoint> = fronts[0].iter().map(|&i| points[i]).collect();
            prop_assert_eq!(pareto_front(&first), pareto_front(&points));
            let r = ranks(&points);
            for i in 0..points.len() {
                for j in 0..points.len() {
                    if points[i].dominates(&points[j]) {
                        prop_assert!(r[i] < r[j]);
                    }
                }
            }
        }
    }
}
