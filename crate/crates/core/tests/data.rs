//! Invariants of windowing, resampling and splitting.

use proptest::prelude::*;
use trajclass::data::{
    class_weights, filter_short, histogram, ros, rus, split, window, AgentKind, Trajectory, TrajectoryPoint,
    WindowSample,
};

fn samples_from(counts: &[usize]) -> Vec<WindowSample> {
    let mut out = Vec::new();
    for (k, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let id = out.len();
            out.push(WindowSample {
                states: vec![[id as f64, k as f64, i as f64, 0.0]; 5],
                label: k,
                agent_id: format!("a{id}"),
                end_frame: id as u64,
            });
        }
    }
    out
}

fn trajectory(labels: &[usize]) -> Trajectory {
    Trajectory {
        agent_id: "t".into(),
        kind: AgentKind::Rider,
        points: labels
            .iter()
            .enumerate()
            .map(|(f, &label)| TrajectoryPoint {
                x: f as f64,
                y: -(f as f64),
                z: 0.0,
                d: 0.1,
                label,
                frame: f as u64,
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn windows_count_and_last_label(labels in prop::collection::vec(0usize..4, 5..60)) {
        let t = trajectory(&labels);
        let w = window(&t, 5, 1).unwrap();
        prop_assert_eq!(w.len(), labels.len() - 4);
        for (i, s) in w.iter().enumerate() {
            prop_assert_eq!(s.label, labels[i + 4]);
            prop_assert_eq!(s.end_frame, (i + 4) as u64);
            prop_assert_eq!(s.states[0][0], i as f64);
        }
    }

    #[test]
    fn short_trajectories_are_dropped(lens in prop::collection::vec(1usize..12, 0..20)) {
        let trajs: Vec<Trajectory> = lens.iter().map(|&n| trajectory(&vec![0; n])).collect();
        let kept = filter_short(&trajs, 7);
        prop_assert_eq!(kept.len(), lens.iter().filter(|&&n| n >= 7).count());
    }

    #[test]
    fn ros_is_flat_and_keeps_originals(counts in prop::collection::vec(1usize..40, 2..7), seed in any::<u64>()) {
        let data = samples_from(&counts);
        let out = ros(&data, counts.len(), seed).unwrap();
        let max = *counts.iter().max().unwrap();
        prop_assert!(histogram(&out, counts.len()).unwrap().iter().all(|&n| n == max));
        prop_assert_eq!(&out[..data.len()], &data[..]);
        for dup in &out[data.len()..] {
            prop_assert!(data.contains(dup));
        }
    }

    #[test]
    fn rus_is_flat_subset(counts in prop::collection::vec(1usize..40, 2..7), seed in any::<u64>()) {
        let data = samples_from(&counts);
        let out = rus(&data, counts.len(), seed).unwrap();
        let min = *counts.iter().min().unwrap();
        prop_assert!(histogram(&out, counts.len()).unwrap().iter().all(|&n| n == min));
        let mut ids: Vec<&str> = out.iter().map(|s| s.agent_id.as_str()).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), out.len());
        prop_assert!(out.iter().all(|s| data.contains(s)));
    }

    #[test]
    fn weights_equalize_class_mass(counts in prop::collection::vec(1usize..40, 2..7)) {
        let data = samples_from(&counts);
        let w = class_weights(&data, counts.len()).unwrap();
        let mass: Vec<f64> = counts.iter().zip(&w).map(|(&n, w)| n as f64 * w).collect();
        for m in &mass {
            prop_assert!((m - mass[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn split_partitions_every_class(counts in prop::collection::vec(2usize..40, 2..6), seed in any::<u64>()) {
        let data = samples_from(&counts);
        let names: Vec<String> = (0..counts.len()).map(|k| format!("c{k}")).collect();
        let s = split(&data, &names, 0.8, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.test.len(), data.len());
        let tr = histogram(&s.train, counts.len()).unwrap();
        let te = histogram(&s.test, counts.len()).unwrap();
        for k in 0..counts.len() {
            prop_assert_eq!(tr[k] + te[k], counts[k]);
        }
        for x in &s.test {
            prop_assert!(!s.train.contains(x));
        }
    }
}
