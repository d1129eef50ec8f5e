use fop_core::dataio::{make_trials, EmbeddingBank, LabelRow, LabelTable, Modality, Split, Stratify, Subset};
use fop_core::evalsuite::RocCurve;
use fop_core::losses::{ce_loss, center_loss, contrastive_loss_all, git_loss, joint_loss, triplet_loss_all, OcReduction};
use fop_core::{Matrix, Rng};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn permuted(m: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    m.select_rows(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bank_text_round_trip_is_bit_exact(
        rows in 1usize..12,
        dim in 1usize..6,
        seed in any::<u64>(),
        scale in prop::sample::select(vec![1e-300, 1e-8, 1.0, 1e8, 1e300]),
    ) {
        let mut rng = Rng::new(seed);
        let m = Matrix::from_fn(rows, dim, |_, _| rng.normal() * scale);
        let ids = (0..rows).map(|i| format!("x{i}")).collect();
        let bank = EmbeddingBank::new(Modality::Voice, ids, m).unwrap();
        let back = EmbeddingBank::from_text("mem", &bank.to_text()).unwrap();
        let bits = |b: &EmbeddingBank| b.vectors().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&bank));
        prop_assert_eq!(back.ids(), bank.ids());
    }

    #[test]
    fn batch_losses_ignore_row_order(seed in any::<u64>(), b in 3usize..10) {
        let mut rng = Rng::new(seed);
        let c = 3;
        let labels: Vec<usize> = (0..b).map(|i| i % c).collect();
        let l = Matrix::from_fn(b, 4, |_, _| rng.normal());
        let v = Matrix::from_fn(b, 4, |_, _| rng.normal());
        let logits = Matrix::from_fn(b, c, |_, _| rng.normal());
        let centers = Matrix::from_fn(c, 4, |_, _| rng.normal());
        let mut perm: Vec<usize> = (0..b).collect();
        rng.shuffle(&mut perm);
        let py: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let (pl, pv, plog) = (permuted(&l, &perm), permuted(&v, &perm), permuted(&logits, &perm));
        let pairs = [
            (ce_loss(&logits, &labels).unwrap().value, ce_loss(&plog, &py).unwrap().value),
            (
                joint_loss(&logits, &l, &labels, 1.0, OcReduction::Mean).unwrap().value,
                joint_loss(&plog, &pl, &py, 1.0, OcReduction::Mean).unwrap().value,
            ),
            (
                center_loss(&l, &labels, &centers, 0.5).unwrap().loss.value,
                center_loss(&pl, &py, &centers, 0.5).unwrap().loss.value,
            ),
            (
                git_loss(&l, &labels, &centers, 0.5, 0.1).unwrap().loss.value,
                git_loss(&pl, &py, &centers, 0.5, 0.1).unwrap().loss.value,
            ),
            (
                contrastive_loss_all(&l, &v, &labels, 0.5).unwrap().value,
                contrastive_loss_all(&pl, &pv, &py, 0.5).unwrap().value,
            ),
            (
                triplet_loss_all(&l, &v, &labels, 0.3).unwrap().value,
                triplet_loss_all(&pl, &pv, &py, 0.3).unwrap().value,
            ),
        ];
        for (k, (a, p)) in pairs.iter().enumerate() {
            prop_assert!((a - p).abs() <= 1e-12 * (1.0 + a.abs()), "loss {}: {} vs {}", k, a, p);
        }
        // Center updates are per class, so they commute with row order too.
        let c1 = center_loss(&l, &labels, &centers, 0.5).unwrap().centers;
        let c2 = center_loss(&pl, &py, &centers, 0.5).unwrap().centers;
        for (x, y) in c1.data().iter().zip(c2.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn roc_rates_are_monotone_with_endpoints(seed in any::<u64>(), n in 2usize..200) {
        let mut rng = Rng::new(seed);
        let mut trials: Vec<(f64, bool)> = (0..n).map(|_| ((rng.normal() * 3.0).round(), rng.uniform() < 0.5)).collect();
        trials[0].1 = true;
        trials[1].1 = false;
        let curve = RocCurve::from_scores(&trials).unwrap();
        let pts = &curve.points;
        prop_assert_eq!((pts[0].far, pts[0].frr), (1.0, 0.0));
        let last = pts.last().unwrap();
        prop_assert_eq!((last.far, last.frr), (0.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
        }
    }

    #[test]
    fn stratified_negatives_share_the_attribute(seed in any::<u64>(), n_ids in 4usize..16) {
        let mut rng = Rng::new(seed);
        let attrs = [["m", "f"].as_slice(), ["us", "uk", "in"].as_slice(), ["20s", "40s"].as_slice()];
        let mut rows = Vec::new();
        let mut splits = BTreeMap::new();
        let (mut fids, mut vids) = (Vec::new(), Vec::new());
        for c in 0..n_ids {
            let id = format!("p{c}");
            let pick: Vec<String> = attrs.iter().map(|a| a[rng.below(a.len())].to_string()).collect();
            splits.insert(id.clone(), Split::TestUnseen);
            for (kind, list) in [("f", &mut fids), ("v", &mut vids)] {
                for s in 0..2 {
                    let inst = format!("{id}_{kind}{s}");
                    rows.push(LabelRow {
                        instance_id: inst.clone(),
                        identity: id.clone(),
                        gender: pick[0].clone(),
                        nationality: pick[1].clone(),
                        age_bucket: pick[2].clone(),
                    });
                    list.push(inst);
                }
            }
        }
        let labels = LabelTable::new(rows, splits).unwrap();
        let bank = |m, ids: Vec<String>| {
            let n = ids.len();
            EmbeddingBank::new(m, ids, Matrix::from_fn(n, 2, |i, j| (i + j) as f64)).unwrap()
        };
        let faces = bank(Modality::Face, fids);
        let voices = bank(Modality::Voice, vids);
        for stratum in Stratify::ALL {
            let Ok(set) = make_trials(&faces, &voices, &labels, Subset::TestUnseen, stratum, 2, &mut rng) else { continue };
            for t in set.trials.iter().filter(|t| !t.same) {
                let (a, b) = (labels.row(&t.face).unwrap(), labels.row(&t.voice).unwrap());
                prop_assert_ne!(&a.identity, &b.identity);
                let ok = match stratum {
                    Stratify::None => true,
                    Stratify::Gender => a.gender == b.gender,
                    Stratify::Nationality => a.nationality == b.nationality,
                    Stratify::Age => a.age_bucket == b.age_bucket,
                    Stratify::All => a.gender == b.gender && a.nationality == b.nationality && a.age_bucket == b.age_bucket,
                };
                prop_assert!(ok, "{} negative {} / {}", stratum, t.face, t.voice);
            }
            for t in set.trials.iter().filter(|t| t.same) {
                prop_assert_eq!(labels.identity_of(&t.face), labels.identity_of(&t.voice));
            }
        }
    }
}
