use std::path::Path;

use proptest::prelude::*;
use rheo::{dataset_csv, model_file};
use rheo_core::experiments::{Dataset, DatasetRow, Family};
use rheo_core::nn::{init_params, Architecture, Normalization};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        (-300i32..300, -1.0f64..1.0).prop_map(|(e, m)| m * 10f64.powi(e)),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(f64::MAX),
    ]
}

fn rows() -> impl Strategy<Value = Vec<DatasetRow>> {
    let family = prop_oneof![
        Just(Family::LandIce),
        Just(Family::SeaIce),
        Just(Family::External)
    ];
    let state = (
        finite(),
        finite(),
        proptest::collection::vec((finite(), finite(), 0.0f64..1e3, finite()), 1..6),
    );
    (family, proptest::collection::vec(state, 1..4)).prop_map(|(family, states)| {
        let mut out = Vec::new();
        for (k, (lambda, forcing, samples)) in states.into_iter().enumerate() {
            for (y, u, gamma_dot, tau) in samples {
                out.push(DatasetRow {
                    state_id: 3 * k,
                    family,
                    lambda,
                    forcing,
                    y,
                    u,
                    gamma_dot,
                    tau,
                });
            }
        }
        out
    })
}

fn same_bits(a: &Dataset, b: &Dataset) -> bool {
    let key = |d: &Dataset| {
        d.rows()
            .iter()
            .map(|r| {
                (
                    r.state_id,
                    r.family,
                    [r.lambda, r.forcing, r.y, r.u, r.gamma_dot, r.tau].map(f64::to_bits),
                )
            })
            .collect::<Vec<_>>()
    };
    key(a) == key(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dataset_csv_round_trips_bit_exactly(rows in rows()) {
        let ds = Dataset::from_rows(&rows).unwrap();
        let text = dataset_csv::to_csv(&ds);
        let back = dataset_csv::parse(Path::new("d.csv"), &text).unwrap();
        prop_assert!(same_bits(&ds, &back));
        prop_assert_eq!(dataset_csv::to_csv(&back), text);
    }

    #[test]
    fn model_file_round_trips_bit_exactly(
        seed in 0u64..1000,
        edits in proptest::collection::vec((0usize..1506, finite()), 0..20),
        g0 in -30.0f64..0.0, span in 0.1f64..30.0, floor in 1e-20f64..1e-3,
        keep_seed in any::<bool>(),
    ) {
        let mut p = init_params(&Architecture::default(), seed)
            .unwrap()
            .with_normalization(Normalization::from_bounds((g0, g0 + span), (0.5, 1.0)));
        for (i, v) in edits {
            p.theta[i] = v;
        }
        p.gamma_floor = floor;
        if !keep_seed {
            p.seed = None;
        }
        let text = model_file::to_text(&p);
        let back = model_file::parse(Path::new("m.txt"), &text).unwrap();
        prop_assert!(back.theta.iter().zip(&p.theta).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.normalization.to_array().map(f64::to_bits), p.normalization.to_array().map(f64::to_bits));
        prop_assert_eq!(back.gamma_floor.to_bits(), p.gamma_floor.to_bits());
        prop_assert_eq!(back.seed, p.seed);
        prop_assert_eq!(model_file::to_text(&back), text);
    }
}
