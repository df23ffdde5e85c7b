use proptest::prelude::*;

use megadapt::container::{read_model, write_model, SavedModel};
use megadapt::corpus::{generate_synthetic, Domain, SynthSpec};
use megadapt::mega::{e_step, predict_mixture, train_cem, DomainData, MegaHyperparams, PI_EPS};
use megadapt::system::TrainedSystem;

fn spec() -> impl Strategy<Value = SynthSpec> {
    (2usize..8, 2usize..4, 3usize..25, 3usize..40, 0.0f64..=1.0, any::<u64>()).prop_map(
        |(features, labels, n_in, n_out, pi_in, seed)| SynthSpec {
            features,
            labels,
            n_in,
            n_out,
            n_test: 10,
            pi_in,
            seed,
            ..Default::default()
        },
    )
}

fn hyper() -> MegaHyperparams {
    MegaHyperparams {
        max_iterations: 3,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_never_lowers_the_objective(spec in spec()) {
        let corpus = generate_synthetic(&spec).unwrap();
        let data = DomainData::from_dataset(&corpus.train);
        let (model, trace) = train_cem(&data, hyper()).unwrap();
        for w in trace.objective.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{:?}", trace.objective);
        }
        for rec in &trace.records {
            prop_assert!(rec.q >= -1e-9 * rec.log_posterior.abs().max(1.0));
        }
        prop_assert!(trace.records.len() <= 3 * trace.iterations());
        prop_assert_eq!(trace.objective.len(), trace.iterations() + 1);
        for d in [Domain::In, Domain::Out] {
            prop_assert!((PI_EPS..=1.0 - PI_EPS).contains(&model.pi(d)));
        }
        for psi in &model.psi {
            prop_assert!(psi.iter().all(|&p| p > 0.0 && p < 1.0));
        }
        model.validate().unwrap();
    }

    #[test]
    fn predictions_and_responsibilities_are_probabilities(spec in spec()) {
        let corpus = generate_synthetic(&spec).unwrap();
        let data = DomainData::from_dataset(&corpus.train);
        let (model, _) = train_cem(&data, hyper()).unwrap();
        let resp = e_step(&model, &data);
        for d in [Domain::In, Domain::Out] {
            prop_assert!(resp.domain(d).h.iter().all(|h| (0.0..=1.0).contains(h)));
        }
        for inst in &corpus.test.instances {
            let p = predict_mixture(&model, &inst.features, inst.domain);
            prop_assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p.p_general));
            prop_assert!(p.distribution[p.label] >= p.distribution.iter().cloned().fold(0.0, f64::max));
        }
    }

    #[test]
    fn saved_models_predict_identically(spec in spec()) {
        let corpus = generate_synthetic(&spec).unwrap();
        let data = DomainData::from_dataset(&corpus.train);
        let (model, trace) = train_cem(&data, hyper()).unwrap();
        let saved = SavedModel::Classifier {
            system: TrainedSystem::Mega { model: model.clone(), trace },
            features: corpus.train.features.clone(),
            labels: corpus.train.labels.clone(),
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &saved).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        let SavedModel::Classifier { system: TrainedSystem::Mega { model: loaded, .. }, .. } = back else {
            panic!("wrong variant");
        };
        for inst in &corpus.test.instances {
            prop_assert_eq!(
                predict_mixture(&model, &inst.features, inst.domain),
                predict_mixture(&loaded, &inst.features, inst.domain)
            );
        }
    }
}
