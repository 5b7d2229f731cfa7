mod common;

use pgdm::checkpoint::Checkpoint;
use pgdm::pgvi::{elbo, expected_probs, fit, FitOptions};
use pgdm::rng::SeedTree;
use pgdm::CountMatrix;

#[test]
fn fitted_models_survive_json() {
    let mut rng = SeedTree::new(8).stream("instances");
    for _ in 0..10 {
        let inst = common::random_instance(&mut rng, 10, 5, 40);
        let res =
            fit(&inst.counts, inst.hyper.clone(), &FitOptions { em_enabled: true, ..FitOptions::default() }).unwrap();
        let ck = Checkpoint::new(&res.hyper, &res.posterior, &inst.counts, &res.elbo_trace);
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json().unwrap(), text);

        let (hyper, post, counts) = back.restore().unwrap();
        assert_eq!(counts, inst.counts);
        assert_eq!(expected_probs(&post), expected_probs(&res.posterior));
        // Recomputed from a freshly factorized kernel, so equal up to rounding.
        let (a, b) = (elbo(&post, &hyper).unwrap(), elbo(&res.posterior, &res.hyper).unwrap());
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn count_csv_round_trips_and_checks_ids() {
    let x = CountMatrix::from_rows(&[vec![1, 0, 2], vec![0, 0, 0], vec![7, 3, 1]]).unwrap();
    let csv = x.to_csv();
    assert!(csv.starts_with("covariate_id,k1,k2,k3\n"));
    assert_eq!(CountMatrix::from_csv(&csv).unwrap(), x);
    let shuffled = "covariate_id,k1,k2,k3\n2,7,3,1\n0,1,0,2\n1,0,0,0\n";
    assert_eq!(CountMatrix::from_csv(shuffled).unwrap(), x);
    assert!(CountMatrix::from_csv("covariate_id,k1,k2\n0,1,2\n0,3,4\n").is_err());
    assert!(CountMatrix::from_csv("id,k1,k2\n0,1,2\n").is_err());
    assert!(CountMatrix::from_csv("covariate_id,k1,k2\n0,1,-2\n").is_err());
}
