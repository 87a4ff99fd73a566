use num_bigint::BigInt;
use num_rational::BigRational;
use oagd::corpus::generate;
use oagd::dichotomy::build_chi;
use oagd::model::GroundModel;
use oagd::qe::{eliminate_quantifiers, formula_to_defset};
use std::collections::BTreeMap;
use std::time::Instant;

fn size(f: &oagd::formula::Formula) -> usize {
    format!("{f}").len()
}

fn main() {
    let z = GroundModel::discrete();
    let corpus = generate(&z, 0xD5, 50, &["x", "z"]);
    for (i, phi) in corpus.iter().enumerate() {
        let t0 = Instant::now();
        let (chi, y) = build_chi(phi, "x", &z).unwrap();
        let phi_qf = eliminate_quantifiers(phi, &z);
        let t1 = Instant::now();
        let chi_qf = eliminate_quantifiers(&chi, &z);
        let t2 = Instant::now();
        let mut tc = std::time::Duration::ZERO;
        for c in -50..=50i64 {
            let mut params = BTreeMap::new();
            params.insert("z".to_string(), BigRational::from_integer(BigInt::from(c)));
            let tq = Instant::now();
            let _ = formula_to_defset(&phi_qf, "x", &params, &z).unwrap();
            let _ = formula_to_defset(&chi_qf, &y, &params, &z).unwrap();
            tc += tq.elapsed();
        }
        println!(
            "{i:2} phi_qe={:?} chi_qe={:?} chi_size={} perc={:?}",
            t1 - t0,
            t2 - t1,
            size(&chi_qf),
            tc
        );
    }
}
