use legbench::benchmark::{Algorithm, Condition};
use legbench_py::{method_config, parse_condition};

#[test]
fn conditions_parse() {
    assert_eq!(parse_condition("good").unwrap(), Condition::Good);
    assert_eq!(parse_condition("in_collision").unwrap(), Condition::InCollision);
    assert!(parse_condition("bad").is_err());
}

#[test]
fn method_defaults_and_overrides() {
    let m = method_config("isqp", None, 3).unwrap();
    assert_eq!(m.algorithm, Algorithm::Isqp);
    assert_eq!(m.fraction, 0.8);
    assert_eq!(m.seed, 3);
    assert_eq!(method_config("adam", Some(0.25), 0).unwrap().fraction, 0.25);
    assert!(method_config("sqp", Some(0.5), 0).is_err());
    assert!(method_config("adam", Some(0.0), 0).is_err());
    assert!(method_config("newton", None, 0).is_err());
}
