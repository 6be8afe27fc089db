use std::path::{Path, PathBuf};

use jsp_vqa::instance::{reference_bits, Fixing, PreparedInstance};
use jsp_vqa::jsp::{evaluate_schedule_cost, ScheduleCost};

fn path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../instances")
        .join(name)
}

fn load(name: &str) -> PreparedInstance {
    PreparedInstance::load(&path(name)).unwrap()
}

#[test]
fn free_variable_counts() {
    for n in [5, 10, 12, 16, 23] {
        let p = load(&format!("jsp20-{n}.json"));
        assert_eq!(p.num_free(), n);
        assert_eq!(p.map.len(), 842);
    }
    let full = load("jsp20.json");
    assert_eq!(full.num_free(), 842);
    assert_eq!(full.map.counts(), (840, 2, 842));
}

#[test]
fn reference_schedule_is_feasible_everywhere() {
    let p = load("jsp20-5.json");
    let Fixing::Reference { schedule, .. } = &p.file.fixing else {
        panic!("reference fixing expected");
    };
    let bits = reference_bits(p.instance(), &p.map, schedule).unwrap();
    let cost = evaluate_schedule_cost(p.instance(), &p.map, &bits).unwrap();
    assert!(cost.is_feasible());
    let full = load("jsp20.json");
    let q = full.qubo.evaluate(&bits).unwrap();
    assert_eq!(ScheduleCost::Feasible(q), cost);
}

#[test]
fn minimizers_decode_to_feasible_schedules() {
    for n in [5, 10, 12, 16] {
        let p = load(&format!("jsp20-{n}.json"));
        let sol = p.fixed.form.brute_force_solve().unwrap();
        let Fixing::Reference { schedule, .. } = &p.file.fixing else {
            panic!("reference fixing expected");
        };
        let reference = reference_bits(p.instance(), &p.map, schedule).unwrap();
        let mut saw_reference = false;
        for &z in &sol.ground_set {
            let bits = p.expand_index(z).unwrap();
            let cost = evaluate_schedule_cost(p.instance(), &p.map, &bits).unwrap();
            assert_eq!(cost, ScheduleCost::Feasible(sol.e_min), "N={n}");
            saw_reference |= bits == reference;
        }
        assert!(saw_reference, "N={n}");
    }
}

#[test]
fn reduced_problem_matches_reduced_qubo() {
    let p = load("jsp20-10.json");
    let problem = p.problem().unwrap();
    for z in 0..1u64 << 10 {
        let q = p.fixed.form.evaluate_index(z);
        assert!((q - problem.diagonal[z as usize]).abs() < 1e-9);
    }
    assert_eq!(problem.lower_bound, 0.0);
}
