//! Searches the insurance generator's feature distributions so that the
//! fixed trees reach their target rates and FIFs, then prints the result.
//!
//! Run with `cargo run --release -p fifaudit --example calibrate`.

use fifaudit::classifier::build_fixed_tree;
use fifaudit::dataset::synthetic::{
    generate_insurance_example, insurance_schema, InsuranceParams, TruncatedNormal, EXAMPLE_SEED as SEED,
};
use fifaudit::fif::{fif_statistical_parity, FifOptions};
use fifaudit::metrics::statistical_parity;
use fifaudit::TreeNode;

const N: usize = 500;

struct Eval {
    sp1: f64,
    sp2: f64,
    rates1: (f64, f64),
    rates2: (f64, f64),
    fitness: f64,
    income: f64,
    joint: f64,
}

fn evaluate(p: &InsuranceParams) -> Eval {
    evaluate_seed(p, SEED)
}

fn evaluate_seed(p: &InsuranceParams, seed: u64) -> Eval {
    let schema = insurance_schema();
    let dt1 = build_fixed_tree(&TreeNode::dt1(), &schema).unwrap();
    let dt2 = build_fixed_tree(&TreeNode::dt2(), &schema).unwrap();
    let d = generate_insurance_example(N, p, seed);
    let m1 = statistical_parity(&dt1, &d).unwrap();
    let m2 = statistical_parity(&dt2, &d).unwrap();
    let r = fif_statistical_parity(&dt1, &d, 2, &FifOptions::default()).unwrap();
    Eval {
        sp1: m1.value,
        sp2: m2.value,
        rates1: (m1.p_max(), m1.p_min()),
        rates2: (m2.p_max(), m2.p_min()),
        fitness: r.w_of(&["fitness"]).unwrap(),
        income: r.w_of(&["income"]).unwrap(),
        joint: r.w_of(&["income", "fitness"]).unwrap(),
    }
}

fn loss(e: &Eval) -> f64 {
    let sq = |x: f64| x * x;
    4.0 * sq(e.rates1.0 - 0.704)
        + 4.0 * sq(e.rates1.1 - 0.172)
        + 4.0 * sq(e.rates2.0 - 0.71)
        + 4.0 * sq(e.rates2.1 - 0.70)
        + sq(e.fitness - 0.74)
        + sq(e.income + 0.33)
        + sq(e.joint - 0.05)
}

fn to_vec(p: &InsuranceParams) -> [f64; 8] {
    [
        p.young_income.mean,
        p.young_income.sd,
        p.young_fitness.mean,
        p.young_fitness.sd,
        p.elderly_income.mean,
        p.elderly_income.sd,
        p.elderly_fitness.mean,
        p.elderly_fitness.sd,
    ]
}

fn from_vec(v: &[f64; 8], base: &InsuranceParams) -> InsuranceParams {
    InsuranceParams {
        young_income: TruncatedNormal::new(v[0], v[1].max(0.02)),
        young_fitness: TruncatedNormal::new(v[2], v[3].max(0.02)),
        elderly_income: TruncatedNormal::new(v[4], v[5].max(0.02)),
        elderly_fitness: TruncatedNormal::new(v[6], v[7].max(0.02)),
        label: base.label,
    }
}

fn main() {
    let base = InsuranceParams::default();
    let mut v = to_vec(&base);
    let mut best = loss(&evaluate(&base));
    let mut step = 0.02;
    while step > 0.0005 {
        let mut improved = false;
        for i in 0..8 {
            for dir in [1.0, -1.0] {
                let mut c = v;
                c[i] += dir * step;
                let l = loss(&evaluate(&from_vec(&c, &base)));
                if l < best {
                    best = l;
                    v = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    let p = from_vec(&v, &base);
    let e = evaluate(&p);
    println!("params: {v:.4?}");
    println!(
        "DT1 rates {:.4}/{:.4} sp {:.4}; DT2 rates {:.4}/{:.4} sp {:.4}",
        e.rates1.0, e.rates1.1, e.sp1, e.rates2.0, e.rates2.1, e.sp2
    );
    println!(
        "FIF fitness {:.4} income {:.4} joint {:.4}",
        e.fitness, e.income, e.joint
    );
    for seed in 1..=8 {
        let e = evaluate_seed(&p, seed);
        println!(
            "seed {seed}: sp {:.4} / {:.4}, FIF {:.4} {:.4} {:.4}",
            e.sp1, e.sp2, e.fitness, e.income, e.joint
        );
    }
}
