//! Draws clusters from the three overdispersed generators and compares the
//! empirical mean and covariance with n p and n rho2-inflated Sigma.
//!
//! cargo run --release --example generators

use clustered_gof::simgen::{gen_cluster, replication_rng, GeneratorKind, GeneratorSpec};
use clustered_gof::ProbabilityVector;

fn main() -> clustered_gof::Result<()> {
    let p = ProbabilityVector::new(vec![0.5, 0.3, 0.2])?;
    let n = 5u64;
    let rho2 = 0.3;
    let draws = 200_000;
    let mut rng = replication_rng(1, 0);
    for kind in GeneratorKind::OVERDISPERSED {
        let spec = GeneratorSpec::new(kind, p.clone(), rho2, n)?;
        let m = p.len();
        let mut sum = vec![0.0; m];
        let mut cross = vec![0.0; m * m];
        for _ in 0..draws {
            let y = gen_cluster(&spec, &mut rng);
            for r in 0..m {
                sum[r] += y[r] as f64;
                for s in 0..m {
                    cross[r * m + s] += (y[r] * y[s]) as f64;
                }
            }
        }
        let d = draws as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / d).collect();
        println!("{kind} (design effect {:.3})", spec.design_effect());
        for r in 0..m {
            let var = cross[r * m + r] / d - mean[r] * mean[r];
            let want = spec.design_effect() * n as f64 * p[r] * (1.0 - p[r]);
            println!(
                "  cell {r}: mean {:.4} (expected {:.4}), variance {:.4} (expected {:.4})",
                mean[r],
                n as f64 * p[r],
                var,
                want
            );
        }
    }
    Ok(())
}
