//! Plugs a user-defined problem into the optimizers: decentralized robust
//! mean estimation with a Huber loss, sampled one data point at a time.
//!
//! cargo run --example custom_oracle

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stpp::optimizers::{metrics, Algorithm, Optimizer};
use stpp::oracles::Oracle;
use stpp::topology::gen_static_exponential;

const DELTA: f64 = 1.0;

struct HuberMean {
    points: Vec<Vec<Array1<f64>>>,
}

fn huber_grad(r: f64) -> f64 {
    r.clamp(-DELTA, DELTA)
}

fn huber(r: f64) -> f64 {
    if r.abs() <= DELTA {
        0.5 * r * r
    } else {
        DELTA * (r.abs() - 0.5 * DELTA)
    }
}

impl Oracle for HuberMean {
    fn agents(&self) -> usize {
        self.points.len()
    }

    fn dim(&self) -> usize {
        self.points[0][0].len()
    }

    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let pts = &self.points[agent];
        pts.iter()
            .map(|a| x.iter().zip(a).map(|(xi, ai)| huber(xi - ai)).sum::<f64>())
            .sum::<f64>()
            / pts.len() as f64
    }

    fn local_gradient(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let pts = &self.points[agent];
        let mut g = Array1::zeros(x.len());
        for a in pts {
            g += &Array1::from_shape_fn(x.len(), |j| huber_grad(x[j] - a[j]));
        }
        g / pts.len() as f64
    }

    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        rng: &mut ChaCha8Rng,
    ) -> Array1<f64> {
        let pts = &self.points[agent];
        let a = &pts[rng.random_range(0..pts.len())];
        Array1::from_shape_fn(x.len(), |j| huber_grad(x[j] - a[j]))
    }

    fn smoothness(&self) -> f64 {
        1.0
    }
}

fn main() -> stpp::Result<()> {
    let n = 16;
    let points = (0..n)
        .map(|i| {
            (0..50)
                .map(|k| Array1::from(vec![i as f64 * 0.1 + (k % 5) as f64, -1.0 + (k % 3) as f64]))
                .collect()
        })
        .collect();
    let problem = HuberMean { points };
    let g = gen_static_exponential(n)?;
    for alg in Algorithm::ALL {
        let opt = Optimizer::for_graph(alg, &g, 1)?;
        let mut state = opt.init(&problem, Array1::zeros(2).view(), 7, 0)?;
        let base = if alg == Algorithm::Stpp {
            0.2 / n as f64
        } else {
            0.2
        };
        for t in 0..3000u64 {
            opt.step(&mut state, base / (1.0 + t as f64 / 500.0), &problem)?;
        }
        let m = metrics(&state, &problem);
        let x = state.x.row(0);
        println!(
            "{:<12} x_root = ({:.3}, {:.3})  ||grad||^2 = {:.3e}",
            alg.name(),
            x[0],
            x[1],
            m.grad_norm_sq_root
        );
    }
    Ok(())
}
