//! Bounded Nelder–Mead minimization.
//!
//! Trial points are projected onto the box. After the simplex converges it is rebuilt
//! around the best vertex and the search repeated until a rebuild brings no
//! improvement, which guards against collapsed simplices.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iterations: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub initial_step: f64,
    pub max_rebuilds: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            ftol: 1e-10,
            xtol: 1e-8,
            initial_step: 0.25,
            max_rebuilds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Objective<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` from `x0` inside `bounds`. Non-finite values count as `+inf`.
pub fn minimize<F>(f: F, x0: &[f64], bounds: &Bounds, config: &NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut obj = Objective { f, evaluations: 0 };
    let mut start = x0.to_vec();
    bounds.project(&mut start);
    let mut best_f = obj.call(&start);
    let mut iterations = 0;
    let mut converged = false;
    let mut step = config.initial_step;

    for _ in 0..=config.max_rebuilds {
        let budget = config.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            break;
        }
        let run = simplex_search(&mut obj, &start, step, bounds, config, budget);
        iterations += run.iterations;
        let improved = best_f - run.f > config.ftol * (1.0 + run.f.abs());
        if run.f <= best_f {
            best_f = run.f;
            start = run.x;
        }
        converged = run.converged;
        if !improved && run.converged {
            break;
        }
        step = (step * 0.5).max(1e3 * config.xtol);
    }

    Minimum {
        x: start,
        f: best_f,
        iterations,
        evaluations: obj.evaluations,
        converged,
    }
}

struct Run {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn simplex_search<F: FnMut(&[f64]) -> f64>(
    obj: &mut Objective<F>,
    x0: &[f64],
    step: f64,
    bounds: &Bounds,
    config: &NelderMeadConfig,
    budget: usize,
) -> Run {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        // Step away from the nearer bound so the vertex stays distinct after projection.
        let room_up = bounds.upper[i] - x0[i];
        let room_down = x0[i] - bounds.lower[i];
        v[i] += if room_up >= room_down { step.min(room_up) } else { -step.min(room_down) };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj.call(v)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut converged = false;

    let mut trial = vec![0.0; n];
    let mut centroid = vec![0.0; n];

    while iterations < budget {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = values[worst] - values[best];
        let scale = simplex[best].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x_spread = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0f64, f64::max);
        if f_spread <= config.ftol * (1.0 + values[best].abs()) && x_spread <= config.xtol * (1.0 + scale) {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }

        let point = |coef: f64, out: &mut Vec<f64>| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&simplex[worst]) {
                *o = c + coef * (c - w);
            }
            bounds.project(out);
        };

        point(REFLECT, &mut trial);
        let fr = obj.call(&trial);
        if fr < values[best] {
            let mut expanded = vec![0.0; n];
            point(EXPAND, &mut expanded);
            let fe = obj.call(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        // Outside contraction when the reflection beat the worst vertex, inside otherwise.
        let (coef, reference) = if fr < values[worst] {
            (CONTRACT, fr)
        } else {
            (-CONTRACT, values[worst])
        };
        let mut contracted = vec![0.0; n];
        point(coef, &mut contracted);
        let fc = obj.call(&contracted);
        if fc < reference {
            simplex[worst] = contracted;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                *v = a + SHRINK * (*v - a);
            }
            bounds.project(&mut simplex[i]);
            values[i] = obj.call(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .expect("simplex has vertices");
    Run {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        converged,
    }
}
