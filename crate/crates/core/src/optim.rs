//! Small derivative-free simplex descent (Nelder-Mead) used by the fiber
//! compensation search. Three parameters, exact objectives, no gradients.

/// Outcome of one simplex run.
#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimize `f` starting from `start`, spending at most `max_evals` calls.
///
/// Stops early when the simplex collapses below `1e-12` in both parameter
/// spread and value spread.
pub fn nelder_mead<F>(f: &mut F, start: &[f64], step: f64, max_evals: usize) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), eval(start, &mut evals)));
    for k in 0..dim {
        let mut v = start.to_vec();
        v[k] += step;
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[dim].1 - simplex[0].1;
        let width: f64 = (0..dim)
            .map(|k| {
                let vals: Vec<f64> = simplex.iter().map(|(v, _)| v[k]).collect();
                vals.iter().cloned().fold(f64::MIN, f64::max)
                    - vals.iter().cloned().fold(f64::MAX, f64::min)
            })
            .fold(0.0, f64::max);
        if spread.abs() < 1e-12 && width < 1e-12 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(v, _)| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();

        let reflect: Vec<f64> = (0..dim)
            .map(|k| centroid[k] + alpha * (centroid[k] - worst.0[k]))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + gamma * (reflect[k] - centroid[k]))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            simplex[dim] = if f_expand < f_reflect { (expand, f_expand) } else { (reflect, f_reflect) };
        } else if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + rho * (worst.0[k] - centroid[k]))
                .collect();
            let f_contract = eval(&contract, &mut evals);
            if f_contract < worst.1 {
                simplex[dim] = (contract, f_contract);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for k in 0..dim {
                        entry.0[k] = best[k] + sigma * (entry.0[k] - best[k]);
                    }
                    entry.1 = eval(&entry.0.clone(), &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    SimplexResult { best: simplex[0].0.clone(), value: simplex[0].1, evaluations: evals }
}
