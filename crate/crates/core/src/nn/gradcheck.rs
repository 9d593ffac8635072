use super::params::{Gradients, ParameterStore};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Absolute error below which a coordinate passes regardless of relative error.
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|)` over
    /// coordinates whose absolute error exceeds the floor.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` returns the loss and its analytic gradient for a parameter store;
/// it is called once at `store` and twice per scalar parameter.
pub fn grad_check<F>(mut loss_fn: F, store: &ParameterStore, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> (f64, Gradients),
{
    let (_, analytic) = loss_fn(store);
    let mut probe = store.clone();
    let mut entries = Vec::with_capacity(store.len());
    for id in store.ids() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut passed = true;
        for k in 0..store.get(id).values.len() {
            let orig = store.get(id).values[k];
            probe.values_mut(id)[k] = orig + FD_STEP;
            let (plus, _) = loss_fn(&probe);
            probe.values_mut(id)[k] = orig - FD_STEP;
            let (minus, _) = loss_fn(&probe);
            probe.values_mut(id)[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(id)[k];
            let abs = (a - numeric).abs();
            max_abs = max_abs.max(abs);
            if !abs.is_finite() {
                passed = false;
                max_rel = f64::INFINITY;
                continue;
            }
            if abs <= FD_ABS_FLOOR {
                continue;
            }
            let rel = abs / a.abs().max(numeric.abs());
            max_rel = max_rel.max(rel);
            if rel > tolerance {
                passed = false;
            }
        }
        entries.push(ParamCheck { name: store.get(id).name.clone(), max_rel_error: max_rel, max_abs_error: max_abs, passed });
    }
    GradCheckReport { tolerance, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let mut s = ParameterStore::new(0);
        let id = s.insert("w", vec![3], vec![0.5, -1.5, 2.0]).unwrap();
        let good = |p: &ParameterStore| {
            let w = &p.get(id).values;
            let mut g = Gradients::zeros_like(p);
            g.get_mut(id).iter_mut().zip(w).for_each(|(g, w)| *g = 2.0 * w);
            (w.iter().map(|v| v * v).sum::<f64>(), g)
        };
        assert!(grad_check(good, &s, 1e-4).passed());
        let bad = |p: &ParameterStore| {
            let w = &p.get(id).values;
            let mut g = Gradients::zeros_like(p);
            g.get_mut(id).iter_mut().zip(w).for_each(|(g, w)| *g = 2.1 * w);
            (w.iter().map(|v| v * v).sum::<f64>(), g)
        };
        let report = grad_check(bad, &s, 1e-4);
        assert!(!report.passed());
        assert!(report.worst().unwrap().max_rel_error > 0.04);
    }
}
