//! Gauss–Legendre rules and a few composite helpers.

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let nf = order as f64;
        for i in 0..(order + 1) / 2 {
            // Tricomi initial guess followed by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Mapped nodes and weights for [a, b], appended to the given buffers.
    pub fn push_mapped(&self, a: f64, b: f64, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            nodes.push(mid + half * x);
            weights.push(w * half);
        }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panels `[0, t 10^-decades], [t 10^-decades, t 10^-(decades-1)], ..., [t/10, t]`.
/// Suited to integrands with an integrable singularity at zero.
pub fn geometric_panels(t: f64, decades: usize) -> Vec<(f64, f64)> {
    let mut panels = Vec::with_capacity(decades + 1);
    let mut lo = t * 10f64.powi(-(decades as i32));
    panels.push((0.0, lo));
    for _ in 0..decades {
        let hi = lo * 10.0;
        panels.push((lo, hi));
        lo = hi;
    }
    panels
}

/// Composite rule over geometric panels, as flat node/weight vectors.
pub fn graded_rule(t: f64, decades: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::new(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in geometric_panels(t, decades) {
        gl.push_mapped(a, b, &mut nodes, &mut weights);
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for 8 points
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_inverse_square_root() {
        let (x, w) = graded_rule(1.0, 16, 24);
        let v: f64 = x.iter().zip(&w).map(|(&s, &w)| w / s.sqrt()).sum();
        assert!((v - 2.0).abs() < 1e-7, "got {v}");
    }

    #[test]
    fn high_order_weights_are_positive() {
        let gl = GaussLegendre::new(64);
        assert!(gl.weights.iter().all(|&w| w > 0.0));
        let v = gl.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
