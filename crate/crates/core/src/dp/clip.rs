pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scale `g` in place by `min(1, C / ||g||)` and return the original norm.
///
/// Vectors already within the bound are left bit-for-bit untouched.
pub fn clip_in_place(g: &mut [f64], clip_norm: f64) -> f64 {
    let norm = l2_norm(g);
    if norm > clip_norm {
        let scale = clip_norm / norm;
        g.iter_mut().for_each(|v| *v *= scale);
    }
    norm
}

pub fn clip(g: &[f64], clip_norm: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, clip_norm);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_cases() {
        let g = [0.0, 4.0];
        let c = clip(&g, 1.0);
        assert_eq!(c, vec![0.0, 1.0]);
        let g = [0.3, 0.4];
        assert_eq!(clip(&g, 1.0), g.to_vec());
        assert_eq!(clip(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let g = [3.0, 4.0];
        let c = clip(&g, 1.0);
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    }
}
