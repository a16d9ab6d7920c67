use crate::error::{invalid, Result};

/// Sinusoidal embedding of step `t` out of `total_steps`.
///
/// The step is normalized to `s = t / total_steps`; the first half of the output
/// holds `sin(w_i s)` and the second half `cos(w_i s)` with `w_i` geometric
/// from 1 to 10000.
pub fn time_embed(t: usize, total_steps: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(invalid(format!("time embedding dim must be even and positive, got {dim}")));
    }
    if total_steps == 0 || t > total_steps {
        return Err(invalid(format!("step {t} outside 0..={total_steps}")));
    }
    let half = dim / 2;
    let s = t as f64 / total_steps as f64;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = if half == 1 {
            1.0
        } else {
            10_000f64.powf(i as f64 / (half - 1) as f64)
        };
        let angle = freq * s;
        out[i] = angle.sin();
        out[half + i] = angle.cos();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step() {
        let e = time_embed(0, 1000, 8).unwrap();
        assert!(e[..4].iter().all(|&v| v == 0.0));
        assert!(e[4..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn length_and_range() {
        for t in [0, 1, 17, 500, 1000] {
            let e = time_embed(t, 1000, 16).unwrap();
            assert_eq!(e.len(), 16);
            assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn odd_dim_and_out_of_range_rejected() {
        assert!(time_embed(3, 10, 7).is_err());
        assert!(time_embed(11, 10, 8).is_err());
        assert!(time_embed(0, 10, 0).is_err());
    }

    #[test]
    fn all_steps_distinct() {
        let embs: Vec<Vec<f64>> = (0..=1000).map(|t| time_embed(t, 1000, 16).unwrap()).collect();
        let mut min_gap = f64::INFINITY;
        for i in 0..embs.len() {
            for j in (i + 1)..embs.len() {
                let d: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).powi(2)).sum();
                min_gap = min_gap.min(d.sqrt());
            }
        }
        assert!(min_gap > 1e-6, "closest pair at distance {min_gap}");
    }
}
