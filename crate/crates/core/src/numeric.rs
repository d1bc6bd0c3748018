//! Small numeric helpers shared by the volume operators.

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z = pairwise_sum(&exps);
    exps.into_iter().map(|e| e / z).collect()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum with a fixed binary-tree order, independent of any parallel split.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Linear interpolation of `row` at `x`; `None` outside `[0, len)`.
pub fn interp_row(row: &[f64], valid: &[bool], x: f64) -> Option<f64> {
    let len = row.len();
    if !(x >= 0.0 && x < len as f64) {
        return None;
    }
    let x0 = (x.floor() as usize).min(len - 1);
    let x1 = (x0 + 1).min(len - 1);
    let a = x - x0 as f64;
    if !valid[x0] || (a > 0.0 && !valid[x1]) {
        return None;
    }
    Some(if a > 0.0 {
        row[x0] * (1.0 - a) + row[x1] * a
    } else {
        row[x0]
    })
}
