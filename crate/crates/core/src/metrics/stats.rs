use crate::error::{Error, Result};

/// Mean over coordinates of the population temporal variance, times 100.
pub fn hand_variance(landmarks: &[Vec<[f64; 2]>]) -> Result<f64> {
    let f = landmarks.len();
    if f < 2 {
        return Err(Error::invalid(format!("Hand-V needs at least 2 frames, got {f}")));
    }
    let p = landmarks[0].len();
    if p == 0 || landmarks.iter().any(|l| l.len() != p) {
        return Err(Error::invalid("Hand-V needs the same non-zero point count in every frame"));
    }
    let mut total = 0.0;
    for i in 0..p {
        for k in 0..2 {
            // Deviations from the first frame: a static coordinate gives exactly 0.
            let first = landmarks[0][i][k];
            let d: Vec<f64> = landmarks.iter().map(|l| l[i][k] - first).collect();
            let mean = d.iter().sum::<f64>() / f as f64;
            total += d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f as f64;
        }
    }
    Ok(100.0 * total / (2 * p) as f64)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine", &[a.len()], &[b.len()]));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean cosine similarity between a reference embedding and each frame embedding.
pub fn identity_cossim(reference: &[f64], frames: &[Vec<f64>]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::invalid("CosSim needs at least one frame"));
    }
    let mut total = 0.0;
    for f in frames {
        total += cosine(reference, f)?;
    }
    Ok(total / frames.len() as f64)
}
