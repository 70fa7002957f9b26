use crate::codec::VideoClip;
use crate::conditioning::PixelBox;

const SKIN_TOLERANCE: f64 = 0.18;
const HAND_SHADE: f64 = 0.92;

/// Colour-keyed hand tracker for generated clips, where no ground-truth landmarks exist.
///
/// Per frame and per half of the image below row `H * 0.4`, returns the
/// skin-likeness-weighted centroid, ignoring a column band around the reference
/// face box. A half with no skin pixels repeats the previous centroid.
pub fn track_hands(video: &VideoClip, skin: [f64; 3], face: &PixelBox) -> Vec<Vec<[f64; 2]>> {
    let [f, h, w, _] = video.dims();
    let target = skin.map(|v| v * HAND_SHADE);
    let top = (h as f64 * 0.4) as usize;
    let (fx0, fx1) = (face.x0.saturating_sub(2), (face.x1 + 2).min(w));
    let mut last = [[w as f64 * 0.25, h as f64 * 0.8], [w as f64 * 0.75, h as f64 * 0.8]];
    let mut out = Vec::with_capacity(f);
    for t in 0..f {
        let mut acc = [[0.0f64; 3]; 2];
        for y in top..h {
            for x in 0..w {
                if y < face.y1 + 1 && (fx0..fx1).contains(&x) {
                    continue;
                }
                let d = (0..3).map(|k| (video.get(t, y, x, k) - target[k]).powi(2)).sum::<f64>().sqrt();
                let wgt = (1.0 - d / SKIN_TOLERANCE).max(0.0);
                let side = (2 * x >= w) as usize;
                acc[side][0] += wgt * (x as f64 + 0.5);
                acc[side][1] += wgt * (y as f64 + 0.5);
                acc[side][2] += wgt;
            }
        }
        for side in 0..2 {
            if acc[side][2] > 1e-9 {
                last[side] = [acc[side][0] / acc[side][2], acc[side][1] / acc[side][2]];
            }
        }
        out.push(last.to_vec());
    }
    out
}
