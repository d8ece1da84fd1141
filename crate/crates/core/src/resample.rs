//! Bilinear resampling with half-pixel centres, shared by image distortion,
//! score-map resizing and the decoder's upsampling layers.

/// One output coordinate expressed as a blend of two source coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`; `lo` gets `1 - frac`.
    pub frac: f64,
}

pub fn taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src_len - 1);
            let hi = (lo + 1).min(src_len - 1);
            Tap {
                lo,
                hi,
                frac: pos - lo as f64,
            }
        })
        .collect()
}

/// Resample a channel-major `[channels, h, w]` buffer.
pub fn bilinear(
    src: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut out = Vec::with_capacity(channels * out_h * out_w);
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for y in &ty {
            for x in &tx {
                let top = plane[y.lo * w + x.lo] * (1.0 - x.frac) + plane[y.lo * w + x.hi] * x.frac;
                let bot = plane[y.hi * w + x.lo] * (1.0 - x.frac) + plane[y.hi * w + x.hi] * x.frac;
                out.push(top * (1.0 - y.frac) + bot * y.frac);
            }
        }
    }
    out
}

/// Adjoint of [`bilinear`]: scatters an output-sized gradient back onto the
/// source grid.
pub fn bilinear_adjoint(
    grad_out: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut grad = vec![0.0; channels * h * w];
    for c in 0..channels {
        let plane = &mut grad[c * h * w..(c + 1) * h * w];
        let go = &grad_out[c * out_h * out_w..(c + 1) * out_h * out_w];
        for (oy, y) in ty.iter().enumerate() {
            for (ox, x) in tx.iter().enumerate() {
                let g = go[oy * out_w + ox];
                plane[y.lo * w + x.lo] += g * (1.0 - y.frac) * (1.0 - x.frac);
                plane[y.lo * w + x.hi] += g * (1.0 - y.frac) * x.frac;
                plane[y.hi * w + x.lo] += g * y.frac * (1.0 - x.frac);
                plane[y.hi * w + x.hi] += g * y.frac * x.frac;
            }
        }
    }
    grad
}
