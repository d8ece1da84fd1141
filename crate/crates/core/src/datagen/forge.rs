use crate::domain::{BinaryMask, RasterImage};
use crate::error::{shape_err, Error, Result};

const FILL_ITERATIONS: usize = 200;
const MAX_REMOVAL_AREA: f64 = 0.25;

fn check_dims(img: &RasterImage, mask: &BinaryMask) -> Result<()> {
    if img.same_dims(mask.width(), mask.height()) {
        Ok(())
    } else {
        Err(shape_err!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        ))
    }
}

/// Paste donor pixels into `src` wherever the mask is set.
pub fn splice(
    src: &RasterImage,
    donor: &RasterImage,
    mask: &BinaryMask,
) -> Result<(RasterImage, BinaryMask)> {
    check_dims(src, mask)?;
    check_dims(donor, mask)?;
    let mut out = src.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.set_pixel(x, y, donor.pixel(x, y));
            }
        }
    }
    Ok((out, mask.clone()))
}

/// Translate the masked region by `(dx, dy)` within the same image. The
/// returned mask marks the destination.
pub fn copy_move(
    src: &RasterImage,
    mask: &BinaryMask,
    shift: (isize, isize),
) -> Result<(RasterImage, BinaryMask)> {
    check_dims(src, mask)?;
    let (dx, dy) = shift;
    if dx == 0 && dy == 0 {
        return Err(Error::Geometry(
            "zero shift puts the copy on its source".into(),
        ));
    }
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut out = src.clone();
    let mut dest = BinaryMask::zeros(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            let (tx, ty) = (x + dx, y + dy);
            if tx < 0 || ty < 0 || tx >= w || ty >= h {
                return Err(Error::Geometry(format!(
                    "shift ({dx}, {dy}) moves pixel ({x}, {y}) out of bounds"
                )));
            }
            out.set_pixel(tx as usize, ty as usize, src.pixel(x as usize, y as usize));
            dest.set(tx as usize, ty as usize, true);
        }
    }
    Ok((out, dest))
}

/// Replace the masked region with a harmonic (Laplacian) interpolation of
/// the surrounding pixels.
pub fn removal_fill(src: &RasterImage, mask: &BinaryMask) -> Result<(RasterImage, BinaryMask)> {
    check_dims(src, mask)?;
    let (w, h) = (mask.width(), mask.height());
    if mask.positives() == 0 {
        return Ok((src.clone(), mask.clone()));
    }
    if mask.area_fraction() > MAX_REMOVAL_AREA {
        return Err(Error::Generation(format!(
            "removal mask covers {:.3} of the image (max {MAX_REMOVAL_AREA})",
            mask.area_fraction()
        )));
    }
    let touches_left = (0..h).any(|y| mask.get(0, y));
    let touches_right = (0..h).any(|y| mask.get(w - 1, y));
    let touches_top = (0..w).any(|x| mask.get(x, 0));
    let touches_bottom = (0..w).any(|x| mask.get(x, h - 1));
    if touches_left && touches_right && touches_top && touches_bottom {
        return Err(Error::Generation(
            "removal mask touches all four borders".into(),
        ));
    }

    let holes: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .collect();
    let nbs = |x: usize, y: usize| {
        [
            (x > 0).then(|| (x - 1, y)),
            (x + 1 < w).then(|| (x + 1, y)),
            (y > 0).then(|| (x, y - 1)),
            (y + 1 < h).then(|| (x, y + 1)),
        ]
        .into_iter()
        .flatten()
    };

    let mut out = src.clone();
    for c in 0..3 {
        let mut plane: Vec<f64> = (0..w * h)
            .map(|i| src.pixel(i % w, i / w)[c] as f64)
            .collect();
        let (mut sum, mut n) = (0.0, 0usize);
        for &(x, y) in &holes {
            for (nx, ny) in nbs(x, y) {
                if !mask.get(nx, ny) {
                    sum += plane[ny * w + nx];
                    n += 1;
                }
            }
        }
        let init = sum / n as f64;
        for &(x, y) in &holes {
            plane[y * w + x] = init;
        }
        for _ in 0..FILL_ITERATIONS {
            for &(x, y) in &holes {
                let (s, k) = nbs(x, y).fold((0.0, 0usize), |(s, k), (nx, ny)| {
                    (s + plane[ny * w + nx], k + 1)
                });
                plane[y * w + x] = s / k as f64;
            }
        }
        for &(x, y) in &holes {
            let mut px = out.pixel(x, y);
            px[c] = plane[y * w + x].round().clamp(0.0, 255.0) as u8;
            out.set_pixel(x, y, px);
        }
    }
    Ok((out, mask.clone()))
}
