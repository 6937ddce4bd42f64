//! Filter images: log-amplitude through a logistic squash, mirrored to full
//! width and centred on DC.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::viridis::VIRIDIS;

/// [`visualize_filter_width`] for square maps: the full width is taken to
/// have the parity of `H`.
pub fn visualize_filter(weight: &Tensor) -> Result<Tensor> {
    let (h, wh) = match weight.shape() {
        &[h, wh, _, 2] => (h, wh),
        s => return Err(Error::contract("visualize_filter", format!("expected [H, Wh, N, 2], got {s:?}"))),
    };
    let width = 2 * (wh - 1) + (h % 2);
    visualize_filter_width(weight, width)
}

/// Maps a complex half-spectrum filter `[H, ⌊W/2⌋+1, N, 2]` to an image
/// `[H, W, N]` in `(0, 1)`.
///
/// `sigmoid(log a)` is evaluated as `a / (1 + a)` so the result depends only
/// on correctly rounded arithmetic. The right-hand columns are filled from
/// the Hermitian partner `(−h, −w)`, and the image is rolled by
/// `(⌊H/2⌋, ⌊W/2⌋)` to put DC in the middle.
pub fn visualize_filter_width(weight: &Tensor, width: usize) -> Result<Tensor> {
    let (h, wh, n) = match weight.shape() {
        &[h, wh, n, 2] => (h, wh, n),
        s => return Err(Error::contract("visualize_filter", format!("expected [H, Wh, N, 2], got {s:?}"))),
    };
    if width / 2 + 1 != wh {
        return Err(Error::contract(
            "visualize_filter",
            format!("half width {wh} does not belong to full width {width}"),
        ));
    }
    let d = weight.data();
    let squash = |y: usize, x: usize, f: usize| -> Real {
        let at = ((y * wh + x) * n + f) * 2;
        let a = (d[at] * d[at] + d[at + 1] * d[at + 1]).sqrt() + 1e-6;
        a / (1.0 + a)
    };
    let (sy, sx) = (h / 2, width / 2);
    let mut out = vec![0.0; h * width * n];
    for y in 0..h {
        for x in 0..width {
            let (yy, xx) = if x < wh { (y, x) } else { ((h - y) % h, width - x) };
            let (oy, ox) = ((y + sy) % h, (x + sx) % width);
            for f in 0..n {
                out[(oy * width + ox) * n + f] = squash(yy, xx, f);
            }
        }
    }
    Tensor::new(vec![h, width, n], out)
}

/// Binary PPM (P6) of channel `index` of an `[H, W, N]` image through the
/// viridis table.
pub fn filter_ppm(image: &Tensor, index: usize) -> Result<Vec<u8>> {
    let [h, w, n] = match image.shape() {
        &[h, w, n] => [h, w, n],
        s => return Err(Error::contract("filter_ppm", format!("expected [H, W, N], got {s:?}"))),
    };
    if index >= n {
        return Err(Error::contract("filter_ppm", format!("filter {index} out of range for {n}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for px in 0..h * w {
        let v = image.data()[px * n + index];
        let level = (v * 255.0).round().clamp(0.0, 255.0) as usize;
        out.extend_from_slice(&VIRIDIS[level]);
    }
    Ok(out)
}
