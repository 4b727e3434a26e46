//! Direct double-loop versions of the pipeline stages.

use derain_core::{ColorImage, GrayImage, RainMask};

/// Pixel offsets `(left, right, up, down)` of the five detection windows.
fn extents(side: usize) -> [(isize, isize, isize, isize); 5] {
    let h = (side / 2) as isize;
    let r = side as isize - 1;
    [
        (h, h, h, h),
        (r, 0, r, 0),
        (0, r, r, 0),
        (r, 0, 0, r),
        (0, r, 0, r),
    ]
}

/// Mean of `channel` over each clipped window around `(x, y)`.
pub fn window_means(channel: &GrayImage, x: usize, y: usize, side: usize) -> [f64; 5] {
    let (w, h) = (channel.width() as isize, channel.height() as isize);
    extents(side).map(|(l, r, u, d)| {
        let (mut sum, mut n) = (0.0, 0usize);
        for yy in y as isize - u..=y as isize + d {
            for xx in x as isize - l..=x as isize + r {
                if xx >= 0 && yy >= 0 && xx < w && yy < h {
                    sum += channel.get(xx as usize, yy as usize);
                    n += 1;
                }
            }
        }
        sum / n as f64
    })
}

pub fn detect(img: &ColorImage, mu: f64, side: usize) -> RainMask {
    let channels = [img.channel(0), img.channel(1), img.channel(2)];
    RainMask::from_fn(img.width(), img.height(), |x, y| {
        channels.iter().all(|ch| {
            let p = ch.get(x, y);
            window_means(ch, x, y, side).iter().all(|&m| p > m + mu)
        })
    })
}

/// Background estimate and the number of growth steps it needed, `None` when
/// every window was rain.
pub fn approximate(
    img: &ColorImage,
    mask: &RainMask,
    x: usize,
    y: usize,
    side: usize,
    sigma: f64,
    max_growth: usize,
) -> Option<([f64; 3], usize)> {
    let p = img.get(x, y);
    for step in 0..=max_growth {
        let half = (side / 2 + 2 * step) as isize;
        let mut h_set = Vec::new();
        for yy in y as isize - half..=y as isize + half {
            for xx in x as isize - half..=x as isize + half {
                if xx < 0 || yy < 0 || xx >= img.width() as isize || yy >= img.height() as isize {
                    continue;
                }
                if !mask.get(xx as usize, yy as usize) {
                    h_set.push(img.get(xx as usize, yy as usize));
                }
            }
        }
        if h_set.is_empty() {
            continue;
        }
        let weights: Vec<f64> = h_set
            .iter()
            .map(|h| {
                let dist: f64 = (0..3).map(|c| (h[c] - p[c]).powi(2)).sum();
                (-dist / (sigma * sigma)).exp().powi(2)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let q = std::array::from_fn(|c| {
            h_set
                .iter()
                .zip(&weights)
                .map(|(h, w)| w * h[c])
                .sum::<f64>()
                / total
        });
        return Some((q, step));
    }
    None
}

/// Solves the 2x2 normal equations of the ridge loss by Cramer's rule.
pub fn fit(d: &[f64], q: &[f64], lambda: f64) -> (f64, f64) {
    let k = d.len() as f64;
    let sq: f64 = q.iter().sum();
    let sd: f64 = d.iter().sum();
    let sqq: f64 = q.iter().map(|v| v * v).sum();
    let sdq: f64 = d.iter().zip(q).map(|(a, b)| a * b).sum();
    let (a11, a12, a22) = (sqq + k * lambda, sq, k);
    let det = a11 * a22 - a12 * a12;
    let alpha = (sdq * a22 - a12 * sd) / det;
    let beta = (a11 * sd - a12 * sdq) / det;
    (alpha, beta)
}

/// Loss `sum (d - alpha q - beta)^2 + lambda alpha^2` and its gradient.
fn loss_grad(d: &[f64], q: &[f64], lambda: f64, a: f64, b: f64) -> (f64, [f64; 2]) {
    let mut loss = 0.0;
    let mut g = [0.0; 2];
    for (&di, &qi) in d.iter().zip(q) {
        let r = di - a * qi - b;
        loss += r * r + lambda * a * a;
        g[0] += -2.0 * r * qi + 2.0 * lambda * a;
        g[1] += -2.0 * r;
    }
    (loss, g)
}

/// Conjugate gradients with exact line search, using only loss gradients.
/// Curvature along a direction comes from a gradient difference.
pub fn minimize(d: &[f64], q: &[f64], lambda: f64) -> (f64, f64) {
    let mut x = [0.0, 0.0];
    let (_, mut g) = loss_grad(d, q, lambda, x[0], x[1]);
    let mut dir = [-g[0], -g[1]];
    for _ in 0..60 {
        let gnorm = g[0].hypot(g[1]);
        if gnorm == 0.0 {
            break;
        }
        let probe = [x[0] + dir[0], x[1] + dir[1]];
        let (_, gp) = loss_grad(d, q, lambda, probe[0], probe[1]);
        let hd = [gp[0] - g[0], gp[1] - g[1]];
        let curv = dir[0] * hd[0] + dir[1] * hd[1];
        if curv <= 0.0 {
            break;
        }
        let step = -(g[0] * dir[0] + g[1] * dir[1]) / curv;
        x = [x[0] + step * dir[0], x[1] + step * dir[1]];
        let (_, gn) = loss_grad(d, q, lambda, x[0], x[1]);
        let beta = ((gn[0] * (gn[0] - g[0]) + gn[1] * (gn[1] - g[1]))
            / (g[0] * g[0] + g[1] * g[1]))
            .max(0.0);
        dir = [-gn[0] + beta * dir[0], -gn[1] + beta * dir[1]];
        g = gn;
    }
    (x[0], x[1])
}
