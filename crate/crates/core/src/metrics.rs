//! Overlap, surface-distance and uncertainty-calibration metrics.
//!
//! Masks are label slices in `depth×H×W` row-major order; any non-zero
//! label counts as foreground. Voxel spacing is 1 along every axis.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0} vs {1} voxels")]
    ShapeMismatch(usize, usize),
    #[error("{0} mask is empty")]
    EmptyMask(&'static str),
    #[error("patch size {patch} is invalid for volume {shape:?}")]
    BadPatch { patch: usize, shape: [usize; 3] },
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub dice: f64,
    pub jaccard: f64,
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MetricError::ShapeMismatch(a, b));
    }
    Ok(())
}

/// Dice and Jaccard. Two empty masks score 1 on both.
pub fn overlap_scores(a: &[u8], b: &[u8]) -> Result<Overlap> {
    same_len(a.len(), b.len())?;
    let (mut na, mut nb, mut inter) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += (x > 0) as usize;
        nb += (y > 0) as usize;
        inter += (x > 0 && y > 0) as usize;
    }
    if na + nb == 0 {
        return Ok(Overlap { dice: 1.0, jaccard: 1.0 });
    }
    Ok(Overlap {
        dice: 2.0 * inter as f64 / (na + nb) as f64,
        jaccard: inter as f64 / (na + nb - inter) as f64,
    })
}

/// Foreground voxels with a background face-neighbour or on the array border.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    pub points: Vec<[usize; 3]>,
}

impl BoundarySet {
    pub fn of(mask: &[u8], shape: [usize; 3]) -> Self {
        let [d, h, w] = shape;
        let fg = |z: usize, y: usize, x: usize| mask[(z * h + y) * w + x] > 0;
        let mut points = Vec::new();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if !fg(z, y, x) {
                        continue;
                    }
                    let border = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                    if border
                        || !fg(z - 1, y, x)
                        || !fg(z + 1, y, x)
                        || !fg(z, y - 1, x)
                        || !fg(z, y + 1, x)
                        || !fg(z, y, x - 1)
                        || !fg(z, y, x + 1)
                    {
                        points.push([z, y, x]);
                    }
                }
            }
        }
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

const FAR: f64 = 1e30;

/// Squared distance transform of one line (Felzenszwalb & Huttenlocher).
fn dt_line(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        if s <= z[k] {
            // k == 0 and the new parabola dominates everywhere
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Exact squared Euclidean distance from every voxel to the nearest site.
pub fn squared_edt(sites: &[[usize; 3]], shape: [usize; 3]) -> Vec<f64> {
    let [d, h, w] = shape;
    let mut g = vec![FAR; d * h * w];
    for &[z, y, x] in sites {
        g[(z * h + y) * w + x] = 0.0;
    }
    let longest = d.max(h).max(w);
    let (mut f, mut out) = (vec![0.0; longest], vec![0.0; longest]);
    let (mut v, mut zz) = (vec![0usize; longest], vec![0.0; longest + 1]);
    let mut pass = |len: usize, lines: Vec<(usize, usize)>, g: &mut [f64]| {
        // each line is (start, stride)
        for (start, stride) in lines {
            for i in 0..len {
                f[i] = g[start + i * stride];
            }
            dt_line(&f[..len], &mut out[..len], &mut v, &mut zz);
            for i in 0..len {
                g[start + i * stride] = out[i];
            }
        }
    };
    let along_x = (0..d * h).map(|r| (r * w, 1)).collect();
    pass(w, along_x, &mut g);
    let along_y = (0..d).flat_map(|z| (0..w).map(move |x| (z * h * w + x, w))).collect();
    pass(h, along_y, &mut g);
    let along_z = (0..h * w).map(|i| (i, h * w)).collect();
    pass(d, along_z, &mut g);
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistances {
    pub hd95: f64,
    pub asd: f64,
}

/// Linearly interpolated percentile of sorted values.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nearest-boundary distances from `a` to `b` and from `b` to `a`, pooled.
pub fn symmetric_surface_distances(a: &[u8], b: &[u8], shape: [usize; 3]) -> Result<Vec<f64>> {
    same_len(a.len(), b.len())?;
    same_len(a.len(), shape.iter().product())?;
    let (ba, bb) = (BoundarySet::of(a, shape), BoundarySet::of(b, shape));
    if ba.is_empty() {
        return Err(MetricError::EmptyMask("first"));
    }
    if bb.is_empty() {
        return Err(MetricError::EmptyMask("second"));
    }
    let [_, h, w] = shape;
    let idx = |p: [usize; 3]| (p[0] * h + p[1]) * w + p[2];
    let (da, db) = (squared_edt(&ba.points, shape), squared_edt(&bb.points, shape));
    let mut all: Vec<f64> = ba.points.iter().map(|&p| db[idx(p)].sqrt()).collect();
    all.extend(bb.points.iter().map(|&p| da[idx(p)].sqrt()));
    Ok(all)
}

/// 95th-percentile Hausdorff distance and average surface distance.
pub fn surface_distances(a: &[u8], b: &[u8], shape: [usize; 3]) -> Result<SurfaceDistances> {
    let mut all = symmetric_surface_distances(a, b, shape)?;
    all.sort_by(f64::total_cmp);
    Ok(SurfaceDistances {
        hd95: percentile_sorted(&all, 0.95),
        asd: all.iter().sum::<f64>() / all.len() as f64,
    })
}

/// Patch accuracy versus patch uncertainty.
///
/// The volume is padded up to multiples of `patch` with voxels that count
/// as correct and certain. A patch is accurate when at least half of its
/// voxels are correct and uncertain when its mean entropy exceeds
/// `threshold`.
pub fn pavpu(
    pred: &[u8],
    truth: &[u8],
    entropy: &[f64],
    shape: [usize; 3],
    patch: usize,
    threshold: f64,
) -> Result<f64> {
    let [d, h, w] = shape;
    same_len(pred.len(), truth.len())?;
    same_len(pred.len(), entropy.len())?;
    same_len(pred.len(), d * h * w)?;
    if patch == 0 || patch > d.max(h).max(w) {
        return Err(MetricError::BadPatch { patch, shape });
    }
    let blocks = |n: usize| n.div_ceil(patch);
    let (bd, bh, bw) = (blocks(d), blocks(h), blocks(w));
    let nb = bd * bh * bw;
    let mut correct = vec![0usize; nb];
    let mut ent = vec![0.0; nb];
    let mut real = vec![0usize; nb];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                let b = ((z / patch) * bh + y / patch) * bw + x / patch;
                correct[b] += (pred[i] == truth[i]) as usize;
                ent[b] += entropy[i];
                real[b] += 1;
            }
        }
    }
    let vol = (patch * patch * patch) as f64;
    let (mut good, mut total) = (0usize, 0usize);
    for b in 0..nb {
        let padded = patch * patch * patch - real[b];
        let accurate = (correct[b] + padded) as f64 / vol >= 0.5;
        let uncertain = ent[b] / vol > threshold;
        good += (accurate != uncertain) as usize;
        total += 1;
    }
    Ok(good as f64 / total as f64)
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub dice: f64,
    pub jaccard: f64,
    pub hd95: f64,
    pub asd: f64,
    pub pavpu: f64,
}

impl MetricRow {
    /// Per-column mean over the finite entries.
    pub fn mean(rows: &[MetricRow]) -> MetricRow {
        let col = |f: fn(&MetricRow) -> f64| {
            let v: Vec<f64> = rows.iter().map(f).filter(|x| x.is_finite()).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        MetricRow {
            id: "mean".into(),
            dice: col(|r| r.dice),
            jaccard: col(|r| r.jaccard),
            hd95: col(|r| r.hd95),
            asd: col(|r| r.asd),
            pavpu: col(|r| r.pavpu),
        }
    }

    pub fn csv_header() -> &'static str {
        "volume_id,dice,jaccard,hd95,asd,pavpu"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.id, self.dice, self.jaccard, self.hd95, self.asd, self.pavpu
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_line_matches_brute_force() {
        let f = [FAR, 0.0, FAR, FAR, 2.0, FAR, 0.0];
        let mut out = [0.0; 7];
        let (mut v, mut z) = ([0usize; 7], [0.0; 8]);
        dt_line(&f, &mut out, &mut v, &mut z);
        for (q, o) in out.iter().enumerate() {
            let want = (0..7)
                .map(|p| (q as f64 - p as f64).powi(2) + f[p])
                .fold(f64::INFINITY, f64::min);
            assert_eq!(*o, want);
        }
    }

    #[test]
    fn mean_row_skips_non_finite() {
        let row = |d: f64, h: f64| MetricRow {
            id: "x".into(),
            dice: d,
            jaccard: d,
            hd95: h,
            asd: h,
            pavpu: 1.0,
        };
        let m = MetricRow::mean(&[row(0.5, 2.0), row(0.7, f64::NAN)]);
        assert!((m.dice - 0.6).abs() < 1e-12);
        assert_eq!(m.hd95, 2.0);
    }
}
