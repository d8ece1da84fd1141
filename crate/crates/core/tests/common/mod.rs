//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numeric code.
#![allow(dead_code)]

use rand::Rng;

/// Neumaier compensated sum.
pub fn ksum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    ksum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z = ksum(e.iter().copied());
    e.iter().map(|x| x / z).collect()
}

pub type Mat = Vec<Vec<f64>>;

pub fn rand_mat(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

/// Mean over stages of the per-patch softmax over the two text rows.
pub fn cross_modal(stages: &[Mat], text: &Mat) -> Mat {
    let p = stages[0].len();
    (0..p)
        .map(|j| {
            (0..2)
                .map(|k| {
                    let per: Vec<f64> = stages
                        .iter()
                        .map(|s| softmax(&[dot(&s[j], &text[0]), dot(&s[j], &text[1])])[k])
                        .collect();
                    ksum(per) / stages.len() as f64
                })
                .collect()
        })
        .collect()
}

/// Per-stage scaled dot-product attention with queries from `q` and keys
/// and values from `kv`, averaged over stages.
pub fn fusion(q: &[Mat], kv: &[Mat], key_dim: usize) -> (Mat, Vec<Mat>) {
    let scale = (key_dim as f64).sqrt();
    let mut alphas = Vec::new();
    let (p, d) = (q[0].len(), kv[0][0].len());
    let mut acc = vec![vec![Vec::new(); d]; p];
    for (qs, ks) in q.iter().zip(kv) {
        let alpha: Mat = qs
            .iter()
            .map(|row| softmax(&ks.iter().map(|k| dot(row, k) / scale).collect::<Vec<_>>()))
            .collect();
        for i in 0..p {
            for c in 0..d {
                acc[i][c].push(ksum(alpha[i].iter().zip(ks).map(|(a, k)| a * k[c])));
            }
        }
        alphas.push(alpha);
    }
    let n = q.len() as f64;
    let out = acc
        .into_iter()
        .map(|row| row.into_iter().map(|v| ksum(v) / n).collect())
        .collect();
    (out, alphas)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties 1/2,
/// as the exact integer ratio `(2·concordant + ties) / (2·P·N)`.
pub fn brute_auc(scores: &[f32], labels: &[u8]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1;
            twice += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Clipped n-gram matches by repeatedly removing matched reference n-grams.
pub fn ngram_matches(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let cg = grams(c);
    let mut pool = grams(r);
    let total_r = pool.len();
    let mut m = 0;
    for g in &cg {
        if let Some(pos) = pool.iter().position(|x| x == g) {
            pool.swap_remove(pos);
            m += 1;
        }
    }
    (m, cg.len(), total_r)
}

/// Longest common subsequence by trying every subsequence of the shorter
/// list, longest first.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(s.len() <= 16, "exhaustive LCS limited to 16 tokens");
    let is_subseq = |sub: &[&String]| {
        let mut it = l.iter();
        sub.iter().all(|x| it.any(|y| y == *x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << s.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&String> = (0..s.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &s[i])
            .collect();
        if is_subseq(&sub) {
            best = k;
        }
    }
    best
}

pub fn prf(m: usize, c: usize, r: usize) -> (f64, f64, f64) {
    let p = if c == 0 { 0.0 } else { m as f64 / c as f64 };
    let rc = if r == 0 { 0.0 } else { m as f64 / r as f64 };
    let f = if p + rc == 0.0 {
        0.0
    } else {
        2.0 * p * rc / (p + rc)
    };
    (p, rc, f)
}

/// Soft dice with smoothing 1, summed with compensation.
pub fn dice(p: &[f64], y: &[f64]) -> f64 {
    let inter = ksum(p.iter().zip(y).map(|(a, b)| a * b));
    1.0 - (2.0 * inter + 1.0) / (ksum(p.iter().copied()) + ksum(y.iter().copied()) + 1.0)
}

/// Pixels outside `mask` whose RGB differs between the two images.
pub fn changed_outside(
    source: &fgl_core::domain::RasterImage,
    tampered: &fgl_core::domain::RasterImage,
    mask: &fgl_core::domain::BinaryMask,
) -> usize {
    let mut n = 0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !mask.get(x, y) && source.pixel(x, y) != tampered.pixel(x, y) {
                n += 1;
            }
        }
    }
    n
}
