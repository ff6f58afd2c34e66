//! Goldstein branch-cut phase unwrapping.
//!
//! Residues live on the `(H-1) x (W-1)` plaquettes between pixels. Branch cuts
//! are sets of blocked pixel links: `horizontal_cuts[[r, c]]` blocks the step
//! `(r, c) <-> (r, c+1)` and `vertical_cuts[[r, c]]` blocks `(r, c) <-> (r+1, c)`.
//! A cut drawn between two plaquettes crosses exactly the links shared by the
//! plaquettes it passes through, so integration paths never encircle an
//! unbalanced residue.

use std::collections::VecDeque;
use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::wrap_phase;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueMap {
    pub charges: Array2<i8>,
}

impl ResidueMap {
    pub fn count(&self) -> usize {
        self.charges.iter().filter(|&&q| q != 0).count()
    }

    pub fn total_charge(&self) -> i64 {
        self.charges.iter().map(|&q| q as i64).sum()
    }
}

/// Charge of every plaquette: the loop sum of wrapped differences around
/// `(r,c) -> (r,c+1) -> (r+1,c+1) -> (r+1,c) -> (r,c)`, divided by 2 pi.
pub fn residues(wrapped: &Array2<f64>) -> Result<ResidueMap> {
    if let Some(((r, c), v)) = wrapped.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidField(format!("phase {v} at ({r}, {c})")));
    }
    let (h, w) = wrapped.dim();
    let charges = Array2::from_shape_fn((h.saturating_sub(1), w.saturating_sub(1)), |(r, c)| {
        let a = wrapped[[r, c]];
        let b = wrapped[[r, c + 1]];
        let d = wrapped[[r + 1, c + 1]];
        let e = wrapped[[r + 1, c]];
        let sum = wrap_phase(b - a) + wrap_phase(d - b) + wrap_phase(e - d) + wrap_phase(a - e);
        ((sum / (2.0 * PI)).round() as i64).signum() as i8
    });
    Ok(ResidueMap { charges })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutMask {
    /// `H x (W-1)`: blocks the link between `(r, c)` and `(r, c+1)`.
    pub horizontal_cuts: Array2<bool>,
    /// `(H-1) x W`: blocks the link between `(r, c)` and `(r+1, c)`.
    pub vertical_cuts: Array2<bool>,
}

impl CutMask {
    /// Empty mask for an `h x w` pixel grid.
    pub fn empty(h: usize, w: usize) -> Self {
        CutMask {
            horizontal_cuts: Array2::from_elem((h, w.saturating_sub(1)), false),
            vertical_cuts: Array2::from_elem((h.saturating_sub(1), w), false),
        }
    }

    pub fn pixel_dim(&self) -> (usize, usize) {
        (self.horizontal_cuts.nrows(), self.vertical_cuts.ncols())
    }

    pub fn len(&self) -> usize {
        self.horizontal_cuts.iter().chain(self.vertical_cuts.iter()).filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the link between adjacent pixels `a` and `b` is cut.
    pub fn blocks(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo.0 == hi.0 {
            self.horizontal_cuts[[lo.0, lo.1]]
        } else {
            self.vertical_cuts[[lo.0, lo.1]]
        }
    }

    /// Cuts along an L-shaped path between two plaquettes: columns first, then rows.
    fn connect(&mut self, from: (usize, usize), to: (usize, usize)) {
        let (r0, c0) = from;
        let (r1, c1) = to;
        for c in c0.min(c1)..c0.max(c1) {
            self.vertical_cuts[[r0, c + 1]] = true;
        }
        for r in r0.min(r1)..r0.max(r1) {
            self.horizontal_cuts[[r + 1, c1]] = true;
        }
    }

    /// Cuts from a plaquette straight to the nearest image border.
    fn connect_to_border(&mut self, p: (usize, usize)) {
        let (h, w) = self.pixel_dim();
        let (pr, pc) = p;
        let up = pr + 1;
        let down = h - 1 - pr;
        let left = pc + 1;
        let right = w - 1 - pc;
        let best = up.min(down).min(left).min(right);
        if best == up {
            for r in 0..=pr {
                self.horizontal_cuts[[r, pc]] = true;
            }
        } else if best == down {
            for r in pr + 1..h {
                self.horizontal_cuts[[r, pc]] = true;
            }
        } else if best == left {
            for c in 0..=pc {
                self.vertical_cuts[[pr, c]] = true;
            }
        } else {
            for c in pc + 1..w {
                self.vertical_cuts[[pr, c]] = true;
            }
        }
    }
}

/// Goldstein's growing-box search. Residues are visited in row-major order;
/// each unbalanced residue grows a box around every member of its tree until
/// the tree's net charge is zero or the box reaches the border.
pub fn place_branch_cuts(residue_map: &ResidueMap) -> CutMask {
    let q = &residue_map.charges;
    let (hp, wp) = q.dim();
    let mut cuts = CutMask::empty(hp + 1, wp + 1);
    if hp == 0 || wp == 0 {
        return cuts;
    }
    let mut balanced = Array2::from_elem((hp, wp), false);
    let mut active = Array2::from_elem((hp, wp), false);

    for start_r in 0..hp {
        for start_c in 0..wp {
            if q[[start_r, start_c]] == 0 || balanced[[start_r, start_c]] {
                continue;
            }
            let mut tree = vec![(start_r, start_c)];
            active[[start_r, start_c]] = true;
            balanced[[start_r, start_c]] = true;
            let mut charge = q[[start_r, start_c]] as i64;

            let mut radius = 1usize;
            'grow: while charge != 0 {
                let mut idx = 0;
                while idx < tree.len() {
                    let (cr, cc) = tree[idx];
                    idx += 1;
                    let r_lo = cr.saturating_sub(radius);
                    let r_hi = (cr + radius).min(hp - 1);
                    let c_lo = cc.saturating_sub(radius);
                    let c_hi = (cc + radius).min(wp - 1);
                    for r in r_lo..=r_hi {
                        for c in c_lo..=c_hi {
                            if q[[r, c]] == 0 || active[[r, c]] {
                                continue;
                            }
                            if !balanced[[r, c]] {
                                charge += q[[r, c]] as i64;
                                balanced[[r, c]] = true;
                            }
                            active[[r, c]] = true;
                            tree.push((r, c));
                            cuts.connect((cr, cc), (r, c));
                            if charge == 0 {
                                break 'grow;
                            }
                        }
                    }
                    let reaches_border =
                        cr < radius || cc < radius || cr + radius >= hp || cc + radius >= wp;
                    if reaches_border {
                        cuts.connect_to_border((cr, cc));
                        break 'grow;
                    }
                }
                radius += 1;
            }
            for &(r, c) in &tree {
                active[[r, c]] = false;
            }
        }
    }
    cuts
}

#[derive(Debug, Clone)]
pub struct Unwrapped {
    pub phase: Array2<f64>,
    /// Pixels reachable from the start only by crossing a cut; unwrapped
    /// region-by-region against already unwrapped neighbours.
    pub flagged: Array2<bool>,
    pub cuts: CutMask,
    pub residue_count: usize,
}

impl Unwrapped {
    pub fn flagged_fraction(&self) -> f64 {
        self.flagged.iter().filter(|&&f| f).count() as f64 / self.flagged.len().max(1) as f64
    }
}

fn neighbours(p: (usize, usize), h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let (r, c) = p;
    [
        (r > 0).then(|| (r - 1, c)),
        (c > 0).then(|| (r, c - 1)),
        (c + 1 < w).then(|| (r, c + 1)),
        (r + 1 < h).then(|| (r + 1, c)),
    ]
    .into_iter()
    .flatten()
}

/// Breadth-first integration of wrapped differences from `seed` without
/// crossing cuts. Returns the visited pixels in order.
fn flood(
    wrapped: &Array2<f64>,
    cuts: &CutMask,
    seed: (usize, usize),
    out: &mut Array2<f64>,
    visited: &mut Array2<bool>,
) -> Vec<(usize, usize)> {
    let (h, w) = wrapped.dim();
    let mut order = vec![seed];
    let mut queue = VecDeque::from([seed]);
    visited[seed] = true;
    out[seed] = wrapped[seed];
    while let Some(p) = queue.pop_front() {
        for n in neighbours(p, h, w) {
            if visited[n] || cuts.blocks(p, n) {
                continue;
            }
            visited[n] = true;
            out[n] = out[p] + wrap_phase(wrapped[n] - wrapped[p]);
            order.push(n);
            queue.push_back(n);
        }
    }
    order
}

/// Unwraps against precomputed cuts.
pub fn integrate_with_cuts(wrapped: &Array2<f64>, cuts: &CutMask) -> (Array2<f64>, Array2<bool>) {
    let (h, w) = wrapped.dim();
    let mut out = Array2::zeros((h, w));
    let mut visited = Array2::from_elem((h, w), false);
    let mut flagged = Array2::from_elem((h, w), false);
    if h == 0 || w == 0 {
        return (out, flagged);
    }
    flood(wrapped, cuts, (h / 2, w / 2), &mut out, &mut visited);

    for r in 0..h {
        for c in 0..w {
            if visited[[r, c]] {
                continue;
            }
            let before = visited.clone();
            let region = flood(wrapped, cuts, (r, c), &mut out, &mut visited);
            // Integer offset that best continues the phase across the
            // region's boundary links into earlier regions.
            let mut sum = 0.0;
            let mut n = 0usize;
            for &p in &region {
                for nb in neighbours(p, h, w) {
                    if before[nb] {
                        let target = out[nb] + wrap_phase(wrapped[p] - wrapped[nb]);
                        sum += (target - out[p]) / (2.0 * PI);
                        n += 1;
                    }
                }
            }
            let k = if n > 0 { (sum / n as f64).round() } else { 0.0 };
            for &p in &region {
                out[p] += 2.0 * PI * k;
                flagged[p] = true;
            }
        }
    }
    (out, flagged)
}

pub fn unwrap_goldstein(wrapped: &Array2<f64>) -> Result<Unwrapped> {
    let residue_map = residues(wrapped)?;
    let cuts = place_branch_cuts(&residue_map);
    let (phase, flagged) = integrate_with_cuts(wrapped, &cuts);
    Ok(Unwrapped { phase, flagged, cuts, residue_count: residue_map.count() })
}

/// Number of neighbouring pixel pairs whose raw difference exceeds pi, i.e.
/// places where the grid still carries wrapping discontinuities.
pub fn phase_jumps(phase: &Array2<f64>) -> usize {
    let (h, w) = phase.dim();
    let mut n = 0;
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w && (phase[[r, c + 1]] - phase[[r, c]]).abs() > PI {
                n += 1;
            }
            if r + 1 < h && (phase[[r + 1, c]] - phase[[r, c]]).abs() > PI {
                n += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vortex(h: usize, w: usize, y0: f64, x0: f64, sign: f64) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(r, c)| {
            wrap_phase(sign * (r as f64 - y0).atan2(c as f64 - x0))
        })
    }

    /// Loop sum computed independently with explicit rem_euclid wrapping.
    fn oracle_charge(p: &Array2<f64>, r: usize, c: usize) -> i64 {
        let wrap = |d: f64| {
            let m = (d + PI).rem_euclid(2.0 * PI) - PI;
            if m == -PI { PI } else { m }
        };
        let pts = [p[[r, c]], p[[r, c + 1]], p[[r + 1, c + 1]], p[[r + 1, c]], p[[r, c]]];
        let s: f64 = pts.windows(2).map(|ab| wrap(ab[1] - ab[0])).sum();
        (s / (2.0 * PI)).round() as i64
    }

    fn assert_offset_by_2pi_k(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> f64 {
        let k = ((a[[0, 0]] - b[[0, 0]]) / (2.0 * PI)).round();
        let max = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y - 2.0 * PI * k).abs())
            .fold(0.0, f64::max);
        assert!(max < tol, "max deviation {max}");
        max
    }

    #[test]
    fn constant_phase_has_no_residues() {
        let r = residues(&Array2::from_elem((8, 9), 1.3)).unwrap();
        assert_eq!(r.charges.dim(), (7, 8));
        assert_eq!(r.count(), 0);
    }

    #[test]
    fn single_vortex_charge() {
        let p = vortex(16, 16, 7.4, 5.6, 1.0);
        let r = residues(&p).unwrap();
        assert_eq!(r.count(), 1);
        assert_eq!(r.charges[[7, 5]], 1);
        for ((pr, pc), &q) in r.charges.indexed_iter() {
            assert_eq!(q as i64, oracle_charge(&p, pr, pc));
        }
        let n = residues(&vortex(16, 16, 7.4, 5.6, -1.0)).unwrap();
        assert_eq!(n.count(), 1);
        assert_eq!(n.charges[[7, 5]], -1);
    }

    #[test]
    fn non_finite_phase_rejected() {
        let mut p = Array2::zeros((3, 3));
        p[[1, 1]] = f64::INFINITY;
        assert!(matches!(residues(&p), Err(Error::InvalidField(_))));
    }

    #[test]
    fn no_residues_no_cuts() {
        let r = residues(&Array2::zeros((10, 10))).unwrap();
        assert!(place_branch_cuts(&r).is_empty());
    }

    #[test]
    fn dipole_is_joined_by_a_single_cut() {
        // Hand-run growing box on a 16x16 grid: the +1 at plaquette (7, 5)
        // finds the -1 at (7, 8) once the box radius reaches 3, giving one
        // straight cut across the three links between them.
        let mut charges = Array2::zeros((15, 15));
        charges[[7, 5]] = 1;
        charges[[7, 8]] = -1;
        let cuts = place_branch_cuts(&ResidueMap { charges });
        let mut expected = CutMask::empty(16, 16);
        for c in 6..=8 {
            expected.vertical_cuts[[7, c]] = true;
        }
        assert_eq!(cuts, expected);
    }

    #[test]
    fn residue_near_border_cuts_to_border() {
        // Plaquette (2, 8) is 3 links below the top edge; the box first spills
        // over the edge at radius 3 and the cut runs straight up.
        let mut charges = Array2::zeros((15, 15));
        charges[[2, 8]] = 1;
        let cuts = place_branch_cuts(&ResidueMap { charges });
        let mut expected = CutMask::empty(16, 16);
        for r in 0..=2 {
            expected.horizontal_cuts[[r, 8]] = true;
        }
        assert_eq!(cuts, expected);
    }

    #[test]
    fn ramp_recovered_up_to_global_offset() {
        let (h, w) = (64, 96);
        let truth = Array2::from_shape_fn((h, w), |(r, c)| {
            6.0 * PI * c as f64 / (w - 1) as f64 + 0.02 * r as f64 - 3.0
        });
        let out = unwrap_goldstein(&truth.mapv(wrap_phase)).unwrap();
        assert_eq!(out.residue_count, 0);
        assert_offset_by_2pi_k(&out.phase, &truth, 1e-9);
    }

    #[test]
    fn zero_phase_identity() {
        let out = unwrap_goldstein(&Array2::zeros((9, 7))).unwrap();
        assert!(out.phase.iter().all(|&v| v == 0.0));
        assert!(!out.flagged.iter().any(|&f| f));
    }

    #[test]
    fn vortex_pair_unwraps_consistently() {
        // A +1/-1 vortex pair: cuts join them, output stays congruent to the
        // input, and no integration path crosses a cut.
        let h = 32;
        let w = 32;
        let a = vortex(h, w, 15.5, 10.5, 1.0);
        let b = vortex(h, w, 15.5, 20.5, -1.0);
        let p = (&a + &b).mapv(wrap_phase);
        let out = unwrap_goldstein(&p).unwrap();
        assert_eq!(out.residue_count, 2);
        assert!(!out.cuts.is_empty());
        for (u, wv) in out.phase.iter().zip(p.iter()) {
            assert!(wrap_phase(u - wv).abs() < 1e-9);
        }
        // Rewrapping the output reproduces the residues of the input.
        assert_eq!(residues(&out.phase.mapv(wrap_phase)).unwrap(), residues(&p).unwrap());
        // Every uncut link has |difference| < pi in the unwrapped result.
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w && !out.cuts.blocks((r, c), (r, c + 1)) {
                    assert!((out.phase[[r, c + 1]] - out.phase[[r, c]]).abs() <= PI + 1e-9);
                }
                if r + 1 < h && !out.cuts.blocks((r, c), (r + 1, c)) {
                    assert!((out.phase[[r + 1, c]] - out.phase[[r, c]]).abs() <= PI + 1e-9);
                }
            }
        }
    }

    #[test]
    fn enclosed_region_is_flagged() {
        // Cuts boxing in the top-left corner.
        let p = Array2::from_shape_fn((8, 8), |(r, c)| wrap_phase(0.3 * (r + c) as f64));
        let mut cuts = CutMask::empty(8, 8);
        for r in 0..3 {
            cuts.horizontal_cuts[[r, 2]] = true;
        }
        for c in 0..3 {
            cuts.vertical_cuts[[2, c]] = true;
        }
        let (out, flagged) = integrate_with_cuts(&p, &cuts);
        let n_flagged = flagged.iter().filter(|&&f| f).count();
        assert_eq!(n_flagged, 9);
        assert!(flagged[[0, 0]] && flagged[[2, 2]] && !flagged[[3, 3]]);
        // The region's offset keeps it continuous with its surroundings.
        let truth = Array2::from_shape_fn((8, 8), |(r, c)| 0.3 * (r + c) as f64);
        assert_offset_by_2pi_k(&out, &truth, 1e-9);
    }

    #[test]
    fn jumps_detect_wrapping() {
        let ramp = Array2::from_shape_fn((4, 20), |(_, c)| 0.5 * c as f64);
        assert_eq!(phase_jumps(&ramp), 0);
        assert!(phase_jumps(&ramp.mapv(wrap_phase)) > 0);
    }

    fn smooth_surface(h: usize, w: usize, coeffs: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let x = c as f64 / w as f64 - 0.5;
            let y = r as f64 / h as f64 - 0.5;
            coeffs[0] * x + coeffs[1] * y + coeffs[2] * x * y + coeffs[3] * (x * x - y * y)
                + coeffs[4] * (6.0 * x).sin()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn residue_free_inputs_are_path_independent(
            coeffs in proptest::collection::vec(-20.0f64..20.0, 5),
        ) {
            let truth = smooth_surface(24, 28, &coeffs);
            let wrapped = truth.mapv(wrap_phase);
            prop_assume!(residues(&wrapped).unwrap().count() == 0);
            let a = unwrap_goldstein(&wrapped).unwrap().phase;
            // Reversed scan order: unwrap the 180-degree rotated grid.
            let rotated = wrapped.slice(ndarray::s![..;-1, ..;-1]).to_owned();
            let b = unwrap_goldstein(&rotated).unwrap().phase;
            let b = b.slice(ndarray::s![..;-1, ..;-1]).to_owned();
            assert_offset_by_2pi_k(&a, &b, 1e-9);
            // Wrapped gradients are preserved.
            for r in 0..24 {
                for c in 0..27 {
                    let du = a[[r, c + 1]] - a[[r, c]];
                    let dw = wrap_phase(wrapped[[r, c + 1]] - wrapped[[r, c]]);
                    prop_assert!((du - dw).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn total_charge_equals_border_winding(
            n_vortices in 1usize..5,
            seeds in proptest::collection::vec((2.2f64..21.8, 2.2f64..21.8, any::<bool>()), 5),
        ) {
            let mut p = Array2::zeros((24, 24));
            for &(y, x, pos) in seeds.iter().take(n_vortices) {
                p = p + vortex(24, 24, y.floor() + 0.5, x.floor() + 0.5, if pos { 1.0 } else { -1.0 });
            }
            let p = p.mapv(wrap_phase);
            let map = residues(&p).unwrap();
            // Winding number: wrapped differences summed around the border.
            let mut border = Vec::new();
            for c in 0..24 { border.push((0, c)); }
            for r in 1..24 { border.push((r, 23)); }
            for c in (0..23).rev() { border.push((23, c)); }
            for r in (0..23).rev() { border.push((r, 0)); }
            border.push((0, 0));
            let wind: f64 = border.windows(2).map(|ab| wrap_phase(p[ab[1]] - p[ab[0]])).sum();
            prop_assert_eq!(map.total_charge(), (wind / (2.0 * PI)).round() as i64);

            let out = unwrap_goldstein(&p).unwrap();
            for (u, wv) in out.phase.iter().zip(p.iter()) {
                prop_assert!(wrap_phase(u - wv).abs() < 1e-9);
            }
            prop_assert_eq!(residues(&out.phase.mapv(wrap_phase)).unwrap(), map);
        }
    }
}
