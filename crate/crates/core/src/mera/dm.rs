//! Dense operators on a labelled list of wires: density matrices going
//! forward through the network and observables being pulled back through it.

use super::gate::{dagger4, Mat4};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct WireOp {
    /// Wire `wires[k]` is bit `n-1-k` of the row/column index.
    pub wires: Vec<usize>,
    pub data: Vec<C64>,
}

#[inline]
fn insert_bit(x: usize, p: usize, b: usize) -> usize {
    let low = x & ((1 << p) - 1);
    ((x >> p) << (p + 1)) | (b << p) | low
}

impl WireOp {
    pub fn scalar(v: f64) -> Self {
        Self { wires: Vec::new(), data: vec![C64::new(v, 0.0)] }
    }

    pub fn zeros(wires: Vec<usize>) -> Self {
        let d = 1 << wires.len();
        Self { wires, data: vec![ZERO; d * d] }
    }

    pub fn n(&self) -> usize {
        self.wires.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.wires.len()
    }

    pub fn pos(&self, w: usize) -> Option<usize> {
        self.wires.iter().position(|&x| x == w)
    }

    fn bitpos(&self, w: usize) -> usize {
        self.n() - 1 - self.pos(w).expect("wire not present")
    }

    /// `U A U^dag` with `U` acting on wires `(wa, wb)`.
    pub fn conjugate(&mut self, u: &Mat4, wa: usize, wb: usize) {
        self.left(u, wa, wb);
        self.right_dagger(u, wa, wb);
    }

    /// `U^dag A U`.
    pub fn pull_back(&mut self, u: &Mat4, wa: usize, wb: usize) {
        self.conjugate(&dagger4(u), wa, wb);
    }

    /// `A <- U A`.
    pub fn left(&mut self, u: &Mat4, wa: usize, wb: usize) {
        let d = self.dim();
        let (ma, mb) = (1 << self.bitpos(wa), 1 << self.bitpos(wb));
        let data = &mut self.data;
        for s in 0..d {
            if s & (ma | mb) != 0 {
                continue;
            }
            let rows = [s, s | mb, s | ma, s | ma | mb];
            for c in 0..d {
                let v = [data[rows[0] * d + c], data[rows[1] * d + c], data[rows[2] * d + c], data[rows[3] * d + c]];
                for (r, &row) in rows.iter().enumerate() {
                    let ur = &u[r];
                    data[row * d + c] = ur[0] * v[0] + ur[1] * v[1] + ur[2] * v[2] + ur[3] * v[3];
                }
            }
        }
    }

    /// `A <- A U^dag`.
    pub fn right_dagger(&mut self, u: &Mat4, wa: usize, wb: usize) {
        let d = self.dim();
        let (ma, mb) = (1 << self.bitpos(wa), 1 << self.bitpos(wb));
        let mut uc = [[ZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                uc[i][j] = u[i][j].conj();
            }
        }
        for r in 0..d {
            let row = &mut self.data[r * d..(r + 1) * d];
            for s in 0..d {
                if s & (ma | mb) != 0 {
                    continue;
                }
                let cols = [s, s | mb, s | ma, s | ma | mb];
                let v = [row[cols[0]], row[cols[1]], row[cols[2]], row[cols[3]]];
                for (k, &col) in cols.iter().enumerate() {
                    let uk = &uc[k];
                    row[col] = v[0] * uk[0] + v[1] * uk[1] + v[2] * uk[2] + v[3] * uk[3];
                }
            }
        }
    }

    /// `U A U^dag` for a parity-preserving `U` (nonzero only on the
    /// `{00, 11}` and `{01, 10}` blocks) and an operator that commutes with
    /// the parity of its wires. Entries coupling opposite parities are
    /// neither read nor written; they stay zero.
    pub fn conjugate_even(&mut self, u: &Mat4, wa: usize, wb: usize) {
        let d = self.dim();
        let (ma, mb) = (1 << self.bitpos(wa), 1 << self.bitpos(wb));
        let even = [[u[0][0], u[0][3]], [u[3][0], u[3][3]]];
        let odd = [[u[1][1], u[1][2]], [u[2][1], u[2][2]]];
        let par = |x: usize| (x.count_ones() & 1) as usize;
        let by_par: [Vec<usize>; 2] = [
            (0..d).filter(|&x| par(x) == 0).collect(),
            (0..d).filter(|&x| par(x) == 1).collect(),
        ];
        let mut bases: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for s in (0..d).filter(|s| s & (ma | mb) == 0) {
            bases[par(s)].push(s);
        }
        let data = &mut self.data;
        // left: mix rows; columns of the matching parity only
        for ps in 0..2 {
            for &s in &bases[ps] {
                for (pc, blk) in [(ps, &even), (1 - ps, &odd)] {
                    let (r0, r1) = if pc == ps { (s, s | ma | mb) } else { (s | mb, s | ma) };
                    for &c in &by_par[pc] {
                        let (x, y) = (data[r0 * d + c], data[r1 * d + c]);
                        data[r0 * d + c] = blk[0][0] * x + blk[0][1] * y;
                        data[r1 * d + c] = blk[1][0] * x + blk[1][1] * y;
                    }
                }
            }
        }
        // right: times U^dag, mixing columns
        let cj = |m: &[[C64; 2]; 2]| [[m[0][0].conj(), m[0][1].conj()], [m[1][0].conj(), m[1][1].conj()]];
        let (ce, co) = (cj(&even), cj(&odd));
        for r in 0..d {
            let pr = par(r);
            let row = &mut data[r * d..(r + 1) * d];
            for &s in &bases[pr] {
                let (x, y) = (row[s], row[s | ma | mb]);
                row[s] = x * ce[0][0] + y * ce[0][1];
                row[s | ma | mb] = x * ce[1][0] + y * ce[1][1];
            }
            for &s in &bases[1 - pr] {
                let (x, y) = (row[s | mb], row[s | ma]);
                row[s | mb] = x * co[0][0] + y * co[0][1];
                row[s | ma] = x * co[1][0] + y * co[1][1];
            }
        }
    }

    pub fn trace_out(&self, w: usize) -> WireOp {
        let k = self.pos(w).expect("wire not present");
        let p = self.n() - 1 - k;
        let mut wires = self.wires.clone();
        wires.remove(k);
        let nd = self.dim() / 2;
        let d = self.dim();
        let mut data = vec![ZERO; nd * nd];
        for r in 0..nd {
            for c in 0..nd {
                let mut acc = ZERO;
                for b in 0..2 {
                    acc += self.data[insert_bit(r, p, b) * d + insert_bit(c, p, b)];
                }
                data[r * nd + c] = acc;
            }
        }
        WireOp { wires, data }
    }

    /// `A (x) |0><0|` with the new wire appended last.
    pub fn append_zero(&self, w: usize) -> WireOp {
        let d = self.dim();
        let nd = 2 * d;
        let mut wires = self.wires.clone();
        wires.push(w);
        let mut data = vec![ZERO; nd * nd];
        for r in 0..d {
            for c in 0..d {
                data[(r << 1) * nd + (c << 1)] = self.data[r * d + c];
            }
        }
        WireOp { wires, data }
    }

    /// `A (x) 1` with the new wire placed at position `k`.
    pub fn insert_identity(&self, k: usize, w: usize) -> WireOp {
        let d = self.dim();
        let nd = 2 * d;
        let n1 = self.n() + 1;
        let p = n1 - 1 - k;
        let mut wires = self.wires.clone();
        wires.insert(k, w);
        let mut data = vec![ZERO; nd * nd];
        for r in 0..d {
            for c in 0..d {
                let v = self.data[r * d + c];
                for b in 0..2 {
                    data[insert_bit(r, p, b) * nd + insert_bit(c, p, b)] = v;
                }
            }
        }
        WireOp { wires, data }
    }

    /// `<0|_w A |0>_w`.
    pub fn project_zero(&self, w: usize) -> WireOp {
        let k = self.pos(w).expect("wire not present");
        let p = self.n() - 1 - k;
        let d = self.dim();
        let nd = d / 2;
        let mut wires = self.wires.clone();
        wires.remove(k);
        let mut data = vec![ZERO; nd * nd];
        for r in 0..nd {
            for c in 0..nd {
                data[r * nd + c] = self.data[insert_bit(r, p, 0) * d + insert_bit(c, p, 0)];
            }
        }
        WireOp { wires, data }
    }

    /// Same operator with wires listed in `order` (a permutation of `wires`).
    pub fn reorder(&self, order: &[usize]) -> WireOp {
        if order == self.wires.as_slice() {
            return self.clone();
        }
        let n = self.n();
        assert_eq!(order.len(), n);
        let src: Vec<usize> = order.iter().map(|&w| n - 1 - self.pos(w).expect("wire not present")).collect();
        let d = self.dim();
        // new index -> old index
        let map: Vec<usize> = (0..d)
            .map(|x| {
                let mut old = 0;
                for (k, &sp) in src.iter().enumerate() {
                    if x >> (n - 1 - k) & 1 == 1 {
                        old |= 1 << sp;
                    }
                }
                old
            })
            .collect();
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[r * d + c] = self.data[map[r] * d + map[c]];
            }
        }
        WireOp { wires: order.to_vec(), data }
    }

    /// `A (x) B` on the concatenated wire list.
    pub fn kron(&self, b: &WireOp) -> WireOp {
        let (da, db) = (self.dim(), b.dim());
        let d = da * db;
        let mut data = vec![ZERO; d * d];
        for ra in 0..da {
            for ca in 0..da {
                let x = self.data[ra * da + ca];
                if x == ZERO {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        data[(ra * db + rb) * d + ca * db + cb] = x * b.data[rb * db + cb];
                    }
                }
            }
        }
        WireOp { wires: [self.wires.clone(), b.wires.clone()].concat(), data }
    }

    /// `Tr(A B)` for operators on the same wire list.
    pub fn trace_product(&self, other: &WireOp) -> C64 {
        debug_assert_eq!(self.wires, other.wires);
        let d = self.dim();
        let mut acc = ZERO;
        for r in 0..d {
            for c in 0..d {
                acc += self.data[r * d + c] * other.data[c * d + r];
            }
        }
        acc
    }

    pub fn add_assign(&mut self, other: &WireOp) {
        debug_assert_eq!(self.wires, other.wires);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.data[i * d + i]).sum()
    }

    /// [`Self::reduce_pair`] for two Hermitian, parity-commuting operators.
    pub fn reduce_pair_even(a: &WireOp, b: &WireOp, wa: usize, wb: usize) -> Mat4 {
        debug_assert_eq!(a.wires, b.wires);
        let d = a.dim();
        let (ma, mb) = (1 << a.bitpos(wa), 1 << a.bitpos(wb));
        let par = |x: usize| (x.count_ones() & 1) as usize;
        let mut k = [[ZERO; 4]; 4];
        let offs = [0, mb, ma, ma | mb];
        for s in 0..d {
            if s & (ma | mb) != 0 {
                continue;
            }
            for i in 0..4 {
                let ri = s | offs[i];
                let row = &a.data[ri * d..(ri + 1) * d];
                for j in 0..4 {
                    let cj = s | offs[j];
                    if par(cj) != par(ri) {
                        continue;
                    }
                    // B[x][cj] = conj(B[cj][x])
                    let brow = &b.data[cj * d..(cj + 1) * d];
                    let (mut re, mut im) = (0.0, 0.0);
                    for (p, q) in row.iter().zip(brow) {
                        re += p.re * q.re + p.im * q.im;
                        im += p.im * q.re - p.re * q.im;
                    }
                    k[i][j] += C64::new(re, im);
                }
            }
        }
        k
    }

    /// `Tr_rest(A B)` as a 4x4 matrix on `(wa, wb)`.
    pub fn reduce_pair(a: &WireOp, b: &WireOp, wa: usize, wb: usize) -> Mat4 {
        debug_assert_eq!(a.wires, b.wires);
        let d = a.dim();
        let (ma, mb) = (1 << a.bitpos(wa), 1 << a.bitpos(wb));
        // column access to b through its transpose
        let mut bt = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                bt[c * d + r] = b.data[r * d + c];
            }
        }
        let mut k = [[ZERO; 4]; 4];
        let offs = [0, mb, ma, ma | mb];
        for s in 0..d {
            if s & (ma | mb) != 0 {
                continue;
            }
            for i in 0..4 {
                let row = &a.data[(s | offs[i]) * d..((s | offs[i]) + 1) * d];
                for j in 0..4 {
                    let col = &bt[(s | offs[j]) * d..((s | offs[j]) + 1) * d];
                    let mut acc = ZERO;
                    for (x, y) in row.iter().zip(col) {
                        acc += x * y;
                    }
                    k[i][j] += acc;
                }
            }
        }
        k
    }
}
