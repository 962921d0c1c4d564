//! Concrete data operations attached to strands, and the shared arena they
//! operate on.
//!
//! The fork-join programs built by the benchmark module are determinate: any
//! two strands that may run in parallel touch disjoint arena regions, and
//! every reduction uses a fixed combining tree. Payload execution is
//! therefore bitwise deterministic across schedulers, worker counts, seeds,
//! and execution modes.

use std::cell::UnsafeCell;

use serde::{Deserialize, Serialize};

/// Arena buffer handle.
pub type BufId = u32;

/// A rectangular view into a row-major f64 buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatView {
    pub buf: BufId,
    pub row: u32,
    pub col: u32,
    pub stride: u32,
}

impl MatView {
    pub fn whole(buf: BufId, n: u32) -> Self {
        MatView {
            buf,
            row: 0,
            col: 0,
            stride: n,
        }
    }

    pub fn shifted(self, dr: u32, dc: u32) -> Self {
        MatView {
            buf: self.buf,
            row: self.row + dr,
            col: self.col + dc,
            stride: self.stride,
        }
    }

    fn at(&self, r: usize, c: usize) -> usize {
        (self.row as usize + r) * self.stride as usize + self.col as usize + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatOp {
    Add,
    Sub,
}

/// One unit of real computation carried by a strand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    /// Sort ints[buf][lo..hi) in place.
    SortRun { buf: BufId, lo: usize, hi: usize },
    /// Merge src[a_lo..a_hi) and src[b_lo..b_hi) into dst starting at out.
    MergeRuns {
        src: BufId,
        a_lo: usize,
        a_hi: usize,
        b_lo: usize,
        b_hi: usize,
        dst: BufId,
        out: usize,
    },
    /// Copy src[lo..hi) to dst[dst_lo..).
    CopyRun {
        src: BufId,
        dst: BufId,
        lo: usize,
        hi: usize,
        dst_lo: usize,
    },
    /// Five-point Jacobi step over rows r0..r1, cols c0..c1 of an n x n
    /// plane (borders are held fixed).
    JacobiTile {
        src: BufId,
        dst: BufId,
        n: usize,
        r0: usize,
        r1: usize,
        c0: usize,
        c1: usize,
    },
    /// c (+|-)= a * b for n x n views; set overwrites c first.
    MatMul {
        a: MatView,
        b: MatView,
        c: MatView,
        n: usize,
        set: bool,
        op: MatOp,
    },
    /// c = a (+|-) b elementwise for n x n views.
    MatAdd {
        a: MatView,
        b: MatView,
        c: MatView,
        n: usize,
        op: MatOp,
    },
    /// dst = src for n x n views.
    MatCopy { src: MatView, dst: MatView, n: usize },
    /// Unpivoted LU of an n x n view, in place (L unit lower).
    LuBase { a: MatView, n: usize },
    /// a := L^-1 a where l is unit lower triangular, n x n views.
    TrsmLower { l: MatView, a: MatView, n: usize },
    /// a := a U^-1 where u is upper triangular, n x n views.
    TrsmUpper { u: MatView, a: MatView, n: usize },
    /// floats[out][out_idx] = sum of floats[buf][lo..hi).
    SumRun {
        buf: BufId,
        lo: usize,
        hi: usize,
        out: BufId,
        out_idx: usize,
    },
    /// In-place sequential inclusive prefix sum of floats[buf][lo..hi).
    ScanSeq { buf: BufId, lo: usize, hi: usize },
    /// Inclusive prefix sum of floats[buf][lo..hi) plus the exclusive
    /// offset floats[offsets][idx].
    ScanRunOffset {
        buf: BufId,
        lo: usize,
        hi: usize,
        offsets: BufId,
        idx: usize,
    },
    /// y[r0..r1) = (Ax)[r0..r1) for the 2D Laplacian stencil matrix on a
    /// w x w grid (SPD; 4 on the diagonal, -1 for grid neighbors).
    SpmvLap {
        x: BufId,
        y: BufId,
        w: usize,
        r0: usize,
        r1: usize,
    },
    /// floats[out][out_idx] = dot(a[lo..hi), b[lo..hi)).
    DotRange {
        a: BufId,
        b: BufId,
        lo: usize,
        hi: usize,
        out: BufId,
        out_idx: usize,
    },
    /// y[lo..hi) += scale * floats[alpha][alpha_idx] * x[lo..hi).
    AxpySlot {
        y: BufId,
        x: BufId,
        alpha: BufId,
        alpha_idx: usize,
        scale: f64,
        lo: usize,
        hi: usize,
    },
    /// p[lo..hi) = r[lo..hi) + floats[beta][beta_idx] * p[lo..hi).
    XpbySlot {
        p: BufId,
        r: BufId,
        beta: BufId,
        beta_idx: usize,
        lo: usize,
        hi: usize,
    },
    /// floats[out][out_idx] = floats[num][num_idx] / floats[den][den_idx].
    ScalarDiv {
        num: BufId,
        num_idx: usize,
        den: BufId,
        den_idx: usize,
        out: BufId,
        out_idx: usize,
    },
    /// dst[dst_lo..) = src[lo..hi) for f64 buffers (src != dst).
    VecCopy {
        src: BufId,
        dst: BufId,
        lo: usize,
        hi: usize,
        dst_lo: usize,
    },
}

enum ArenaBuf {
    I64(Vec<i64>),
    F64(Vec<f64>),
}

/// Shared data store for benchmark payloads.
///
/// Mutable access hands out raw slices through `UnsafeCell`; soundness rests
/// on the determinacy of the generated programs (parallel strands never
/// overlap in their write sets, and reads never overlap concurrent writes).
pub struct DataArena {
    bufs: Vec<UnsafeCell<ArenaBuf>>,
}

unsafe impl Sync for DataArena {}

impl DataArena {
    pub fn new() -> Self {
        DataArena { bufs: Vec::new() }
    }

    pub fn alloc_i64(&mut self, data: Vec<i64>) -> BufId {
        self.bufs.push(UnsafeCell::new(ArenaBuf::I64(data)));
        (self.bufs.len() - 1) as BufId
    }

    pub fn alloc_f64(&mut self, data: Vec<f64>) -> BufId {
        self.bufs.push(UnsafeCell::new(ArenaBuf::F64(data)));
        (self.bufs.len() - 1) as BufId
    }

    /// # Safety
    /// Caller must guarantee no concurrent aliasing access to `buf`.
    #[allow(clippy::mut_from_ref)]
    unsafe fn i64_mut(&self, buf: BufId) -> &mut Vec<i64> {
        match &mut *self.bufs[buf as usize].get() {
            ArenaBuf::I64(v) => v,
            ArenaBuf::F64(_) => panic!("buffer {buf} is f64, expected i64"),
        }
    }

    /// # Safety
    /// Caller must guarantee no concurrent aliasing access to `buf`.
    #[allow(clippy::mut_from_ref)]
    unsafe fn f64_mut(&self, buf: BufId) -> &mut Vec<f64> {
        match &mut *self.bufs[buf as usize].get() {
            ArenaBuf::F64(v) => v,
            ArenaBuf::I64(_) => panic!("buffer {buf} is i64, expected f64"),
        }
    }

    /// Raw base pointer for matrix kernels whose operand views may live in
    /// the same buffer (disjoint regions); reference-based access would
    /// alias.
    ///
    /// # Safety
    /// Same non-concurrent-aliasing contract as `f64_mut`.
    unsafe fn f64_ptr(&self, buf: BufId) -> (*mut f64, usize) {
        let v = self.f64_mut(buf);
        (v.as_mut_ptr(), v.len())
    }

    /// Snapshot of an i64 buffer (single-threaded contexts only).
    pub fn i64_vec(&self, buf: BufId) -> Vec<i64> {
        unsafe { self.i64_mut(buf).clone() }
    }

    /// Snapshot of an f64 buffer (single-threaded contexts only).
    pub fn f64_vec(&self, buf: BufId) -> Vec<f64> {
        unsafe { self.f64_mut(buf).clone() }
    }

    /// FNV-1a over the raw bytes of the listed buffers, in order.
    pub fn checksum(&self, bufs: &[BufId]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &id in bufs {
            unsafe {
                match &*self.bufs[id as usize].get() {
                    ArenaBuf::I64(v) => {
                        for x in v {
                            eat(&x.to_le_bytes());
                        }
                    }
                    ArenaBuf::F64(v) => {
                        for x in v {
                            eat(&x.to_bits().to_le_bytes());
                        }
                    }
                }
            }
        }
        h
    }
}

impl Default for DataArena {
    fn default() -> Self {
        Self::new()
    }
}

impl Payload {
    /// Run this operation against the arena.
    ///
    /// # Safety contract (internal)
    /// Callers are the execution engines; the program structure guarantees
    /// the regions touched here are not concurrently aliased.
    pub fn execute(&self, ar: &DataArena) {
        unsafe { self.execute_inner(ar) }
    }

    unsafe fn execute_inner(&self, ar: &DataArena) {
        match *self {
            Payload::SortRun { buf, lo, hi } => {
                ar.i64_mut(buf)[lo..hi].sort_unstable();
            }
            Payload::MergeRuns {
                src,
                a_lo,
                a_hi,
                b_lo,
                b_hi,
                dst,
                out,
            } => {
                debug_assert_ne!(src, dst);
                let s = &ar.i64_mut(src)[..];
                let d = ar.i64_mut(dst);
                let (mut i, mut j, mut o) = (a_lo, b_lo, out);
                while i < a_hi && j < b_hi {
                    if s[i] <= s[j] {
                        d[o] = s[i];
                        i += 1;
                    } else {
                        d[o] = s[j];
                        j += 1;
                    }
                    o += 1;
                }
                while i < a_hi {
                    d[o] = s[i];
                    i += 1;
                    o += 1;
                }
                while j < b_hi {
                    d[o] = s[j];
                    j += 1;
                    o += 1;
                }
            }
            Payload::CopyRun {
                src,
                dst,
                lo,
                hi,
                dst_lo,
            } => {
                debug_assert_ne!(src, dst);
                let s = &ar.i64_mut(src)[..];
                let d = ar.i64_mut(dst);
                d[dst_lo..dst_lo + (hi - lo)].copy_from_slice(&s[lo..hi]);
            }
            Payload::JacobiTile {
                src,
                dst,
                n,
                r0,
                r1,
                c0,
                c1,
            } => {
                debug_assert_ne!(src, dst);
                let s = &ar.f64_mut(src)[..];
                let d = ar.f64_mut(dst);
                for r in r0..r1 {
                    for c in c0..c1 {
                        let i = r * n + c;
                        if r == 0 || c == 0 || r == n - 1 || c == n - 1 {
                            d[i] = s[i];
                        } else {
                            d[i] =
                                0.25 * (s[i - n] + s[i + n] + s[i - 1] + s[i + 1]);
                        }
                    }
                }
            }
            // The matrix kernels below may see operand views inside one
            // buffer (disjoint quadrants), so they go through raw pointers.
            Payload::MatMul { a, b, c, n, set, op } => {
                let (ap, al) = ar.f64_ptr(a.buf);
                let (bp, bl) = ar.f64_ptr(b.buf);
                let (cp, cl) = ar.f64_ptr(c.buf);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            debug_assert!(a.at(i, k) < al && b.at(k, j) < bl);
                            acc += *ap.add(a.at(i, k)) * *bp.add(b.at(k, j));
                        }
                        let signed = if op == MatOp::Sub { -acc } else { acc };
                        debug_assert!(c.at(i, j) < cl);
                        let dst = cp.add(c.at(i, j));
                        if set {
                            *dst = signed;
                        } else {
                            *dst += signed;
                        }
                    }
                }
            }
            Payload::MatAdd { a, b, c, n, op } => {
                let (ap, al) = ar.f64_ptr(a.buf);
                let (bp, bl) = ar.f64_ptr(b.buf);
                let (cp, cl) = ar.f64_ptr(c.buf);
                for i in 0..n {
                    for j in 0..n {
                        debug_assert!(a.at(i, j) < al && b.at(i, j) < bl && c.at(i, j) < cl);
                        let x = *ap.add(a.at(i, j));
                        let y = *bp.add(b.at(i, j));
                        *cp.add(c.at(i, j)) = match op {
                            MatOp::Add => x + y,
                            MatOp::Sub => x - y,
                        };
                    }
                }
            }
            Payload::MatCopy { src, dst, n } => {
                let (sp, sl) = ar.f64_ptr(src.buf);
                let (dp, dl) = ar.f64_ptr(dst.buf);
                for i in 0..n {
                    for j in 0..n {
                        debug_assert!(src.at(i, j) < sl && dst.at(i, j) < dl);
                        *dp.add(dst.at(i, j)) = *sp.add(src.at(i, j));
                    }
                }
            }
            Payload::LuBase { a, n } => {
                let (ap, al) = ar.f64_ptr(a.buf);
                debug_assert!(a.at(n - 1, n - 1) < al);
                for k in 0..n {
                    let pivot = *ap.add(a.at(k, k));
                    for i in k + 1..n {
                        let f = *ap.add(a.at(i, k)) / pivot;
                        *ap.add(a.at(i, k)) = f;
                        for j in k + 1..n {
                            *ap.add(a.at(i, j)) -= f * *ap.add(a.at(k, j));
                        }
                    }
                }
            }
            Payload::TrsmLower { l, a, n } => {
                let (lp, _) = ar.f64_ptr(l.buf);
                let (ap, al) = ar.f64_ptr(a.buf);
                debug_assert!(a.at(n - 1, n - 1) < al);
                // Forward substitution per column; L is unit lower.
                for j in 0..n {
                    for i in 0..n {
                        let mut acc = *ap.add(a.at(i, j));
                        for k in 0..i {
                            acc -= *lp.add(l.at(i, k)) * *ap.add(a.at(k, j));
                        }
                        *ap.add(a.at(i, j)) = acc;
                    }
                }
            }
            Payload::TrsmUpper { u, a, n } => {
                let (up, _) = ar.f64_ptr(u.buf);
                let (ap, al) = ar.f64_ptr(a.buf);
                debug_assert!(a.at(n - 1, n - 1) < al);
                // Back substitution per row: a := a U^-1.
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = *ap.add(a.at(i, j));
                        for k in 0..j {
                            acc -= *ap.add(a.at(i, k)) * *up.add(u.at(k, j));
                        }
                        *ap.add(a.at(i, j)) = acc / *up.add(u.at(j, j));
                    }
                }
            }
            Payload::SumRun {
                buf,
                lo,
                hi,
                out,
                out_idx,
            } => {
                debug_assert_ne!(buf, out);
                let v = &ar.f64_mut(buf)[..];
                let s: f64 = v[lo..hi].iter().sum();
                ar.f64_mut(out)[out_idx] = s;
            }
            Payload::ScanSeq { buf, lo, hi } => {
                let v = ar.f64_mut(buf);
                let mut acc = 0.0;
                for x in &mut v[lo..hi] {
                    acc += *x;
                    *x = acc;
                }
            }
            Payload::ScanRunOffset {
                buf,
                lo,
                hi,
                offsets,
                idx,
            } => {
                let off = ar.f64_mut(offsets)[idx];
                let v = ar.f64_mut(buf);
                let mut acc = off;
                for x in &mut v[lo..hi] {
                    acc += *x;
                    *x = acc;
                }
            }
            Payload::SpmvLap { x, y, w, r0, r1 } => {
                debug_assert_ne!(x, y);
                let xv = &ar.f64_mut(x)[..];
                let yv = ar.f64_mut(y);
                let n = w * w;
                for r in r0..r1 {
                    let mut acc = 4.0 * xv[r];
                    if r % w > 0 {
                        acc -= xv[r - 1];
                    }
                    if r % w < w - 1 {
                        acc -= xv[r + 1];
                    }
                    if r >= w {
                        acc -= xv[r - w];
                    }
                    if r + w < n {
                        acc -= xv[r + w];
                    }
                    yv[r] = acc;
                }
            }
            Payload::DotRange {
                a,
                b,
                lo,
                hi,
                out,
                out_idx,
            } => {
                let acc = if a == b {
                    let av = &ar.f64_mut(a)[..];
                    av[lo..hi].iter().map(|x| x * x).sum::<f64>()
                } else {
                    let av = &ar.f64_mut(a)[..];
                    let bv = &ar.f64_mut(b)[..];
                    let mut acc = 0.0;
                    for i in lo..hi {
                        acc += av[i] * bv[i];
                    }
                    acc
                };
                ar.f64_mut(out)[out_idx] = acc;
            }
            Payload::AxpySlot {
                y,
                x,
                alpha,
                alpha_idx,
                scale,
                lo,
                hi,
            } => {
                debug_assert_ne!(y, x);
                let a = scale * ar.f64_mut(alpha)[alpha_idx];
                let xv = &ar.f64_mut(x)[..];
                let yv = ar.f64_mut(y);
                for i in lo..hi {
                    yv[i] += a * xv[i];
                }
            }
            Payload::XpbySlot {
                p,
                r,
                beta,
                beta_idx,
                lo,
                hi,
            } => {
                debug_assert_ne!(p, r);
                let b = ar.f64_mut(beta)[beta_idx];
                let rv = &ar.f64_mut(r)[..];
                let pv = ar.f64_mut(p);
                for i in lo..hi {
                    pv[i] = rv[i] + b * pv[i];
                }
            }
            Payload::ScalarDiv {
                num,
                num_idx,
                den,
                den_idx,
                out,
                out_idx,
            } => {
                let n = ar.f64_mut(num)[num_idx];
                let d = ar.f64_mut(den)[den_idx];
                ar.f64_mut(out)[out_idx] = n / d;
            }
            Payload::VecCopy {
                src,
                dst,
                lo,
                hi,
                dst_lo,
            } => {
                debug_assert_ne!(src, dst);
                let s = &ar.f64_mut(src)[..];
                let d = ar.f64_mut(dst);
                d[dst_lo..dst_lo + (hi - lo)].copy_from_slice(&s[lo..hi]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_produces_sorted_output() {
        let mut ar = DataArena::new();
        let src = ar.alloc_i64(vec![1, 4, 9, 2, 3, 8]);
        let dst = ar.alloc_i64(vec![0; 6]);
        Payload::MergeRuns {
            src,
            a_lo: 0,
            a_hi: 3,
            b_lo: 3,
            b_hi: 6,
            dst,
            out: 0,
        }
        .execute(&ar);
        assert_eq!(ar.i64_vec(dst), vec![1, 2, 3, 4, 8, 9]);
    }

    #[test]
    fn lu_then_trsm_recovers_identity_factor() {
        // LU of a small diagonally dominant matrix; check L*U == A.
        let n = 4;
        let a_data: Vec<f64> = (0..n * n)
            .map(|i| if i % (n + 1) == 0 { 8.0 } else { 1.0 + (i % 3) as f64 })
            .collect();
        let mut ar = DataArena::new();
        let a = ar.alloc_f64(a_data.clone());
        let v = MatView::whole(a, n as u32);
        Payload::LuBase { a: v, n }.execute(&ar);
        let lu = ar.f64_vec(a);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..=i.min(j) {
                    let l = if k == i { 1.0 } else { lu[i * n + k] };
                    let u = if k <= j { lu[k * n + j] } else { 0.0 };
                    if k < i {
                        acc += lu[i * n + k] * if k <= j { lu[k * n + j] } else { 0.0 };
                    } else {
                        acc += l * u;
                    }
                }
                assert!(
                    (acc - a_data[i * n + j]).abs() < 1e-9,
                    "LU mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn spmv_matches_dense_laplacian() {
        let w = 3;
        let n = w * w;
        let mut ar = DataArena::new();
        let x = ar.alloc_f64((0..n).map(|i| i as f64 + 1.0).collect());
        let y = ar.alloc_f64(vec![0.0; n]);
        Payload::SpmvLap { x, y, w, r0: 0, r1: n }.execute(&ar);
        let xv = ar.f64_vec(x);
        let yv = ar.f64_vec(y);
        for r in 0..n {
            let mut want = 4.0 * xv[r];
            if r % w > 0 {
                want -= xv[r - 1];
            }
            if r % w < w - 1 {
                want -= xv[r + 1];
            }
            if r >= w {
                want -= xv[r - w];
            }
            if r + w < n {
                want -= xv[r + w];
            }
            assert_eq!(yv[r], want);
        }
    }

    #[test]
    fn checksum_is_order_sensitive_and_stable() {
        let mut ar = DataArena::new();
        let a = ar.alloc_i64(vec![1, 2, 3]);
        let b = ar.alloc_i64(vec![3, 2, 1]);
        assert_ne!(ar.checksum(&[a]), ar.checksum(&[b]));
        assert_eq!(ar.checksum(&[a, b]), ar.checksum(&[a, b]));
    }
}
