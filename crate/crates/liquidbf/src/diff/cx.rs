//! Complex arithmetic over an evaluation context, as explicit real pairs.

use num_complex::Complex64;

use super::tape::Ctx;

/// A complex scalar held as two context handles.
#[derive(Debug, Clone, Copy)]
pub struct CxS<S: Copy> {
    pub re: S,
    pub im: S,
}

impl<S: Copy> CxS<S> {
    pub fn new(re: S, im: S) -> Self {
        Self { re, im }
    }
}

pub fn cx_const<C: Ctx>(ctx: &mut C, z: Complex64) -> CxS<C::S> {
    CxS { re: ctx.c(z.re), im: ctx.c(z.im) }
}

pub fn cx_zero<C: Ctx>(ctx: &mut C) -> CxS<C::S> {
    cx_const(ctx, Complex64::new(0.0, 0.0))
}

pub fn cx_add<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>) -> CxS<C::S> {
    CxS { re: ctx.add(a.re, b.re), im: ctx.add(a.im, b.im) }
}

pub fn cx_sub<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>) -> CxS<C::S> {
    CxS { re: ctx.sub(a.re, b.re), im: ctx.sub(a.im, b.im) }
}

pub fn cx_mul<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>) -> CxS<C::S> {
    let im_prod = ctx.mul(a.im, b.im);
    let neg_im = ctx.neg(im_prod);
    let re = ctx.fma(a.re, b.re, neg_im);
    let cross = ctx.mul(a.im, b.re);
    let im = ctx.fma(a.re, b.im, cross);
    CxS { re, im }
}

/// a · conj(b)
pub fn cx_mul_conj<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>) -> CxS<C::S> {
    let im_prod = ctx.mul(a.im, b.im);
    let re = ctx.fma(a.re, b.re, im_prod);
    let cross = ctx.mul(a.im, b.re);
    let neg = ctx.mul(a.re, b.im);
    let neg = ctx.neg(neg);
    let im = ctx.add(cross, neg);
    CxS { re, im }
}

pub fn cx_scale_real<C: Ctx>(ctx: &mut C, a: CxS<C::S>, k: C::S) -> CxS<C::S> {
    CxS { re: ctx.mul(a.re, k), im: ctx.mul(a.im, k) }
}

pub fn cx_norm_sqr<C: Ctx>(ctx: &mut C, a: CxS<C::S>) -> C::S {
    let im2 = ctx.mul(a.im, a.im);
    ctx.fma(a.re, a.re, im2)
}

/// Accumulate `acc + a·b` without materializing the intermediate sum.
pub fn cx_mul_acc<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>, acc: CxS<C::S>) -> CxS<C::S> {
    let im_prod = ctx.mul(a.im, b.im);
    let re_part = ctx.sub(acc.re, im_prod);
    let re = ctx.fma(a.re, b.re, re_part);
    let cross = ctx.fma(a.im, b.re, acc.im);
    let im = ctx.fma(a.re, b.im, cross);
    CxS { re, im }
}

/// Accumulate `acc + a·conj(b)`.
pub fn cx_mul_conj_acc<C: Ctx>(ctx: &mut C, a: CxS<C::S>, b: CxS<C::S>, acc: CxS<C::S>) -> CxS<C::S> {
    let im_prod = ctx.fma(a.im, b.im, acc.re);
    let re = ctx.fma(a.re, b.re, im_prod);
    let neg = ctx.mul(a.re, b.im);
    let neg = ctx.neg(neg);
    let cross = ctx.add(acc.im, neg);
    let im = ctx.fma(a.im, b.re, cross);
    CxS { re, im }
}

/// Dense row-major complex matrix of context scalars.
#[derive(Debug, Clone)]
pub struct CxMat<S: Copy> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<CxS<S>>,
}

impl<S: Copy> CxMat<S> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> CxS<S>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> CxS<S> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: CxS<S>) {
        self.data[r * self.cols + c] = v;
    }
}

/// Reads a context matrix back into concrete complex values.
pub fn cx_mat_values<C: Ctx>(ctx: &C, m: &CxMat<C::S>) -> nalgebra::DMatrix<Complex64> {
    nalgebra::DMatrix::from_fn(m.rows, m.cols, |r, c| {
        let z = m.get(r, c);
        Complex64::new(ctx.value(z.re), ctx.value(z.im))
    })
}
