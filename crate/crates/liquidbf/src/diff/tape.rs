//! The evaluation-context trait and its two implementations.

/// Numerically stable logistic function, shared by both contexts.
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus ln(1 + eˣ), shared by both contexts.
pub fn softplus_f64(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// An evaluation context for scalar computation graphs.
///
/// `S` is the handle for one scalar: a plain `f64` under [`F64Ctx`], a node
/// id under [`Tape`]. `leaf` marks differentiation targets; `c` introduces
/// constants that gradients do not flow into.
pub trait Ctx {
    type S: Copy;

    fn c(&mut self, v: f64) -> Self::S;
    fn leaf(&mut self, v: f64) -> Self::S;
    fn value(&self, s: Self::S) -> f64;

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn div(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn neg(&mut self, a: Self::S) -> Self::S;
    /// a·b + c with the same two roundings in every context.
    fn fma(&mut self, a: Self::S, b: Self::S, c: Self::S) -> Self::S;
    fn scale(&mut self, a: Self::S, k: f64) -> Self::S;
    fn exp(&mut self, a: Self::S) -> Self::S;
    fn ln(&mut self, a: Self::S) -> Self::S;
    fn sqrt(&mut self, a: Self::S) -> Self::S;
    fn tanh(&mut self, a: Self::S) -> Self::S;
    fn sigmoid(&mut self, a: Self::S) -> Self::S;
    fn softplus(&mut self, a: Self::S) -> Self::S;
    /// max(a, k); the subgradient sends everything to `a` only when a > k.
    fn max_const(&mut self, a: Self::S, k: f64) -> Self::S;
}

/// Direct evaluation on `f64`, no recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct F64Ctx;

impl Ctx for F64Ctx {
    type S = f64;

    #[inline]
    fn c(&mut self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn leaf(&mut self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn value(&self, s: f64) -> f64 {
        s
    }
    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline]
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    #[inline]
    fn fma(&mut self, a: f64, b: f64, c: f64) -> f64 {
        a * b + c
    }
    #[inline]
    fn scale(&mut self, a: f64, k: f64) -> f64 {
        a * k
    }
    #[inline]
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    #[inline]
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    #[inline]
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
    #[inline]
    fn tanh(&mut self, a: f64) -> f64 {
        a.tanh()
    }
    #[inline]
    fn sigmoid(&mut self, a: f64) -> f64 {
        sigmoid_f64(a)
    }
    #[inline]
    fn softplus(&mut self, a: f64) -> f64 {
        softplus_f64(a)
    }
    #[inline]
    fn max_const(&mut self, a: f64, k: f64) -> f64 {
        a.max(k)
    }
}

/// Handle of one recorded scalar on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Copy)]
enum Op {
    Nullary,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Fma(u32, u32, u32),
    Scale(u32, f64),
    Exp(u32),
    Ln(u32),
    Sqrt(u32),
    Tanh(u32),
    Sigmoid(u32),
    Softplus(u32),
    MaxConst(u32, f64),
}

/// Recording context: eager forward evaluation plus an operation log that
/// [`Tape::backward`] replays in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all recorded state but keeps the allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.vals.clear();
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    #[inline]
    fn push(&mut self, op: Op, val: f64) -> NodeId {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        NodeId(id)
    }

    /// Accumulates dOut/dNode for every node by one reverse sweep from `out`.
    ///
    /// Index the result with [`NodeId`]s via [`Tape::grad`].
    pub fn backward(&self, out: NodeId) -> Gradients {
        let mut g = vec![0.0f64; self.ops.len()];
        g[out.0 as usize] = 1.0;
        for idx in (0..self.ops.len()).rev() {
            let go = g[idx];
            if go == 0.0 {
                continue;
            }
            match self.ops[idx] {
                Op::Nullary => {}
                Op::Add(a, b) => {
                    g[a as usize] += go;
                    g[b as usize] += go;
                }
                Op::Sub(a, b) => {
                    g[a as usize] += go;
                    g[b as usize] -= go;
                }
                Op::Mul(a, b) => {
                    g[a as usize] += go * self.vals[b as usize];
                    g[b as usize] += go * self.vals[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = self.vals[b as usize];
                    g[a as usize] += go / vb;
                    g[b as usize] -= go * self.vals[idx] / vb;
                }
                Op::Neg(a) => g[a as usize] -= go,
                Op::Fma(a, b, c) => {
                    g[a as usize] += go * self.vals[b as usize];
                    g[b as usize] += go * self.vals[a as usize];
                    g[c as usize] += go;
                }
                Op::Scale(a, k) => g[a as usize] += go * k,
                Op::Exp(a) => g[a as usize] += go * self.vals[idx],
                Op::Ln(a) => g[a as usize] += go / self.vals[a as usize],
                Op::Sqrt(a) => g[a as usize] += go / (2.0 * self.vals[idx]),
                Op::Tanh(a) => {
                    let y = self.vals[idx];
                    g[a as usize] += go * (1.0 - y * y);
                }
                Op::Sigmoid(a) => {
                    let y = self.vals[idx];
                    g[a as usize] += go * y * (1.0 - y);
                }
                Op::Softplus(a) => g[a as usize] += go * sigmoid_f64(self.vals[a as usize]),
                Op::MaxConst(a, k) => {
                    if self.vals[a as usize] > k {
                        g[a as usize] += go;
                    }
                }
            }
        }
        Gradients(g)
    }
}

/// Gradient of one output with respect to every recorded node.
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn get(&self, id: NodeId) -> f64 {
        self.0[id.0 as usize]
    }
}

impl Ctx for Tape {
    type S = NodeId;

    fn c(&mut self, v: f64) -> NodeId {
        self.push(Op::Nullary, v)
    }
    fn leaf(&mut self, v: f64) -> NodeId {
        self.push(Op::Nullary, v)
    }
    fn value(&self, s: NodeId) -> f64 {
        self.vals[s.0 as usize]
    }
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize] + self.vals[b.0 as usize];
        self.push(Op::Add(a.0, b.0), v)
    }
    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize] - self.vals[b.0 as usize];
        self.push(Op::Sub(a.0, b.0), v)
    }
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize] * self.vals[b.0 as usize];
        self.push(Op::Mul(a.0, b.0), v)
    }
    fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize] / self.vals[b.0 as usize];
        self.push(Op::Div(a.0, b.0), v)
    }
    fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.vals[a.0 as usize];
        self.push(Op::Neg(a.0), v)
    }
    fn fma(&mut self, a: NodeId, b: NodeId, c: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize] * self.vals[b.0 as usize] + self.vals[c.0 as usize];
        self.push(Op::Fma(a.0, b.0, c.0), v)
    }
    fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.vals[a.0 as usize] * k;
        self.push(Op::Scale(a.0, k), v)
    }
    fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize].exp();
        self.push(Op::Exp(a.0), v)
    }
    fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize].ln();
        self.push(Op::Ln(a.0), v)
    }
    fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize].sqrt();
        self.push(Op::Sqrt(a.0), v)
    }
    fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a.0 as usize].tanh();
        self.push(Op::Tanh(a.0), v)
    }
    fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = sigmoid_f64(self.vals[a.0 as usize]);
        self.push(Op::Sigmoid(a.0), v)
    }
    fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = softplus_f64(self.vals[a.0 as usize]);
        self.push(Op::Softplus(a.0), v)
    }
    fn max_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.vals[a.0 as usize].max(k);
        self.push(Op::MaxConst(a.0, k), v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Central finite difference of a scalar function.
    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.mul(x, x);
        let g = t.backward(y);
        assert_eq!(t.value(y), 9.0);
        assert_eq!(g.get(x), 6.0);
    }

    #[test]
    fn elementary_gradients_match_finite_differences() {
        type UnaryCase = (fn(&mut Tape, NodeId) -> NodeId, fn(f64) -> f64, f64);
        let cases: Vec<UnaryCase> = vec![
            (|t, x| t.exp(x), |x| x.exp(), 0.3),
            (|t, x| t.ln(x), |x| x.ln(), 1.7),
            (|t, x| t.sqrt(x), |x| x.sqrt(), 2.2),
            (|t, x| t.tanh(x), |x| x.tanh(), -0.4),
            (|t, x| t.sigmoid(x), sigmoid_f64, 0.9),
            (|t, x| t.softplus(x), softplus_f64, -1.3),
        ];
        for (build, reference, x0) in cases {
            let mut t = Tape::new();
            let x = t.leaf(x0);
            let y = build(&mut t, x);
            let g = t.backward(y);
            assert_relative_eq!(t.value(y), reference(x0), max_relative = 1e-14);
            assert_relative_eq!(g.get(x), fd(reference, x0, 1e-6), max_relative = 1e-7);
        }
    }

    #[test]
    fn fanout_accumulates() {
        // f(x) = x*x + x → f'(3) = 7.
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let xx = t.mul(x, x);
        let y = t.add(xx, x);
        let g = t.backward(y);
        assert_eq!(g.get(x), 7.0);
    }

    #[test]
    fn division_and_fma() {
        // f(x, y) = (x·y + x) / y at (2, 5).
        let mut t = Tape::new();
        let x = t.leaf(2.0);
        let y = t.leaf(5.0);
        let num = t.fma(x, y, x);
        let out = t.div(num, y);
        let g = t.backward(out);
        assert_relative_eq!(t.value(out), 2.4, max_relative = 1e-15);
        assert_relative_eq!(g.get(x), 1.2, max_relative = 1e-12); // (y+1)/y
        assert_relative_eq!(g.get(y), -2.0 / 25.0, max_relative = 1e-12); // -x/y²
    }

    #[test]
    fn max_const_gates_gradient() {
        let mut t = Tape::new();
        let lo = t.leaf(0.5);
        let hi = t.leaf(2.0);
        let a = t.max_const(lo, 1.0);
        let b = t.max_const(hi, 1.0);
        let sum = t.add(a, b);
        let g = t.backward(sum);
        assert_eq!(t.value(a), 1.0);
        assert_eq!(t.value(b), 2.0);
        assert_eq!(g.get(lo), 0.0);
        assert_eq!(g.get(hi), 1.0);
    }

    #[test]
    fn constants_absorb_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(1.5);
        let k = t.c(4.0);
        let y = t.mul(x, k);
        let g = t.backward(y);
        assert_eq!(g.get(x), 4.0);
        assert_eq!(g.get(k), 1.5); // recorded but unused by callers
    }

    #[test]
    fn tape_and_f64_context_agree_bitwise() {
        fn run<C: Ctx>(ctx: &mut C) -> f64 {
            let a = ctx.leaf(0.731);
            let b = ctx.leaf(-1.62);
            let p = ctx.mul(a, b);
            let s = ctx.softplus(p);
            let q = ctx.sigmoid(s);
            let q = ctx.max_const(q, 0.0);
            let r = ctx.sqrt(q);
            let t = ctx.tanh(r);
            let u = ctx.fma(t, b, a);
            ctx.value(u)
        }
        let plain = run(&mut F64Ctx);
        let mut tape = Tape::new();
        let taped = run(&mut tape);
        assert_eq!(plain.to_bits(), taped.to_bits());
    }
}
