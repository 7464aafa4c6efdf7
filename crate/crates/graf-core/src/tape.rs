//! Reverse-mode automatic differentiation over complex arrays.
//!
//! The tape records a define-by-run graph of exactly the operations the
//! ambiguity pipeline and its losses need. For a real loss L and a complex
//! node z, the stored cotangent is the Wirtinger adjoint `g(z) = dL/d(z*)`,
//! so `dL = 2*Re(sum(conj(g) * dz))`, `dL/dRe(z) = 2*Re(g)` and
//! `dL/dIm(z) = 2*Im(g)`. Real nodes carry the plain real gradient.
//!
//! Nodes are append-only and parents always precede children, so the
//! backward sweep is a single reverse pass that touches each node once.
//! A tape is single-threaded; independent tapes may run concurrently.

use num_complex::Complex64;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::mat::RMat;

pub type NodeId = usize;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct RealArray {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl RealArray {
    pub fn scalar(x: f64) -> Self {
        RealArray {
            shape: Shape::Scalar,
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        RealArray {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        RealArray {
            shape: Shape::Matrix(rows, cols),
            data,
        }
    }

    pub fn zeros_like(shape: Shape) -> Self {
        RealArray {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.shape, Shape::Scalar);
        self.data[0]
    }

    pub fn to_rmat(&self) -> Result<RMat> {
        match self.shape {
            Shape::Matrix(r, c) => RMat::from_vec(r, c, self.data.clone()),
            _ => Err(Error::Usage("node is not a matrix".into())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComplexArray {
    pub shape: Shape,
    pub data: Vec<Complex64>,
}

impl ComplexArray {
    pub fn vector(data: Vec<Complex64>) -> Self {
        ComplexArray {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        ComplexArray {
            shape: Shape::Matrix(rows, cols),
            data,
        }
    }

    pub fn zeros_like(shape: Shape) -> Self {
        ComplexArray {
            shape,
            data: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }
}

#[derive(Clone, Debug)]
pub enum Value {
    Real(RealArray),
    Complex(ComplexArray),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Real(a) => a.shape,
            Value::Complex(a) => a.shape,
        }
    }

    pub fn as_real(&self) -> Option<&RealArray> {
        match self {
            Value::Real(a) => Some(a),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexArray> {
        match self {
            Value::Complex(a) => Some(a),
            Value::Real(_) => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Real(a) => a.data.iter().all(|x| x.is_finite()),
            Value::Complex(a) => a.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    LeafComplex,
    LeafReal,
    PhaseToSignal { theta: NodeId },
    ShiftMatrix { s: NodeId },
    ConjProduct { s: NodeId, shifts: NodeId },
    FftRows { input: NodeId },
    Abs2 { z: NodeId },
    AbsMag { z: NodeId },
    PowerSpectrum { s: NodeId, spectrum: Vec<Complex64> },
    Sum { x: NodeId },
    Mean { x: NodeId },
    Variance { x: NodeId },
    Max { x: NodeId, argmax: usize },
    MaskedSum { x: NodeId, mask: Arc<Vec<bool>> },
    EntryAt { x: NodeId, index: usize },
    ZeroDopplerCutShifted { chi: NodeId },
    Sigmoid { x: NodeId },
    MulConst { x: NodeId, c: f64 },
    AddConst { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    DivScalars { num: NodeId, den: NodeId },
    DivByScalarNode { x: NodeId, den: NodeId },
    WeightedSum { x: NodeId, weights: Arc<Vec<f64>> },
    PhaseSmoothness { theta: NodeId },
    FrobeniusDistSq { x: NodeId, target: Arc<RealArray> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::LeafComplex => "leaf_complex",
            Op::LeafReal => "leaf_real",
            Op::PhaseToSignal { .. } => "phase_to_signal",
            Op::ShiftMatrix { .. } => "shift_matrix",
            Op::ConjProduct { .. } => "conj_product",
            Op::FftRows { .. } => "fft_rows",
            Op::Abs2 { .. } => "abs2",
            Op::AbsMag { .. } => "abs_mag",
            Op::PowerSpectrum { .. } => "power_spectrum",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Variance { .. } => "variance",
            Op::Max { .. } => "max",
            Op::MaskedSum { .. } => "masked_sum",
            Op::EntryAt { .. } => "entry_at",
            Op::ZeroDopplerCutShifted { .. } => "zero_doppler_cut_shifted",
            Op::Sigmoid { .. } => "sigmoid",
            Op::MulConst { .. } => "mul_const",
            Op::AddConst { .. } => "add_const",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::DivScalars { .. } => "div_scalars",
            Op::DivByScalarNode { .. } => "div_by_scalar",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::PhaseSmoothness { .. } => "phase_smoothness",
            Op::FrobeniusDistSq { .. } => "frobenius_dist_sq",
        }
    }
}

struct Node {
    op: Op,
    value: Value,
}

/// Append-only computation graph with a real-scalar root.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    root: Option<NodeId>,
}

/// Neumaier compensated summation. The losses divide large reductions
/// (e.g. a full sidelobe sum) by tiny finite-difference steps in the
/// validation harness; sequential summation rounding would show up there
/// as gradient noise above the checked tolerances.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn wrap_phase(d: f64) -> f64 {
    // Wrap into (-pi, pi].
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = d.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            root: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id].value
    }

    /// Value of a real scalar node.
    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        match &self.nodes[id].value {
            Value::Real(a) if a.shape == Shape::Scalar => Ok(a.data[0]),
            _ => Err(Error::Usage(format!("node {id} is not a real scalar"))),
        }
    }

    /// Row-major argmax recorded by a `max` node (ties at lowest index).
    pub fn argmax_of(&self, id: NodeId) -> Option<usize> {
        match &self.nodes[id].op {
            Op::Max { argmax, .. } => Some(*argmax),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Value) -> Result<NodeId> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite {
                op: op.name().into(),
                detail: "output contains NaN or Inf".into(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(self.nodes.len() - 1)
    }

    fn real(&self, id: NodeId) -> Result<&RealArray> {
        self.nodes[id]
            .value
            .as_real()
            .ok_or_else(|| Error::Usage(format!("node {id} is not real-valued")))
    }

    fn complex(&self, id: NodeId) -> Result<&ComplexArray> {
        self.nodes[id]
            .value
            .as_complex()
            .ok_or_else(|| Error::Usage(format!("node {id} is not complex-valued")))
    }

    fn complex_vector(&self, id: NodeId) -> Result<(&[Complex64], usize)> {
        let a = self.complex(id)?;
        match a.shape {
            Shape::Vector(n) => Ok((&a.data, n)),
            _ => Err(Error::Usage(format!("node {id} is not a complex vector"))),
        }
    }

    fn real_scalar_node(&self, id: NodeId) -> Result<f64> {
        self.scalar_value(id)
    }

    // ----- leaves ---------------------------------------------------------

    pub fn leaf_complex(&mut self, data: Vec<Complex64>) -> Result<NodeId> {
        if data.is_empty() {
            return Err(Error::invalid("complex leaf must be non-empty"));
        }
        self.push(Op::LeafComplex, Value::Complex(ComplexArray::vector(data)))
    }

    pub fn leaf_real(&mut self, data: Vec<f64>) -> Result<NodeId> {
        if data.is_empty() {
            return Err(Error::invalid("real leaf must be non-empty"));
        }
        self.push(Op::LeafReal, Value::Real(RealArray::vector(data)))
    }

    // ----- pipeline ops ---------------------------------------------------

    /// theta -> e^(j*theta), elementwise.
    pub fn phase_to_signal(&mut self, theta: NodeId) -> Result<NodeId> {
        let t = self.real(theta)?;
        let data: Vec<Complex64> = t
            .data
            .iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect();
        self.push(
            Op::PhaseToSignal { theta },
            Value::Complex(ComplexArray::vector(data)),
        )
    }

    /// Circulant shift matrix: `S[k,n] = s[(n-k) mod N]`.
    pub fn shift_matrix(&mut self, s: NodeId) -> Result<NodeId> {
        let (sv, n) = self.complex_vector(s)?;
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n {
            // Row k is s rotated right by k: s[n-k..] ++ s[..n-k].
            data.extend_from_slice(&sv[n - k..]);
            data.extend_from_slice(&sv[..n - k]);
        }
        self.push(
            Op::ShiftMatrix { s },
            Value::Complex(ComplexArray::matrix(n, n, data)),
        )
    }

    /// `R[k,n] = s[n] * conj(S[k,n])` (row-wise broadcast of `s`).
    pub fn conj_product(&mut self, s: NodeId, shifts: NodeId) -> Result<NodeId> {
        let (sv, n) = self.complex_vector(s)?;
        let sm = self.complex(shifts)?;
        match sm.shape {
            Shape::Matrix(r, c) if r == n && c == n => {}
            _ => {
                return Err(Error::invalid(
                    "conj_product dimensions disagree with signal length",
                ))
            }
        }
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n {
            let row = &sm.data[k * n..(k + 1) * n];
            for (x, y) in sv.iter().zip(row) {
                data.push(x * y.conj());
            }
        }
        self.push(
            Op::ConjProduct { s, shifts },
            Value::Complex(ComplexArray::matrix(n, n, data)),
        )
    }

    /// Unnormalized DFT applied to each row.
    pub fn fft_rows(&mut self, input: NodeId) -> Result<NodeId> {
        let m = self.complex(input)?;
        let (rows, cols) = match m.shape {
            Shape::Matrix(r, c) => (r, c),
            _ => return Err(Error::Usage("fft_rows expects a matrix".into())),
        };
        let plan = FftPlan::new(cols)?;
        let mut data = m.data.clone();
        for r in 0..rows {
            plan.forward_inplace(&mut data[r * cols..(r + 1) * cols]);
        }
        self.push(
            Op::FftRows { input },
            Value::Complex(ComplexArray::matrix(rows, cols, data)),
        )
    }

    /// `|z|^2` taken as a real array of the same shape.
    pub fn abs2(&mut self, z: NodeId) -> Result<NodeId> {
        let a = self.complex(z)?;
        let data: Vec<f64> = a.data.iter().map(|v| v.norm_sqr()).collect();
        let value = RealArray {
            shape: a.shape,
            data,
        };
        self.push(Op::Abs2 { z }, Value::Real(value))
    }

    /// `|z|` elementwise (complex vector to real vector).
    pub fn abs_mag(&mut self, z: NodeId) -> Result<NodeId> {
        let (zv, _) = self.complex_vector(z)?;
        let data: Vec<f64> = zv.iter().map(|v| v.norm()).collect();
        self.push(Op::AbsMag { z }, Value::Real(RealArray::vector(data)))
    }

    /// Fused `|fft(s)|^2`.
    pub fn power_spectrum(&mut self, s: NodeId) -> Result<NodeId> {
        let (sv, n) = self.complex_vector(s)?;
        let plan = FftPlan::new(n)?;
        let mut spectrum = sv.to_vec();
        plan.forward_inplace(&mut spectrum);
        let data: Vec<f64> = spectrum.iter().map(|v| v.norm_sqr()).collect();
        self.push(
            Op::PowerSpectrum { s, spectrum },
            Value::Real(RealArray::vector(data)),
        )
    }

    // ----- reductions and scalar ops --------------------------------------

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.real(x)?;
        let total = compensated_sum(a.data.iter().copied());
        self.push(Op::Sum { x }, Value::Real(RealArray::scalar(total)))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.real(x)?;
        if a.data.is_empty() {
            return Err(Error::invalid("mean of empty selection"));
        }
        let m = compensated_sum(a.data.iter().copied()) / a.data.len() as f64;
        self.push(Op::Mean { x }, Value::Real(RealArray::scalar(m)))
    }

    /// Population variance (divide by the element count).
    pub fn variance(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.real(x)?;
        if a.data.is_empty() {
            return Err(Error::invalid("variance of empty selection"));
        }
        let n = a.data.len() as f64;
        let mu = compensated_sum(a.data.iter().copied()) / n;
        let var = compensated_sum(a.data.iter().map(|v| (v - mu) * (v - mu))) / n;
        self.push(Op::Variance { x }, Value::Real(RealArray::scalar(var)))
    }

    /// Max with recorded argmax; ties resolve to the lowest row-major index.
    /// The backward pass routes the whole cotangent to that single cell.
    pub fn max(&mut self, x: NodeId) -> Result<NodeId> {
        self.max_impl(x, None)
    }

    /// Max restricted to cells where `mask` is true.
    pub fn masked_max(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> Result<NodeId> {
        self.max_impl(x, Some(mask))
    }

    fn max_impl(&mut self, x: NodeId, mask: Option<Arc<Vec<bool>>>) -> Result<NodeId> {
        let a = self.real(x)?;
        if let Some(m) = &mask {
            if m.len() != a.data.len() {
                return Err(Error::invalid("mask length does not match node"));
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in a.data.iter().enumerate() {
            if let Some(m) = &mask {
                if !m[i] {
                    continue;
                }
            }
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((i, v)),
            }
        }
        let (argmax, value) =
            best.ok_or_else(|| Error::invalid("max over empty selection (mask all false)"))?;
        self.push(Op::Max { x, argmax }, Value::Real(RealArray::scalar(value)))
    }

    pub fn masked_sum(&mut self, x: NodeId, mask: Arc<Vec<bool>>) -> Result<NodeId> {
        let a = self.real(x)?;
        if mask.len() != a.data.len() {
            return Err(Error::invalid("mask length does not match node"));
        }
        let total = compensated_sum(
            a.data
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v),
        );
        self.push(
            Op::MaskedSum { x, mask },
            Value::Real(RealArray::scalar(total)),
        )
    }

    /// Scalar pick of one cell by row-major linear index.
    pub fn entry_linear(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let a = self.real(x)?;
        if index >= a.data.len() {
            return Err(Error::invalid("entry index out of range"));
        }
        let v = a.data[index];
        self.push(Op::EntryAt { x, index }, Value::Real(RealArray::scalar(v)))
    }

    pub fn entry_at(&mut self, x: NodeId, row: usize, col: usize) -> Result<NodeId> {
        let a = self.real(x)?;
        match a.shape {
            Shape::Matrix(r, c) if row < r && col < c => self.entry_linear(x, row * c + col),
            Shape::Matrix(..) => Err(Error::invalid("entry position out of range")),
            _ => Err(Error::Usage("entry_at expects a matrix node".into())),
        }
    }

    /// Zero-Doppler column of a raw N x N surface, re-indexed so slot `i`
    /// holds delay `tau = i - floor(N/2)`.
    pub fn zero_doppler_cut_shifted(&mut self, chi: NodeId) -> Result<NodeId> {
        let a = self.real(chi)?;
        let n = match a.shape {
            Shape::Matrix(r, c) if r == c => r,
            _ => return Err(Error::Usage("cut expects a square matrix".into())),
        };
        let half = n / 2;
        let data: Vec<f64> = (0..n).map(|i| a.data[((i + n - half) % n) * n]).collect();
        self.push(
            Op::ZeroDopplerCutShifted { chi },
            Value::Real(RealArray::vector(data)),
        )
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.real(x)?;
        let value = RealArray {
            shape: a.shape,
            data: a.data.iter().map(|&v| stable_sigmoid(v)).collect(),
        };
        self.push(Op::Sigmoid { x }, Value::Real(value))
    }

    pub fn mul_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let a = self.real(x)?;
        let value = RealArray {
            shape: a.shape,
            data: a.data.iter().map(|v| v * c).collect(),
        };
        self.push(Op::MulConst { x, c }, Value::Real(value))
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let a = self.real(x)?;
        let value = RealArray {
            shape: a.shape,
            data: a.data.iter().map(|v| v + c).collect(),
        };
        self.push(Op::AddConst { x }, Value::Real(value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (xa, xb) = (self.real(a)?, self.real(b)?);
        if xa.shape != xb.shape {
            return Err(Error::invalid("add requires matching shapes"));
        }
        let value = RealArray {
            shape: xa.shape,
            data: xa.data.iter().zip(&xb.data).map(|(u, v)| u + v).collect(),
        };
        self.push(Op::Add { a, b }, Value::Real(value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (xa, xb) = (self.real(a)?, self.real(b)?);
        if xa.shape != xb.shape {
            return Err(Error::invalid("sub requires matching shapes"));
        }
        let value = RealArray {
            shape: xa.shape,
            data: xa.data.iter().zip(&xb.data).map(|(u, v)| u - v).collect(),
        };
        self.push(Op::Sub { a, b }, Value::Real(value))
    }

    /// Scalar quotient of two scalar nodes.
    pub fn div_scalars(&mut self, num: NodeId, den: NodeId) -> Result<NodeId> {
        let a = self.real_scalar_node(num)?;
        let b = self.real_scalar_node(den)?;
        self.push(
            Op::DivScalars { num, den },
            Value::Real(RealArray::scalar(a / b)),
        )
    }

    /// Elementwise division of a real array by a scalar node.
    pub fn div_by_scalar(&mut self, x: NodeId, den: NodeId) -> Result<NodeId> {
        let d = self.real_scalar_node(den)?;
        let a = self.real(x)?;
        let value = RealArray {
            shape: a.shape,
            data: a.data.iter().map(|v| v / d).collect(),
        };
        self.push(Op::DivByScalarNode { x, den }, Value::Real(value))
    }

    /// `sum_i w[i] * x[i]` with constant weights.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Arc<Vec<f64>>) -> Result<NodeId> {
        let a = self.real(x)?;
        if weights.len() != a.data.len() {
            return Err(Error::invalid("weight length does not match node"));
        }
        let total = compensated_sum(a.data.iter().zip(weights.iter()).map(|(v, w)| v * w));
        self.push(
            Op::WeightedSum { x, weights },
            Value::Real(RealArray::scalar(total)),
        )
    }

    /// Sum of squared wrapped circular phase increments.
    pub fn phase_smoothness(&mut self, theta: NodeId) -> Result<NodeId> {
        let t = self.real(theta)?;
        let n = t.data.len();
        if n < 2 {
            return Err(Error::invalid("phase smoothness needs at least 2 samples"));
        }
        let total = compensated_sum((0..n).map(|i| {
            let d = wrap_phase(t.data[(i + 1) % n] - t.data[i]);
            d * d
        }));
        self.push(
            Op::PhaseSmoothness { theta },
            Value::Real(RealArray::scalar(total)),
        )
    }

    /// Squared Frobenius distance to a constant target array.
    pub fn frobenius_dist_sq(&mut self, x: NodeId, target: Arc<RealArray>) -> Result<NodeId> {
        let a = self.real(x)?;
        if a.shape != target.shape {
            return Err(Error::invalid("target shape does not match node"));
        }
        let total = compensated_sum(
            a.data
                .iter()
                .zip(&target.data)
                .map(|(u, v)| (u - v) * (u - v)),
        );
        self.push(
            Op::FrobeniusDistSq { x, target },
            Value::Real(RealArray::scalar(total)),
        )
    }

    // ----- backward --------------------------------------------------------

    pub fn set_root(&mut self, id: NodeId) -> Result<()> {
        self.scalar_value(id)
            .map_err(|_| Error::Usage("root must be a real scalar node".into()))?;
        self.root = Some(id);
        Ok(())
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    /// Reverse sweep from the root; returns cotangents for every reached node.
    pub fn backward(&self) -> Result<Gradients> {
        let root = self
            .root
            .ok_or_else(|| Error::Usage("backward requires a root; call set_root".into()))?;
        let mut adjoints: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adjoints[root] = Some(Value::Real(RealArray::scalar(1.0)));

        for id in (0..=root).rev() {
            if adjoints[id].is_none() {
                continue;
            }
            let (parents, current) = adjoints.split_at_mut(id);
            let g = current[0].as_ref().expect("checked above");
            self.backward_one(id, g, parents)?;
        }

        Ok(Gradients { adjoints })
    }

    fn backward_one(&self, id: NodeId, g: &Value, adj: &mut [Option<Value>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::LeafComplex | Op::LeafReal => {}

            Op::PhaseToSignal { theta } => {
                let gs = expect_complex(g);
                let s = self.complex(id)?;
                let mut gt = vec![0.0; gs.data.len()];
                for (i, slot) in gt.iter_mut().enumerate() {
                    // dL/dtheta = -2*Im(conj(g) * s)
                    *slot = -2.0 * (gs.data[i].conj() * s.data[i]).im;
                }
                add_real(&mut adj[*theta], RealArray::vector(gt));
            }

            Op::ShiftMatrix { s } => {
                // Scatter-add, the adjoint of the row gather:
                // gs[j] += sum_k gm[k, (j+k) mod n].
                let gm = expect_complex(g);
                let (_, n) = self.complex_vector(*s)?;
                let mut gs = vec![Complex64::new(0.0, 0.0); n];
                for k in 0..n {
                    let row = &gm.data[k * n..(k + 1) * n];
                    for (j, slot) in gs[..n - k].iter_mut().enumerate() {
                        *slot += row[j + k];
                    }
                    for (j, slot) in gs[n - k..].iter_mut().enumerate() {
                        *slot += row[j];
                    }
                }
                add_complex(&mut adj[*s], ComplexArray::vector(gs));
            }

            Op::ConjProduct { s, shifts } => {
                let gr = expect_complex(g);
                let (sv, n) = self.complex_vector(*s)?;
                let sm = self.complex(*shifts)?;
                let mut gs = vec![Complex64::new(0.0, 0.0); n];
                let mut gshift = Vec::with_capacity(n * n);
                for k in 0..n {
                    let base = k * n;
                    for idx in 0..n {
                        let grkn = gr.data[base + idx];
                        gs[idx] += grkn * sm.data[base + idx];
                        gshift.push(grkn.conj() * sv[idx]);
                    }
                }
                add_complex(&mut adj[*s], ComplexArray::vector(gs));
                add_complex(&mut adj[*shifts], ComplexArray::matrix(n, n, gshift));
            }

            Op::FftRows { input } => {
                // Adjoint of the unnormalized DFT is N*ifft = conj(fft(conj(.))).
                let gx = expect_complex(g);
                let (rows, cols) = match gx.shape {
                    Shape::Matrix(r, c) => (r, c),
                    _ => unreachable!("fft_rows output is a matrix"),
                };
                let plan = FftPlan::new(cols)?;
                let mut data: Vec<Complex64> = gx.data.iter().map(|v| v.conj()).collect();
                for r in 0..rows {
                    let row = &mut data[r * cols..(r + 1) * cols];
                    plan.forward_inplace(row);
                    for v in row.iter_mut() {
                        *v = v.conj();
                    }
                }
                add_complex(&mut adj[*input], ComplexArray::matrix(rows, cols, data));
            }

            Op::Abs2 { z } => {
                let gchi = expect_real(g);
                let zv = self.complex(*z)?;
                let data: Vec<Complex64> = zv
                    .data
                    .iter()
                    .zip(&gchi.data)
                    .map(|(v, gc)| v * *gc)
                    .collect();
                add_complex(
                    &mut adj[*z],
                    ComplexArray {
                        shape: zv.shape,
                        data,
                    },
                );
            }

            Op::AbsMag { z } => {
                let ga = expect_real(g);
                let zv = self.complex(*z)?;
                let data: Vec<Complex64> = zv
                    .data
                    .iter()
                    .zip(&ga.data)
                    .map(|(v, gc)| {
                        let mag = v.norm();
                        if mag == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            v * (gc / (2.0 * mag))
                        }
                    })
                    .collect();
                add_complex(
                    &mut adj[*z],
                    ComplexArray {
                        shape: zv.shape,
                        data,
                    },
                );
            }

            Op::PowerSpectrum { s, spectrum } => {
                // Through |X|^2: g(X) = g(p) .* X; through the DFT:
                // g(s) = N*ifft(g(X)) = conj(fft(g(p) .* conj(X))).
                let gp = expect_real(g);
                let n = spectrum.len();
                let mut gx: Vec<Complex64> = spectrum
                    .iter()
                    .zip(&gp.data)
                    .map(|(x, gc)| x.conj() * *gc)
                    .collect();
                let plan = FftPlan::new(n)?;
                plan.forward_inplace(&mut gx);
                for v in gx.iter_mut() {
                    *v = v.conj();
                }
                add_complex(&mut adj[*s], ComplexArray::vector(gx));
            }

            Op::Sum { x } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape,
                        data: vec![gv; shape.len()],
                    },
                );
            }

            Op::Mean { x } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                let n = shape.len() as f64;
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape,
                        data: vec![gv / n; shape.len()],
                    },
                );
            }

            Op::Variance { x } => {
                let gv = expect_real(g).as_scalar();
                let xv = self.real(*x)?;
                let n = xv.data.len() as f64;
                let mu = compensated_sum(xv.data.iter().copied()) / n;
                let data: Vec<f64> = xv.data.iter().map(|v| gv * 2.0 * (v - mu) / n).collect();
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape: xv.shape,
                        data,
                    },
                );
            }

            Op::Max { x, argmax } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                let mut data = vec![0.0; shape.len()];
                data[*argmax] = gv;
                add_real(&mut adj[*x], RealArray { shape, data });
            }

            Op::MaskedSum { x, mask } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                let data: Vec<f64> = mask.iter().map(|&m| if m { gv } else { 0.0 }).collect();
                add_real(&mut adj[*x], RealArray { shape, data });
            }

            Op::EntryAt { x, index } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                let mut data = vec![0.0; shape.len()];
                data[*index] = gv;
                add_real(&mut adj[*x], RealArray { shape, data });
            }

            Op::ZeroDopplerCutShifted { chi } => {
                let gc = expect_real(g);
                let shape = self.nodes[*chi].value.shape();
                let n = match shape {
                    Shape::Matrix(r, _) => r,
                    _ => unreachable!("cut parent is a matrix"),
                };
                let half = n / 2;
                let mut data = vec![0.0; shape.len()];
                for (i, &gv) in gc.data.iter().enumerate() {
                    data[((i + n - half) % n) * n] += gv;
                }
                add_real(&mut adj[*chi], RealArray { shape, data });
            }

            Op::Sigmoid { x } => {
                let go = expect_real(g);
                let out = self.real(id)?;
                let data: Vec<f64> = out
                    .data
                    .iter()
                    .zip(&go.data)
                    .map(|(sig, gv)| gv * sig * (1.0 - sig))
                    .collect();
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape: out.shape,
                        data,
                    },
                );
            }

            Op::MulConst { x, c } => {
                let go = expect_real(g);
                let data: Vec<f64> = go.data.iter().map(|gv| gv * c).collect();
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape: go.shape,
                        data,
                    },
                );
            }

            Op::AddConst { x } => {
                add_real(&mut adj[*x], expect_real(g).clone());
            }

            Op::Add { a, b } => {
                add_real(&mut adj[*a], expect_real(g).clone());
                add_real(&mut adj[*b], expect_real(g).clone());
            }

            Op::Sub { a, b } => {
                let go = expect_real(g);
                add_real(&mut adj[*a], go.clone());
                let neg = RealArray {
                    shape: go.shape,
                    data: go.data.iter().map(|v| -v).collect(),
                };
                add_real(&mut adj[*b], neg);
            }

            Op::DivScalars { num, den } => {
                let gv = expect_real(g).as_scalar();
                let a = self.real_scalar_node(*num)?;
                let b = self.real_scalar_node(*den)?;
                add_real(&mut adj[*num], RealArray::scalar(gv / b));
                add_real(&mut adj[*den], RealArray::scalar(-gv * a / (b * b)));
            }

            Op::DivByScalarNode { x, den } => {
                let go = expect_real(g);
                let xv = self.real(*x)?;
                let d = self.real_scalar_node(*den)?;
                let gx: Vec<f64> = go.data.iter().map(|gv| gv / d).collect();
                let gden = compensated_sum(
                    go.data
                        .iter()
                        .zip(&xv.data)
                        .map(|(gv, v)| -gv * v / (d * d)),
                );
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape: xv.shape,
                        data: gx,
                    },
                );
                add_real(&mut adj[*den], RealArray::scalar(gden));
            }

            Op::WeightedSum { x, weights } => {
                let gv = expect_real(g).as_scalar();
                let shape = self.nodes[*x].value.shape();
                let data: Vec<f64> = weights.iter().map(|w| gv * w).collect();
                add_real(&mut adj[*x], RealArray { shape, data });
            }

            Op::PhaseSmoothness { theta } => {
                let gv = expect_real(g).as_scalar();
                let t = self.real(*theta)?;
                let n = t.data.len();
                let mut data = vec![0.0; n];
                for i in 0..n {
                    let d = wrap_phase(t.data[(i + 1) % n] - t.data[i]);
                    data[(i + 1) % n] += 2.0 * d * gv;
                    data[i] -= 2.0 * d * gv;
                }
                add_real(
                    &mut adj[*theta],
                    RealArray {
                        shape: t.shape,
                        data,
                    },
                );
            }

            Op::FrobeniusDistSq { x, target } => {
                let gv = expect_real(g).as_scalar();
                let xv = self.real(*x)?;
                let data: Vec<f64> = xv
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(u, v)| 2.0 * (u - v) * gv)
                    .collect();
                add_real(
                    &mut adj[*x],
                    RealArray {
                        shape: xv.shape,
                        data,
                    },
                );
            }
        }
        Ok(())
    }
}

fn expect_real(v: &Value) -> &RealArray {
    v.as_real().expect("real node carries a real cotangent")
}

fn expect_complex(v: &Value) -> &ComplexArray {
    v.as_complex()
        .expect("complex node carries a complex cotangent")
}

fn add_real(slot: &mut Option<Value>, contrib: RealArray) {
    match slot {
        None => *slot = Some(Value::Real(contrib)),
        Some(Value::Real(acc)) => {
            debug_assert_eq!(acc.shape, contrib.shape);
            for (a, b) in acc.data.iter_mut().zip(contrib.data) {
                *a += b;
            }
        }
        Some(Value::Complex(_)) => panic!("cotangent kind mismatch"),
    }
}

fn add_complex(slot: &mut Option<Value>, contrib: ComplexArray) {
    match slot {
        None => *slot = Some(Value::Complex(contrib)),
        Some(Value::Complex(acc)) => {
            debug_assert_eq!(acc.shape, contrib.shape);
            for (a, b) in acc.data.iter_mut().zip(contrib.data) {
                *a += b;
            }
        }
        Some(Value::Real(_)) => panic!("cotangent kind mismatch"),
    }
}

/// Cotangents produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    adjoints: Vec<Option<Value>>,
}

impl Gradients {
    pub fn cotangent(&self, id: NodeId) -> Option<&Value> {
        self.adjoints.get(id).and_then(|v| v.as_ref())
    }

    /// Wirtinger adjoint `g = dL/d(z*)` of a complex node.
    pub fn complex(&self, id: NodeId) -> Option<&ComplexArray> {
        self.cotangent(id).and_then(|v| v.as_complex())
    }

    /// Plain real gradient of a real node.
    pub fn real(&self, id: NodeId) -> Option<&RealArray> {
        self.cotangent(id).and_then(|v| v.as_real())
    }
}
