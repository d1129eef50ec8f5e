//! The fusion head: per-modality projections, L2 normalization, the
//! attention gate, gated fusion and the bias-free identity classifier.
//!
//! Batch layout is row-major throughout: one instance per row.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::dataio::text::{self, Lines};
use crate::error::{Error, ParseErrorKind, Result};
use crate::numcore::{l2_normalize, norm, sigmoid, Matrix, Rng, Scalar, NORM_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fusion {
    /// `k = σ(F_att([u, v]))`, `l = k ⊙ tanh u + (1 − k) ⊙ tanh v`.
    Gated,
    /// Gate frozen at one half; the attention layers are unused.
    Linear,
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Gated => "gated",
            Fusion::Linear => "linear",
        })
    }
}

impl FromStr for Fusion {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gated" => Ok(Fusion::Gated),
            "linear" => Ok(Fusion::Linear),
            other => Err(ParseErrorKind::Token(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub face_dim: usize,
    pub voice_dim: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
    /// Widths of ReLU hidden layers inside the attention network. Empty means
    /// a single affine map `2d → d`.
    pub att_hidden: Vec<usize>,
}

impl ModelDims {
    pub fn new(face_dim: usize, voice_dim: usize, embed_dim: usize, n_classes: usize) -> Self {
        ModelDims {
            face_dim,
            voice_dim,
            embed_dim,
            n_classes,
            att_hidden: Vec::new(),
        }
    }

    fn att_widths(&self) -> Vec<usize> {
        let mut w = vec![2 * self.embed_dim];
        w.extend(&self.att_hidden);
        w.push(self.embed_dim);
        w
    }
}

/// Affine layer `x ↦ x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = x.matmul(&self.weight)?;
        out.add_row_vector(self.bias.data())?;
        Ok(out)
    }

    fn forward_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = self.bias.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.weight.row(i)) {
                *o = *o + xi * w;
            }
        }
        out
    }
}

/// Every trainable tensor of the head. Also used to hold gradients and
/// optimizer moments, which share the same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct FopParams<T> {
    pub dims: ModelDims,
    pub fusion: Fusion,
    pub face: Dense<T>,
    pub voice: Dense<T>,
    pub attention: Vec<Dense<T>>,
    /// `d × C`; column `j` is the weight vector of identity `j`.
    pub classifier: Matrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Weights uniform on `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    XavierUniform,
    Zeros,
}

impl<T: Scalar> FopParams<T> {
    pub fn zeros(dims: ModelDims, fusion: Fusion) -> Self {
        let d = dims.embed_dim;
        let attention = dims
            .att_widths()
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        FopParams {
            face: Dense::zeros(dims.face_dim, d),
            voice: Dense::zeros(dims.voice_dim, d),
            attention,
            classifier: Matrix::zeros(d, dims.n_classes),
            dims,
            fusion,
        }
    }

    pub fn init(dims: ModelDims, fusion: Fusion, scheme: InitScheme, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(dims, fusion);
        if scheme == InitScheme::Zeros {
            return p;
        }
        let mut fill = |m: &mut Matrix<T>| {
            let a = xavier_bound(m.rows(), m.cols());
            for x in m.data_mut() {
                *x = T::lit(rng.uniform_range(-a, a));
            }
        };
        fill(&mut p.face.weight);
        fill(&mut p.voice.weight);
        for layer in &mut p.attention {
            fill(&mut layer.weight);
        }
        fill(&mut p.classifier);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims.clone(), self.fusion)
    }

    /// Named tensors in a fixed order shared by checkpoints, the optimizer
    /// and gradient checks.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![
            ("face.weight".to_string(), &self.face.weight),
            ("face.bias".to_string(), &self.face.bias),
            ("voice.weight".to_string(), &self.voice.weight),
            ("voice.bias".to_string(), &self.voice.bias),
        ];
        for (i, l) in self.attention.iter().enumerate() {
            out.push((format!("att{i}.weight"), &l.weight));
            out.push((format!("att{i}.bias"), &l.bias));
        }
        out.push(("classifier".to_string(), &self.classifier));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![
            &mut self.face.weight,
            &mut self.face.bias,
            &mut self.voice.weight,
            &mut self.voice.bias,
        ];
        for l in &mut self.attention {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.classifier);
        out
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// `u = normalize(W_faceᵀ b + bias)`, likewise `v` from `e`.
    pub fn project(&self, b: &[T], e: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if b.len() != self.dims.face_dim || e.len() != self.dims.voice_dim {
            return Err(Error::Shape {
                op: "project",
                left: (self.dims.face_dim, self.dims.voice_dim),
                right: (b.len(), e.len()),
            });
        }
        let eps = T::lit(NORM_EPS);
        Ok((
            l2_normalize(&self.face.forward_vec(b), eps),
            l2_normalize(&self.voice.forward_vec(e), eps),
        ))
    }

    /// Attention scores `k` for one `(u, v)` pair.
    pub fn gate(&self, u: &[T], v: &[T]) -> Vec<T> {
        if self.fusion == Fusion::Linear {
            return vec![T::lit(0.5); u.len()];
        }
        let mut h: Vec<T> = u.iter().chain(v).copied().collect();
        let last = self.attention.len() - 1;
        for (i, layer) in self.attention.iter().enumerate() {
            h = layer.forward_vec(&h);
            if i < last {
                h.iter_mut().for_each(|x| *x = x.max(T::zero()));
            }
        }
        h.into_iter().map(sigmoid).collect()
    }

    /// Returns the fused embedding and the gate that produced it.
    pub fn fuse_gated(&self, u: &[T], v: &[T]) -> (Vec<T>, Vec<T>) {
        let k = self.gate(u, v);
        (blend(&k, u, v), k)
    }

    pub fn logits(&self, l: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dims.n_classes];
        for (i, &li) in l.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.classifier.row(i)) {
                *o = *o + li * w;
            }
        }
        out
    }

    /// Normalized face projections `u`, one row per input row.
    pub fn embed_faces(&self, faces: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(project_batch(&self.face, faces)?.2)
    }

    /// Normalized voice projections `v`, one row per input row.
    pub fn embed_voices(&self, voices: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(project_batch(&self.voice, voices)?.2)
    }

    /// Full batch forward pass keeping every intermediate for backprop.
    pub fn forward(&self, faces: &Matrix<T>, voices: &Matrix<T>) -> Result<ForwardCache<T>> {
        if faces.rows() != voices.rows() {
            return Err(Error::Shape {
                op: "forward",
                left: faces.shape(),
                right: voices.shape(),
            });
        }
        let (u_raw, u_norms, u) = project_batch(&self.face, faces)?;
        let (v_raw, v_norms, v) = project_batch(&self.voice, voices)?;

        let mut att_inputs = Vec::new();
        let mut att_pre = Vec::new();
        let gate = match self.fusion {
            Fusion::Linear => Matrix::filled(u.rows(), u.cols(), T::lit(0.5)),
            Fusion::Gated => {
                let mut h = u.hconcat(&v)?;
                let last = self.attention.len() - 1;
                for (i, layer) in self.attention.iter().enumerate() {
                    let z = layer.forward(&h)?;
                    att_inputs.push(h);
                    h = if i < last { z.map(|x| x.max(T::zero())) } else { z.map(sigmoid) };
                    att_pre.push(z);
                }
                h
            }
        };
        let tanh_u = u.map(T::tanh);
        let tanh_v = v.map(T::tanh);
        let fused = Matrix::from_fn(u.rows(), u.cols(), |i, j| {
            let k = gate.get(i, j);
            k * tanh_u.get(i, j) + (T::one() - k) * tanh_v.get(i, j)
        });
        let logits = fused.matmul(&self.classifier)?;
        Ok(ForwardCache {
            faces: faces.clone(),
            voices: voices.clone(),
            u_raw,
            u_norms,
            u,
            v_raw,
            v_norms,
            v,
            att_inputs,
            att_pre,
            gate,
            tanh_u,
            tanh_v,
            fused,
            logits,
        })
    }

    pub fn to_text(&self) -> String {
        let d = &self.dims;
        let hidden = if d.att_hidden.is_empty() {
            "-".to_string()
        } else {
            d.att_hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "FVCKPT 1 {} {} {} {} {} {hidden}",
            d.face_dim, d.voice_dim, d.embed_dim, d.n_classes, self.fusion
        );
        for (name, m) in self.tensors() {
            let _ = writeln!(out, "TENSOR {name} {} {}", m.rows(), m.cols());
            for row in m.iter_rows() {
                let line: Vec<String> = row.iter().map(|x| x.as_f64().to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(path: &str, text: &str) -> Result<Self> {
        parse_checkpoint(Lines::from_text(path, text))
    }
}

/// Gated blend `k ⊙ tanh u + (1 − k) ⊙ tanh v`.
fn blend<T: Scalar>(k: &[T], u: &[T], v: &[T]) -> Vec<T> {
    k.iter()
        .zip(u.iter().zip(v))
        .map(|(&k, (&a, &b))| k * a.tanh() + (T::one() - k) * b.tanh())
        .collect()
}

/// Parameter-free fusion with the gate fixed at one half.
pub fn fuse_linear<T: Scalar>(u: &[T], v: &[T]) -> Vec<T> {
    blend(&vec![T::lit(0.5); u.len()], u, v)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn project_batch<T: Scalar>(
    layer: &Dense<T>,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, Vec<T>, Matrix<T>)> {
    let raw = layer.forward(x)?;
    let eps = T::lit(NORM_EPS);
    let norms: Vec<T> = raw.iter_rows().map(norm).collect();
    let mut unit = raw.clone();
    for (i, &n) in norms.iter().enumerate() {
        let n = n.max(eps);
        unit.row_mut(i).iter_mut().for_each(|x| *x = *x / n);
    }
    Ok((raw, norms, unit))
}

/// Intermediates of one batch forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub faces: Matrix<T>,
    pub voices: Matrix<T>,
    /// Face projection before normalization.
    pub u_raw: Matrix<T>,
    pub u_norms: Vec<T>,
    pub u: Matrix<T>,
    pub v_raw: Matrix<T>,
    pub v_norms: Vec<T>,
    pub v: Matrix<T>,
    /// Input to each attention layer; the first is `[u, v]`. Empty for linear fusion.
    pub att_inputs: Vec<Matrix<T>>,
    /// Pre-activation output of each attention layer.
    pub att_pre: Vec<Matrix<T>>,
    pub gate: Matrix<T>,
    pub tanh_u: Matrix<T>,
    pub tanh_v: Matrix<T>,
    pub fused: Matrix<T>,
    pub logits: Matrix<T>,
}

impl<T> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.u_norms.len()
    }
}

pub fn write_checkpoint<T: Scalar>(params: &FopParams<T>, path: &Path) -> Result<()> {
    text::write_file(path, &params.to_text())
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<FopParams<T>> {
    parse_checkpoint(Lines::open(path)?)
}

fn parse_checkpoint<T: Scalar>(mut lines: Lines) -> Result<FopParams<T>> {
    let (hn, header) = lines
        .next_line()
        .ok_or_else(|| lines.err(1, ParseErrorKind::Header("empty file".into())))?;
    let h = text::fields(&header);
    if h.len() != 8 || h[0] != "FVCKPT" || h[1] != "1" {
        return Err(lines.err(hn, ParseErrorKind::Header(header.clone())));
    }
    let num = |tok: &str| text::parse_usize(tok).map_err(|k| lines.err(hn, k));
    let mut dims = ModelDims::new(num(h[2])?, num(h[3])?, num(h[4])?, num(h[5])?);
    let fusion: Fusion = h[6].parse().map_err(|k| lines.err(hn, k))?;
    if h[7] != "-" {
        for w in h[7].split(',') {
            dims.att_hidden.push(num(w)?);
        }
    }
    let mut params = FopParams::<T>::zeros(dims, fusion);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, tensor) in names.iter().zip(params.tensors_mut()) {
        let ln = lines.next_number();
        let Some((ln, line)) = lines.next_line() else {
            return Err(lines.err(ln, ParseErrorKind::Header(format!("missing tensor {name}"))));
        };
        let f = text::fields(&line);
        let expected = [
            "TENSOR".to_string(),
            name.clone(),
            tensor.rows().to_string(),
            tensor.cols().to_string(),
        ];
        if f != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(lines.err(ln, ParseErrorKind::Header(line.clone())));
        }
        let cols = tensor.cols();
        for r in 0..tensor.rows() {
            let ln = lines.next_number();
            let Some((ln, line)) = lines.next_line() else {
                return Err(lines.err(ln, ParseErrorKind::RowCount { expected: tensor.rows(), found: r }));
            };
            let f = text::fields(&line);
            if f.len() != cols {
                return Err(lines.err(ln, ParseErrorKind::FieldCount { expected: cols, found: f.len() }));
            }
            for (c, tok) in f.iter().enumerate() {
                let x = text::parse_f64(tok).map_err(|k| lines.err(ln, k))?;
                tensor.set(r, c, T::lit(x));
            }
        }
    }
    lines.finish()?;
    Ok(params)
}
