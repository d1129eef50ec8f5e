use crate::error::{Error, Result};
use crate::fopmodel::{Dense, ForwardCache, FopParams, Fusion};
use crate::numcore::{dot, Matrix, Scalar, NORM_EPS};

/// Loss gradients with respect to the head's outputs. Absent entries are
/// treated as zero.
#[derive(Clone, Debug, Default)]
pub struct HeadGrads<T> {
    pub logits: Option<Matrix<T>>,
    pub fused: Option<Matrix<T>>,
    /// Gradient with respect to the normalized face projections `u`.
    pub u: Option<Matrix<T>>,
    /// Gradient with respect to the normalized voice projections `v`.
    pub v: Option<Matrix<T>>,
}

fn check_shape<T: Scalar>(name: &'static str, g: &Option<Matrix<T>>, want: (usize, usize)) -> Result<()> {
    match g {
        Some(m) if m.shape() != want => Err(Error::Shape {
            op: name,
            left: m.shape(),
            right: want,
        }),
        _ => Ok(()),
    }
}

fn check_cache<T: Scalar>(params: &FopParams<T>, cache: &ForwardCache<T>) -> Result<()> {
    let b = cache.batch_size();
    let d = params.dims.embed_dim;
    let mismatch = |msg: String| Err(Error::contract("backward", msg));
    if cache.fused.shape() != (b, d) || cache.logits.shape() != (b, params.dims.n_classes) {
        return mismatch(format!(
            "cache fused {:?}, logits {:?} do not fit embed_dim {d}, {} classes",
            cache.fused.shape(),
            cache.logits.shape(),
            params.dims.n_classes
        ));
    }
    if cache.faces.cols() != params.dims.face_dim || cache.voices.cols() != params.dims.voice_dim {
        return mismatch("cache inputs do not match projection widths".into());
    }
    if params.fusion == Fusion::Gated && cache.att_inputs.len() != params.attention.len() {
        return mismatch(format!(
            "cache has {} attention layers, params {}",
            cache.att_inputs.len(),
            params.attention.len()
        ));
    }
    Ok(())
}

/// Gradient through `x / max(‖x‖, eps)` given the cached unit rows.
fn normalize_backward<T: Scalar>(unit: &Matrix<T>, norms: &[T], grad_unit: &Matrix<T>) -> Matrix<T> {
    let eps = T::lit(NORM_EPS);
    let mut out = Matrix::zeros(unit.rows(), unit.cols());
    for i in 0..unit.rows() {
        let (n, g) = (unit.row(i), grad_unit.row(i));
        let row = out.row_mut(i);
        if norms[i] >= eps {
            let proj = dot(n, g);
            for k in 0..row.len() {
                row[k] = (g[k] - n[k] * proj) / norms[i];
            }
        } else {
            for k in 0..row.len() {
                row[k] = g[k] / eps;
            }
        }
    }
    out
}

fn dense_backward<T: Scalar>(input: &Matrix<T>, grad_out: &Matrix<T>, into: &mut Dense<T>) -> Result<()> {
    into.weight = input.matmul_tn(grad_out)?;
    into.bias = Matrix::row_vector(grad_out.col_sums());
    Ok(())
}

/// Parameter gradients of a loss whose output gradients are `grads`, for
/// the batch that produced `cache`. Input embeddings receive no gradient.
pub fn backward<T: Scalar>(params: &FopParams<T>, cache: &ForwardCache<T>, grads: &HeadGrads<T>) -> Result<FopParams<T>> {
    check_cache(params, cache)?;
    let b = cache.batch_size();
    let d = params.dims.embed_dim;
    check_shape("backward.logits", &grads.logits, (b, params.dims.n_classes))?;
    check_shape("backward.fused", &grads.fused, (b, d))?;
    check_shape("backward.u", &grads.u, (b, d))?;
    check_shape("backward.v", &grads.v, (b, d))?;

    let mut out = params.zeros_like();

    // Classifier: logits = l W.
    let mut dl = grads.fused.clone().unwrap_or_else(|| Matrix::zeros(b, d));
    if let Some(dlogits) = &grads.logits {
        out.classifier = cache.fused.matmul_tn(dlogits)?;
        dl.axpy(T::one(), &dlogits.matmul_nt(&params.classifier)?)?;
    }

    // Fusion: l = k ⊙ tanh u + (1 − k) ⊙ tanh v.
    let mut du = grads.u.clone().unwrap_or_else(|| Matrix::zeros(b, d));
    let mut dv = grads.v.clone().unwrap_or_else(|| Matrix::zeros(b, d));
    let mut dk = Matrix::zeros(b, d);
    for i in 0..b {
        for j in 0..d {
            let g = dl.get(i, j);
            let k = cache.gate.get(i, j);
            let (tu, tv) = (cache.tanh_u.get(i, j), cache.tanh_v.get(i, j));
            dk.set(i, j, g * (tu - tv));
            du.set(i, j, du.get(i, j) + g * k * (T::one() - tu * tu));
            dv.set(i, j, dv.get(i, j) + g * (T::one() - k) * (T::one() - tv * tv));
        }
    }

    // Gate: k = σ(z_last), hidden layers ReLU, input [u; v].
    if params.fusion == Fusion::Gated {
        let mut dz = dk.zip_map(&cache.gate, |g, s| g * s * (T::one() - s))?;
        for layer in (0..params.attention.len()).rev() {
            dense_backward(&cache.att_inputs[layer], &dz, &mut out.attention[layer])?;
            let dh = dz.matmul_nt(&params.attention[layer].weight)?;
            if layer > 0 {
                dz = dh.zip_map(&cache.att_pre[layer - 1], |g, z| if z > T::zero() { g } else { T::zero() })?;
            } else {
                let (dgu, dgv) = dh.split_cols(d);
                du.axpy(T::one(), &dgu)?;
                dv.axpy(T::one(), &dgv)?;
            }
        }
    }

    // Projections through the L2 normalization.
    let du_raw = normalize_backward(&cache.u, &cache.u_norms, &du);
    let dv_raw = normalize_backward(&cache.v, &cache.v_norms, &dv);
    dense_backward(&cache.faces, &du_raw, &mut out.face)?;
    dense_backward(&cache.voices, &dv_raw, &mut out.voice)?;
    Ok(out)
}
