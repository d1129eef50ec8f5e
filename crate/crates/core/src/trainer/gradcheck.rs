use super::objective::{batch_objective, sample_negatives, Batch, LossConfig};
use crate::error::Result;
use crate::fopmodel::{FopParams, Fusion, InitScheme, ModelDims};
use crate::losses::LossKind;
use crate::numcore::{Matrix, Rng};

/// Gradient-check settings: toy model size, batch and tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub seeds: u64,
    pub face_dim: usize,
    pub voice_dim: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
    pub batch_size: usize,
    pub att_hidden: Vec<usize>,
    pub fusion: Fusion,
    /// Step is `rel_step · max(|θ|, 1)`.
    pub rel_step: f64,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator.
    pub floor: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seeds: 20,
            face_dim: 6,
            voice_dim: 5,
            embed_dim: 8,
            n_classes: 3,
            batch_size: 6,
            att_hidden: Vec::new(),
            fusion: Fusion::Gated,
            rel_step: 1e-5,
            floor: 1e-6,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub kind: LossKind,
    pub max_rel_err: f64,
    /// Where the worst error occurred: seed, tensor name and flat index.
    pub worst: (u64, String, usize),
    pub n_checked: usize,
}

impl GradcheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Toy model, batch and centers for one seed. Labels cycle through the
/// classes so every batch has same- and different-identity pairs.
fn toy(cfg: &GradcheckConfig, seed: u64) -> (FopParams<f64>, Batch<f64>, Matrix<f64>) {
    let mut rng = Rng::new(seed);
    let mut dims = ModelDims::new(cfg.face_dim, cfg.voice_dim, cfg.embed_dim, cfg.n_classes);
    dims.att_hidden = cfg.att_hidden.clone();
    let mut params = FopParams::init(dims, cfg.fusion, InitScheme::XavierUniform, &mut rng);
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            *x += 0.1 * rng.normal();
        }
    }
    let mut labels: Vec<usize> = (0..cfg.batch_size).map(|i| i % cfg.n_classes).collect();
    rng.shuffle(&mut labels);
    let batch = Batch {
        faces: Matrix::from_fn(cfg.batch_size, cfg.face_dim, |_, _| rng.normal()),
        voices: Matrix::from_fn(cfg.batch_size, cfg.voice_dim, |_, _| rng.normal()),
        negatives: sample_negatives(&labels, &mut rng),
        labels,
    };
    let centers = Matrix::from_fn(cfg.n_classes, cfg.embed_dim, |_, _| 0.3 * rng.normal());
    (params, batch, centers)
}

/// Largest relative error between `analytic` and central differences of
/// `f` at `params`, with its tensor name and flat index, and the number of
/// values compared.
fn compare(
    params: &FopParams<f64>,
    analytic: &FopParams<f64>,
    f: impl Fn(&FopParams<f64>) -> Result<f64>,
    cfg: &GradcheckConfig,
) -> Result<(f64, String, usize, usize)> {
    let mut worst = (0.0, String::new(), 0);
    let mut n = 0;
    for (t, (name, grad)) in analytic.tensors().into_iter().enumerate() {
        for idx in 0..grad.data().len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let x = params.tensors()[t].1.data()[idx];
            let h = cfg.rel_step * x.abs().max(1.0);
            plus.tensors_mut()[t].data_mut()[idx] = x + h;
            minus.tensors_mut()[t].data_mut()[idx] = x - h;
            let numeric = (f(&plus)? - f(&minus)?) / (2.0 * h);
            let a = grad.data()[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            if err > worst.0 || n == 0 {
                worst = (err, name.clone(), idx);
            }
            n += 1;
        }
    }
    Ok((worst.0, worst.1, worst.2, n))
}

/// Compares whole-model analytic gradients with central differences for
/// one loss kind over `cfg.seeds` toy problems.
pub fn gradcheck(kind: LossKind, loss: &LossConfig, cfg: &GradcheckConfig) -> Result<GradcheckResult> {
    let loss = LossConfig { kind, ..loss.clone() };
    let mut worst = (0.0, (0, String::new(), 0));
    let mut n_checked = 0;
    for seed in 0..cfg.seeds {
        let (params, batch, centers) = toy(cfg, seed);
        let analytic = batch_objective(&params, &batch, &loss, Some(&centers))?.grads;
        let f = |p: &FopParams<f64>| batch_objective(p, &batch, &loss, Some(&centers)).map(|o| o.value);
        let (err, name, idx, n) = compare(&params, &analytic, f, cfg)?;
        if err > worst.0 || n_checked == 0 {
            worst = (err, (seed, name, idx));
        }
        n_checked += n;
    }
    Ok(GradcheckResult {
        kind,
        max_rel_err: worst.0,
        worst: worst.1,
        n_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_loss_kind_passes_on_small_run() {
        let cfg = GradcheckConfig {
            seeds: 3,
            ..Default::default()
        };
        for kind in LossKind::ALL {
            let r = gradcheck(kind, &LossConfig::default(), &cfg).unwrap();
            assert!(r.passed(cfg.tolerance), "{kind}: {r:?}");
            assert!(r.n_checked > 0);
        }
    }

    #[test]
    fn linear_fusion_and_hidden_layers_pass() {
        for (fusion, hidden) in [(Fusion::Linear, vec![]), (Fusion::Gated, vec![7])] {
            let cfg = GradcheckConfig {
                seeds: 2,
                fusion,
                att_hidden: hidden,
                ..Default::default()
            };
            for kind in [LossKind::Joint, LossKind::Git] {
                let r = gradcheck(kind, &LossConfig::default(), &cfg).unwrap();
                assert!(r.passed(cfg.tolerance), "{fusion} {kind}: {r:?}");
            }
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let cfg = GradcheckConfig::default();
        let (params, _, _) = toy(&cfg, 0);
        let f = |p: &FopParams<f64>| Ok(p.classifier.data().iter().map(|x| x * x).sum::<f64>());
        let mut good = params.zeros_like();
        good.classifier = params.classifier.scale(2.0);
        assert!(compare(&params, &good, f, &cfg).unwrap().0 <= 1e-8);
        let mut bad = good.clone();
        bad.classifier.data_mut()[5] *= 1.01;
        let (err, name, idx, _) = compare(&params, &bad, f, &cfg).unwrap();
        assert!(err > 1e-3);
        assert_eq!((name.as_str(), idx), ("classifier", 5));
    }
}
