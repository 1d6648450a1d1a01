//! External categorical evidence and the biased evidence autoencoders.
//!
//! Evidence is a categorical label per sample, produced by some auxiliary process. It never
//! enters a network as a raw integer: it is one-hot encoded and passed through a small
//! autoencoder (`w → latent softmax → w`) that is trained for only a handful of epochs, so it
//! behaves close to an identity map instead of generalizing. Its softmax hidden activations are
//! the latent categorical targets the transfer step tries to predict.
//!
//! When `w` exceeds the latent width the encoder downsizes the code; distinct labels can then
//! collide on near-identical rows, which is a property of the representation and not an error.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    minibatches, mse, mse_grad, splitmix64, Activation, LayerSpec, Matrix, Network, Optimizer,
    OptimizerConfig, Rng,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceQuality {
    Real,
    WhiteNoise,
    RandomIndex,
}

impl EvidenceQuality {
    pub fn name(self) -> &'static str {
        match self {
            EvidenceQuality::Real => "real",
            EvidenceQuality::WhiteNoise => "white_noise",
            EvidenceQuality::RandomIndex => "random_index",
        }
    }
}

impl fmt::Display for EvidenceQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Category → group functions used to derive coarse evidence from fine labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupMapping {
    Identity,
    Constant,
    /// `y mod w`.
    Modulo,
    /// `splitmix64(y) mod w`.
    HashModulo,
    /// Explicit table, `table[y]`.
    Table(Vec<usize>),
}

impl GroupMapping {
    /// Parses `identity`, `constant`, `mod`, `hash_mod` or `table:g0,g1,…`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "identity" => GroupMapping::Identity,
            "constant" => GroupMapping::Constant,
            "mod" => GroupMapping::Modulo,
            "hash_mod" => GroupMapping::HashModulo,
            _ => {
                let table = s.strip_prefix("table:").ok_or_else(|| {
                    Error::Config(format!("unknown evidence mapping {s:?}"))
                })?;
                let groups = table
                    .split(',')
                    .map(|g| {
                        g.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Config(format!("bad mapping entry {g:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                GroupMapping::Table(groups)
            }
        })
    }

    pub fn apply(&self, category: usize, width: usize) -> Result<usize> {
        let g = match self {
            GroupMapping::Identity => category,
            GroupMapping::Constant => 0,
            GroupMapping::Modulo => category % width,
            GroupMapping::HashModulo => (splitmix64(category as u64) % width as u64) as usize,
            GroupMapping::Table(t) => *t.get(category).ok_or_else(|| {
                Error::Domain(format!("mapping table has no entry for category {category}"))
            })?,
        };
        if g >= width {
            return Err(Error::Domain(format!(
                "category {category} maps to group {g}, outside width {width}"
            )));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceSource {
    labels: Vec<usize>,
    width: usize,
    onehot: Matrix,
    quality: EvidenceQuality,
}

impl EvidenceSource {
    pub fn new(labels: Vec<usize>, width: usize, quality: EvidenceQuality) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("evidence width must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= width) {
            return Err(Error::Domain(format!(
                "evidence label {l} at index {i} is outside [0, {width})"
            )));
        }
        let mut onehot = Matrix::zeros(labels.len(), width);
        for (i, &l) in labels.iter().enumerate() {
            onehot[(i, l)] = 1.0;
        }
        Ok(Self {
            labels,
            width,
            onehot,
            quality,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn onehot(&self) -> &Matrix {
        &self.onehot
    }

    pub fn quality(&self) -> EvidenceQuality {
        self.quality
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.width];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Writes `# width=<w>` followed by one label per line.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# width={}", self.width)?;
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads an evidence label file. Without a width header, the width is `max label + 1`.
    pub fn read_from(
        r: impl BufRead,
        source_name: &str,
        quality: EvidenceQuality,
    ) -> Result<Self> {
        let mut width = None;
        let mut labels = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                location: format!("line {}", i + 1),
                message,
            };
            if let Some(comment) = t.strip_prefix('#') {
                if let Some(w) = comment.trim().strip_prefix("width=") {
                    width = Some(
                        w.trim()
                            .parse::<usize>()
                            .map_err(|e| parse_err(format!("bad width header: {e}")))?,
                    );
                }
                continue;
            }
            let l = t
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad label {t:?}: {e}")))?;
            if let Some(w) = width {
                if l >= w {
                    return Err(parse_err(format!("label {l} outside declared width {w}")));
                }
            }
            labels.push(l);
        }
        let width = width.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
        Self::new(labels, width, quality)
    }

    pub fn load(path: &Path, quality: EvidenceQuality) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(
            std::io::BufReader::new(file),
            &path.display().to_string(),
            quality,
        )
    }
}

/// Real evidence: each category label mapped to its group.
pub fn derive_evidence(
    categories: &[usize],
    mapping: &GroupMapping,
    width: usize,
) -> Result<EvidenceSource> {
    let labels = categories
        .iter()
        .map(|&c| mapping.apply(c, width))
        .collect::<Result<Vec<_>>>()?;
    EvidenceSource::new(labels, width, EvidenceQuality::Real)
}

/// Labels drawn i.i.d. uniformly from `[0, width)`.
pub fn white_noise_evidence(n: usize, width: usize, rng: &mut Rng) -> Result<EvidenceSource> {
    if width < 2 {
        return Err(Error::Config(format!(
            "white-noise evidence needs width >= 2, got {width}"
        )));
    }
    let labels = (0..n).map(|_| rng.below(width)).collect();
    EvidenceSource::new(labels, width, EvidenceQuality::WhiteNoise)
}

/// Real evidence presented in a uniformly random, non-corresponding order.
pub fn random_index_evidence(real: &EvidenceSource, rng: &mut Rng) -> Result<EvidenceSource> {
    if real.quality != EvidenceQuality::Real {
        return Err(Error::Config(format!(
            "random-index evidence is built from real evidence, got {}",
            real.quality
        )));
    }
    let perm = rng.permutation(real.len());
    let labels = perm.into_iter().map(|i| real.labels[i]).collect();
    EvidenceSource::new(labels, real.width, EvidenceQuality::RandomIndex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceEncoderConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for EvidenceEncoderConfig {
    /// Five epochs of online SGD at 0.01: enough to imprint each label, too little to generalize.
    fn default() -> Self {
        Self {
            epochs: 5,
            optimizer: OptimizerConfig::sgd(0.01, 1),
        }
    }
}

/// The biased single-hidden-layer evidence autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceEncoder {
    pub encoder: Network,
    pub decoder: Network,
    pub epochs_trained: usize,
    /// ℓ_EviAE before training followed by one value per epoch.
    pub trace: Vec<f64>,
}

impl EvidenceEncoder {
    pub fn init(width: usize, latent_width: usize, rng: &mut Rng) -> Result<Self> {
        let encoder = Network::new(
            vec![LayerSpec::new(width, latent_width, Activation::Softmax)],
            rng,
        )?;
        let decoder = Network::new(
            vec![LayerSpec::new(latent_width, width, Activation::Linear)],
            rng,
        )?;
        Ok(Self {
            encoder,
            decoder,
            epochs_trained: 0,
            trace: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.encoder.in_width()
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.out_width()
    }

    /// ℓ_EviAE: reconstruction MSE of the one-hot evidence.
    pub fn reconstruction_loss(&self, v: &EvidenceSource) -> Result<f64> {
        let z = self.encoder.predict(v.onehot())?;
        mse(&self.decoder.predict(&z)?, v.onehot())
    }
}

/// Trains the biased evidence autoencoder with the default optimizer for `epochs` epochs.
pub fn train_evidence_encoder(
    v: &EvidenceSource,
    latent_width: usize,
    epochs: usize,
    rng: &mut Rng,
) -> Result<EvidenceEncoder> {
    let cfg = EvidenceEncoderConfig {
        epochs,
        ..EvidenceEncoderConfig::default()
    };
    train_evidence_encoder_with(v, latent_width, &cfg, rng)
}

pub fn train_evidence_encoder_with(
    v: &EvidenceSource,
    latent_width: usize,
    cfg: &EvidenceEncoderConfig,
    rng: &mut Rng,
) -> Result<EvidenceEncoder> {
    let mut enc = EvidenceEncoder::init(v.width(), latent_width, &mut rng.derive_named("init"))?;
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let target = v.onehot();
    enc.trace.push(enc.reconstruction_loss(v)?);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in minibatches(v.len(), cfg.optimizer.batch_size, rng) {
            let xb = target.select_rows(&batch);
            let ec = enc.encoder.forward(&xb)?;
            let dc = enc.decoder.forward(ec.output())?;
            total += mse(dc.output(), &xb)? * batch.len() as f64;
            let dbp = enc.decoder.backward(&dc, &mse_grad(dc.output(), &xb)?)?;
            let ebp = enc.encoder.backward(&ec, &dbp.input_grad)?;
            opt.step(&mut [
                (&mut enc.encoder, &ebp.grads),
                (&mut enc.decoder, &dbp.grads),
            ])?;
        }
        let loss = total / v.len().max(1) as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                stage: "evidence encoder",
                epoch,
                loss,
            });
        }
        enc.trace.push(loss);
        enc.epochs_trained += 1;
    }
    Ok(enc)
}

/// Z_V: the encoder's softmax codes of the one-hot evidence, one distribution per sample.
pub fn latent_evidence(enc: &EvidenceEncoder, v: &EvidenceSource) -> Result<Matrix> {
    if v.width() != enc.width() {
        return Err(Error::dim("latent_evidence width", enc.width(), v.width()));
    }
    enc.encoder.predict(v.onehot())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mean_row_entropy;

    fn digits() -> Vec<usize> {
        (0..10).collect()
    }

    #[test]
    fn mod_three_digits() {
        let v = derive_evidence(&digits(), &GroupMapping::Modulo, 3).unwrap();
        assert_eq!(v.labels(), &[0, 1, 2, 0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(v.quality(), EvidenceQuality::Real);
    }

    #[test]
    fn identity_mapping_is_the_labelset() {
        let v = derive_evidence(&digits(), &GroupMapping::Identity, 10).unwrap();
        assert_eq!(v.labels(), digits().as_slice());
        assert_eq!(v.onehot(), &Matrix::identity(10));
    }

    #[test]
    fn constant_mapping() {
        let v = derive_evidence(&digits(), &GroupMapping::Constant, 3).unwrap();
        assert!(v.labels().iter().all(|&l| l == 0));
        for r in 0..10 {
            assert_eq!(v.onehot().row(r), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn out_of_range_mapping_is_an_error() {
        assert!(derive_evidence(&digits(), &GroupMapping::Identity, 5).is_err());
        let t = GroupMapping::Table(vec![0, 1, 7]);
        assert!(derive_evidence(&[0, 1, 2], &t, 3).is_err());
        assert!(derive_evidence(&[3], &t, 3).is_err());
    }

    #[test]
    fn mapping_parse() {
        assert_eq!(GroupMapping::parse("mod").unwrap(), GroupMapping::Modulo);
        assert_eq!(
            GroupMapping::parse("table:0, 0,1").unwrap(),
            GroupMapping::Table(vec![0, 0, 1])
        );
        assert!(GroupMapping::parse("bogus").is_err());
    }

    #[test]
    fn white_noise_frequencies_within_multinomial_bounds() {
        let (n, w) = (10_000, 4);
        let v = white_noise_evidence(n, w, &mut Rng::new(77)).unwrap();
        let p = 1.0 / w as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in v.counts() {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn white_noise_small_and_stochastic() {
        let v = white_noise_evidence(1, 2, &mut Rng::new(1)).unwrap();
        assert!(v.labels()[0] < 2);
        let a = white_noise_evidence(100, 3, &mut Rng::new(1)).unwrap();
        let b = white_noise_evidence(100, 3, &mut Rng::new(2)).unwrap();
        assert_ne!(a.labels(), b.labels());
        assert!(white_noise_evidence(10, 1, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn random_index_preserves_multiset() {
        let cats: Vec<usize> = (0..300).map(|i| (i * 7) % 10).collect();
        let real = derive_evidence(&cats, &GroupMapping::Modulo, 3).unwrap();
        let shuffled = random_index_evidence(&real, &mut Rng::new(3)).unwrap();
        assert_eq!(shuffled.quality(), EvidenceQuality::RandomIndex);
        assert_eq!(shuffled.counts(), real.counts());
        let mut a = real.labels().to_vec();
        let mut b = shuffled.labels().to_vec();
        assert_ne!(a, b);
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert!(random_index_evidence(&shuffled, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn evidence_file_round_trip_and_validation() {
        let v = derive_evidence(&digits(), &GroupMapping::Modulo, 3).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"# width=3\n0\n1\n2\n"));
        let back = EvidenceSource::read_from(&buf[..], "mem", EvidenceQuality::Real).unwrap();
        assert_eq!(back, v);

        let bad = b"# width=2\n0\n1\n2\n";
        let err = EvidenceSource::read_from(&bad[..], "mem", EvidenceQuality::Real).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        let junk = b"0\nx\n";
        assert!(EvidenceSource::read_from(&junk[..], "mem", EvidenceQuality::Real).is_err());
    }

    #[test]
    fn untrained_encoder_is_near_uniform() {
        let v = derive_evidence(&digits(), &GroupMapping::Modulo, 3).unwrap();
        let enc = train_evidence_encoder(&v, 10, 0, &mut Rng::new(8)).unwrap();
        let zv = latent_evidence(&enc, &v).unwrap();
        assert!(mean_row_entropy(&zv) >= 0.9 * 10f64.ln());
        assert_eq!(enc.trace.len(), 1);
    }

    #[test]
    fn latent_evidence_rows() {
        let cats: Vec<usize> = (0..200).map(|i| i % 10).collect();
        let v = derive_evidence(&cats, &GroupMapping::Modulo, 3).unwrap();
        let enc = train_evidence_encoder(&v, 10, 5, &mut Rng::new(12)).unwrap();
        let zv = latent_evidence(&enc, &v).unwrap();
        assert_eq!(zv.shape(), (200, 10));
        for row in zv.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        // equal labels ⇒ identical rows; w labels ⇒ exactly w distinct rows
        let mut distinct: Vec<&[f64]> = Vec::new();
        for (r, &l) in v.labels().iter().enumerate() {
            assert_eq!(zv.row(r), zv.row(l), "row {r} differs from its label's first row");
            if !distinct.contains(&zv.row(r)) {
                distinct.push(zv.row(r));
            }
        }
        assert_eq!(distinct.len(), 3);
        let other = derive_evidence(&cats, &GroupMapping::Identity, 10).unwrap();
        assert!(latent_evidence(&enc, &other).is_err());
    }

    #[test]
    fn evidence_encoder_training_reduces_reconstruction_loss() {
        let cats: Vec<usize> = (0..600).map(|i| (i * 13) % 10).collect();
        let v = derive_evidence(&cats, &GroupMapping::Modulo, 3).unwrap();
        let enc = train_evidence_encoder(&v, 10, 5, &mut Rng::new(21)).unwrap();
        let first = enc.trace[0];
        let last = *enc.trace.last().unwrap();
        assert_eq!(enc.epochs_trained, 5);
        assert!(last < first, "trace {:?}", enc.trace);
    }
}
