//! Checkpoint container.
//!
//! A line-oriented text format. Every float is written with Rust's shortest round-trip
//! formatting, so reading a checkpoint restores bit-identical parameters and writing it again
//! reproduces the same bytes.
//!
//! ```text
//! evitram-checkpoint 1
//! kind autoencoder            (or: kind evitram)
//! config.input_width 10
//! config.hidden_widths 128 128 64
//! config.latent_width 10
//! config.corruption_rate 0.2
//! config.epochs 50
//! config.optimizer.kind adam
//! config.optimizer.learning_rate 0.001
//! config.optimizer.momentum 0
//! config.optimizer.batch_size 64
//! scaler.mean 10
//! <10 values>
//! scaler.std 10
//! <10 values>
//! network encoder 4
//! layer 10 128 relu
//! weights 10 128
//! <one line of 128 values per input unit>
//! bias 128
//! <128 values>
//! …                           (remaining layers, then `network decoder …`)
//! lambda 10                   (evitram only)
//! heads 1                     (evitram only, followed by `network head0 1` …)
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::autoenc::{DenoisingAEConfig, DenoisingAutoencoder, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerParams, LayerSpec, Matrix, Network, OptimizerConfig, OptimizerKind};
use crate::transfer::EviTramModel;

const MAGIC: &str = "evitram-checkpoint 1";

fn push_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn write_network(out: &mut String, name: &str, net: &Network) {
    let _ = writeln!(out, "network {name} {}", net.specs().len());
    for (spec, p) in net.specs().iter().zip(net.params()) {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            spec.in_width,
            spec.out_width,
            spec.activation.name()
        );
        let _ = writeln!(out, "weights {} {}", p.weights.rows(), p.weights.cols());
        for row in p.weights.iter_rows() {
            push_values(out, row);
        }
        let _ = writeln!(out, "bias {}", p.bias.len());
        push_values(out, &p.bias);
    }
}

fn write_base(out: &mut String, kind: &str, ae: &DenoisingAutoencoder) {
    let c = &ae.config;
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind {kind}");
    let _ = writeln!(out, "config.input_width {}", c.input_width);
    let widths: Vec<String> = c.hidden_widths.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "config.hidden_widths {}", widths.join(" "));
    let _ = writeln!(out, "config.latent_width {}", c.latent_width);
    let _ = writeln!(out, "config.corruption_rate {}", c.corruption_rate);
    let _ = writeln!(out, "config.epochs {}", c.epochs);
    let _ = writeln!(out, "config.optimizer.kind {}", c.optimizer.kind.name());
    let _ = writeln!(out, "config.optimizer.learning_rate {}", c.optimizer.learning_rate);
    let _ = writeln!(out, "config.optimizer.momentum {}", c.optimizer.momentum);
    let _ = writeln!(out, "config.optimizer.batch_size {}", c.optimizer.batch_size);
    let _ = writeln!(out, "scaler.mean {}", ae.scaler.mean.len());
    push_values(out, &ae.scaler.mean);
    let _ = writeln!(out, "scaler.std {}", ae.scaler.std.len());
    push_values(out, &ae.scaler.std);
    write_network(out, "encoder", &ae.encoder);
    write_network(out, "decoder", &ae.decoder);
}

pub fn autoencoder_to_string(ae: &DenoisingAutoencoder) -> String {
    let mut out = String::new();
    write_base(&mut out, "autoencoder", ae);
    out.push_str("end\n");
    out
}

/// Base autoencoder, λ and every head. The frozen Z_V targets are data, not parameters, and
/// are not stored.
pub fn evitram_to_string(model: &EviTramModel) -> String {
    let mut out = String::new();
    write_base(&mut out, "evitram", &model.base);
    let _ = writeln!(out, "lambda {}", model.lambda);
    let _ = writeln!(out, "heads {}", model.heads.len());
    for (j, h) in model.heads.iter().enumerate() {
        write_network(&mut out, &format!("head{j}"), h);
    }
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    name: &'a str,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, name: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            name,
            line_no: 0,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.name.to_string(),
            location: format!("line {}", self.line_no),
            message: message.into(),
        }
    }

    fn line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line_no = i + 1;
                Ok(l)
            }
            None => {
                self.line_no += 1;
                Err(self.error("unexpected end of checkpoint"))
            }
        }
    }

    /// Next line split as `key rest…`, with `key` required to equal `expected`.
    fn keyed(&mut self, expected: &str) -> Result<Vec<&'a str>> {
        let line = self.line()?;
        let mut parts = line.split(' ');
        let key = parts.next().unwrap_or("");
        if key != expected {
            return Err(self.error(format!("expected `{expected}`, found `{line}`")));
        }
        Ok(parts.filter(|p| !p.is_empty()).collect())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.error(format!("cannot parse `{s}`")))
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let parts = self.keyed(key)?;
        if parts.len() != 1 {
            return Err(self.error(format!("`{key}` takes exactly one value")));
        }
        self.parse(parts[0])
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.line()?;
        let vals = if line.is_empty() {
            Vec::new()
        } else {
            line.split(' ')
                .map(|s| self.parse::<f64>(s))
                .collect::<Result<Vec<_>>>()?
        };
        if vals.len() != n {
            return Err(self.error(format!("expected {n} values, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.error("non-finite parameter"));
        }
        Ok(vals)
    }

    fn vector(&mut self, key: &str) -> Result<Vec<f64>> {
        let n = self.single(key)?;
        self.values(n)
    }

    fn network(&mut self, name: &str) -> Result<Network> {
        let parts = self.keyed("network")?;
        if parts.len() != 2 || parts[0] != name {
            return Err(self.error(format!("expected `network {name} <layers>`")));
        }
        let count: usize = self.parse(parts[1])?;
        let mut specs = Vec::with_capacity(count);
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let parts = self.keyed("layer")?;
            if parts.len() != 3 {
                return Err(self.error("expected `layer <in> <out> <activation>`"));
            }
            let in_w: usize = self.parse(parts[0])?;
            let out_w: usize = self.parse(parts[1])?;
            let act = Activation::parse(parts[2])
                .ok_or_else(|| self.error(format!("unknown activation `{}`", parts[2])))?;
            let shape = self.keyed("weights")?;
            if shape.len() != 2
                || self.parse::<usize>(shape[0])? != in_w
                || self.parse::<usize>(shape[1])? != out_w
            {
                return Err(self.error(format!("weights shape must be {in_w} {out_w}")));
            }
            let mut data = Vec::with_capacity(in_w * out_w);
            for _ in 0..in_w {
                data.extend(self.values(out_w)?);
            }
            let bias = self.vector("bias")?;
            if bias.len() != out_w {
                return Err(self.error(format!("bias length must be {out_w}")));
            }
            specs.push(LayerSpec::new(in_w, out_w, act));
            params.push(LayerParams {
                weights: Matrix::from_vec(in_w, out_w, data)?,
                bias,
            });
        }
        Network::from_params(specs, params)
    }

    fn base(&mut self) -> Result<(String, DenoisingAutoencoder)> {
        if self.line()? != MAGIC {
            return Err(self.error(format!("missing `{MAGIC}` header")));
        }
        let kind: String = self.single("kind")?;
        let input_width = self.single("config.input_width")?;
        let hidden_widths = self
            .keyed("config.hidden_widths")?
            .into_iter()
            .map(|s| self.parse(s))
            .collect::<Result<Vec<usize>>>()?;
        let latent_width = self.single("config.latent_width")?;
        let corruption_rate = self.single("config.corruption_rate")?;
        let epochs = self.single("config.epochs")?;
        let kind_name: String = self.single("config.optimizer.kind")?;
        let opt_kind = OptimizerKind::parse(&kind_name)
            .ok_or_else(|| self.error(format!("unknown optimizer `{kind_name}`")))?;
        let optimizer = OptimizerConfig {
            kind: opt_kind,
            learning_rate: self.single("config.optimizer.learning_rate")?,
            momentum: self.single("config.optimizer.momentum")?,
            batch_size: self.single("config.optimizer.batch_size")?,
        };
        let config = DenoisingAEConfig {
            input_width,
            hidden_widths,
            latent_width,
            corruption_rate,
            epochs,
            optimizer,
        };
        let mean = self.vector("scaler.mean")?;
        let std = self.vector("scaler.std")?;
        let encoder = self.network("encoder")?;
        let decoder = self.network("decoder")?;
        let ae = DenoisingAutoencoder::from_parts(config, Standardizer { mean, std }, encoder, decoder)?;
        Ok((kind, ae))
    }

    fn finish(&mut self) -> Result<()> {
        if self.line()? != "end" {
            return Err(self.error("expected `end`"));
        }
        if let Some((i, _)) = self.lines.find(|(_, l)| !l.is_empty()) {
            self.line_no = i + 1;
            return Err(self.error("trailing content after `end`"));
        }
        Ok(())
    }
}

pub fn autoencoder_from_str(text: &str, name: &str) -> Result<DenoisingAutoencoder> {
    let mut r = Reader::new(text, name);
    let (kind, ae) = r.base()?;
    if kind != "autoencoder" {
        return Err(r.error(format!("expected an autoencoder checkpoint, found `{kind}`")));
    }
    r.finish()?;
    Ok(ae)
}

pub fn evitram_from_str(text: &str, name: &str) -> Result<EviTramModel> {
    let mut r = Reader::new(text, name);
    let (kind, ae) = r.base()?;
    if kind != "evitram" {
        return Err(r.error(format!("expected an evitram checkpoint, found `{kind}`")));
    }
    let lambda: f64 = r.single("lambda")?;
    let k: usize = r.single("heads")?;
    let heads = (0..k)
        .map(|j| r.network(&format!("head{j}")))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    EviTramModel::from_parts(ae, heads, lambda)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_autoencoder(ae: &DenoisingAutoencoder, path: &Path) -> Result<()> {
    std::fs::write(path, autoencoder_to_string(ae)).map_err(|e| Error::io(path, e))
}

pub fn load_autoencoder(path: &Path) -> Result<DenoisingAutoencoder> {
    autoencoder_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn save_evitram(model: &EviTramModel, path: &Path) -> Result<()> {
    std::fs::write(path, evitram_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_evitram(path: &Path) -> Result<EviTramModel> {
    evitram_from_str(&read_text(path)?, &path.display().to_string())
}

/// The autoencoder stored in either kind of checkpoint; heads are dropped.
pub fn load_base(path: &Path) -> Result<DenoisingAutoencoder> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    let evitram = text.lines().take(2).any(|l| l.trim() == "kind evitram");
    if evitram {
        Ok(evitram_from_str(&text, &name)?.base)
    } else {
        autoencoder_from_str(&text, &name)
    }
}
