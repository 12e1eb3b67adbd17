//! Flat `key = value` run configuration. Every key is declared with a
//! default; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use splatloc::bench::{BenchmarkSpec, EvalConfig};
use splatloc::model::ModelConfig;
use splatloc::pnp::RansacConfig;
use splatloc::refinement::{MatcherKind, NccConfig, RefinementConfig};
use splatloc::supervision::TrainConfig;

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed: RANSAC, shuffling, subsampling"),
    ("precision", "f64", "f32 or f64"),
    ("dims", "toy", "toy or full model dimensions"),
    ("model.theta_c", "", "coarse match threshold (empty: dims default)"),
    ("model.tau", "", "dual-softmax temperature (empty: dims default)"),
    ("model.init_seed", "0", "weight initialization seed"),
    ("scene.opacity_threshold", "0.9", "activated opacity filter"),
    ("scene.subsample", "100000", "maximum Gaussians after subsampling"),
    ("bench.n_gaussians", "200", ""),
    ("bench.extent", "1.0", ""),
    ("bench.scale_min", "0.04", ""),
    ("bench.scale_max", "0.09", ""),
    ("bench.sh_rest_std", "0.0", ""),
    ("bench.n_train_views", "50", ""),
    ("bench.n_test_views", "10", ""),
    ("bench.image_size", "64", ""),
    ("bench.focal", "64.0", ""),
    ("bench.orbit_radius", "1.8", "camera distance in extents"),
    ("bench.min_coverage", "0.3", ""),
    ("bench.max_resamples", "100", ""),
    ("train.regime", "single", "single, multi or cross; multi and cross train coarse-only"),
    ("train.steps", "2000", "maximum optimizer steps"),
    ("train.epochs", "100", ""),
    ("train.lr", "", "Adam step size (empty: 1e-3 for toy, 1e-4 for full dims)"),
    ("train.coarse_only", "false", ""),
    ("train.checkpoint_every", "0", "epochs between checkpoints (0: off)"),
    ("ransac.inlier_px", "2.0", "initial solve threshold at the encoder input size"),
    ("ransac.max_iters", "2000", ""),
    ("ransac.confidence", "0.999", ""),
    ("refine.iterations", "3", ""),
    ("refine.matcher", "ncc", "ncc or model"),
    ("refine.min_matches", "8", ""),
    ("refine.alpha_floor", "0.5", ""),
    ("refine.inlier_px", "1.0", ""),
    ("refine.ncc_min_score", "0.7", ""),
    ("eval.t_thresh", "0.05", "translation threshold in extents"),
    ("eval.r_thresh_deg", "5.0", ""),
    ("eval.oracle", "false", "use ground-truth poses as estimates"),
    ("eval.overlays", "true", "write match overlay PNGs"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the lines of `text` (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            c.set(k.trim(), v.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => bail!("unknown config key '{key}'"),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| anyhow!("override '{pair}' is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("declared key")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e| anyhow!("config {key} = '{v}': {e}"))
    }

    fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    /// Sorted `key = value` lines.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn use_f32(&self) -> Result<bool> {
        match self.raw("precision") {
            "f32" => Ok(true),
            "f64" => Ok(false),
            p => bail!("precision must be f32 or f64, got '{p}'"),
        }
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let mut m = match self.raw("dims") {
            "toy" => ModelConfig::toy(),
            "full" => ModelConfig::full(),
            d => bail!("dims must be toy or full, got '{d}'"),
        };
        if let Some(t) = self.get_opt("model.theta_c")? {
            m.theta_c = t;
        }
        if let Some(t) = self.get_opt("model.tau")? {
            m.tau = t;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn bench(&self) -> Result<BenchmarkSpec> {
        let s = BenchmarkSpec {
            n_gaussians: self.get("bench.n_gaussians")?,
            extent: self.get("bench.extent")?,
            scale_min: self.get("bench.scale_min")?,
            scale_max: self.get("bench.scale_max")?,
            sh_rest_std: self.get("bench.sh_rest_std")?,
            n_train_views: self.get("bench.n_train_views")?,
            n_test_views: self.get("bench.n_test_views")?,
            image_size: self.get("bench.image_size")?,
            focal: self.get("bench.focal")?,
            orbit_radius: self.get("bench.orbit_radius")?,
            min_coverage: self.get("bench.min_coverage")?,
            max_resamples: self.get("bench.max_resamples")?,
            seed: self.seed()?,
            ..BenchmarkSpec::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let regime = self.raw("train.regime");
        let coarse_only = match regime {
            "single" => self.get("train.coarse_only")?,
            "multi" | "cross" => true,
            r => bail!("train.regime must be single, multi or cross, got '{r}'"),
        };
        let mut t = TrainConfig {
            max_steps: self.get("train.steps")?,
            epochs: self.get("train.epochs")?,
            seed: self.seed()?,
            coarse_only,
            checkpoint_every: self.get("train.checkpoint_every")?,
            ..TrainConfig::default()
        };
        t.adam.lr = match self.get_opt("train.lr")? {
            Some(lr) => lr,
            None if self.raw("dims") == "toy" => 1e-3,
            None => 1e-4,
        };
        if !(t.adam.lr > 0.0) {
            bail!("train.lr must be positive");
        }
        Ok(t)
    }

    pub fn ransac(&self) -> Result<RansacConfig> {
        Ok(RansacConfig {
            inlier_px: self.get("ransac.inlier_px")?,
            max_iters: self.get("ransac.max_iters")?,
            confidence: self.get("ransac.confidence")?,
            seed: self.seed()?,
        })
    }

    pub fn refinement(&self) -> Result<RefinementConfig> {
        let matcher: MatcherKind = self.raw("refine.matcher").parse().map_err(|e: String| anyhow!(e))?;
        let r = RefinementConfig {
            iterations: self.get("refine.iterations")?,
            matcher,
            min_matches: self.get("refine.min_matches")?,
            alpha_floor: self.get("refine.alpha_floor")?,
            ransac: RansacConfig {
                inlier_px: self.get("refine.inlier_px")?,
                ..self.ransac()?
            },
            ncc: NccConfig {
                min_score: self.get("refine.ncc_min_score")?,
                ..NccConfig::default()
            },
        };
        r.validate().map_err(|e| anyhow!(e))?;
        Ok(r)
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            ransac: self.ransac()?,
            refinement: self.refinement()?,
            t_thresh: self.get("eval.t_thresh")?,
            r_thresh_deg: self.get("eval.r_thresh_deg")?,
            oracle: self.get("eval.oracle")?,
            overlays: self.get("eval.overlays")?,
        })
    }

    /// Builds every typed view once so bad values fail before any work.
    pub fn validate(&self) -> Result<()> {
        self.use_f32()?;
        self.model()?;
        self.bench()?;
        self.train()?;
        self.eval()?;
        self.get::<f64>("scene.opacity_threshold")?;
        self.get::<usize>("scene.subsample")?;
        self.get::<u64>("model.init_seed")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_and_override() {
        let mut c = RunConfig::parse("# comment\nseed = 7\n train.lr=1e-3  # inline\n\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.train().unwrap().adam.lr, 1e-3);
        c.set_pair("train.lr=").unwrap();
        assert_eq!(c.train().unwrap().adam.lr, 1e-3);
        c.set_pair("dims=full").unwrap();
        assert_eq!(c.train().unwrap().adam.lr, 1e-4);
        c.set_pair("refine.matcher=model").unwrap();
        assert_eq!(c.refinement().unwrap().matcher, MatcherKind::Model);
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("seed 1").is_err());
        let c = RunConfig::parse("seed = x").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn resolved_round_trips() {
        let mut c = RunConfig::default();
        c.set("dims", "full").unwrap();
        assert_eq!(RunConfig::parse(&c.resolved()).unwrap(), c);
    }

    #[test]
    fn multi_scene_regime_is_coarse_only() {
        let c = RunConfig::parse("train.regime = multi").unwrap();
        assert!(c.train().unwrap().coarse_only);
    }
}
