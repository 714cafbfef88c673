//! Experiment configuration: flat text with `[section]` headers and
//! `key = value` lines. Parsing is strict (unknown sections, unknown
//! keys, and duplicates are errors that cite the line), and a config
//! hashes to a 16-hex digest over its canonical form so every output
//! file can state exactly what produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attacks::AttackKind;
use crate::core::SeedSpec;
use crate::error::{Error, Result};
use crate::games::GameVariant;
use crate::synth::TrainConfig;
use crate::thresholds::SmoothingMethod;

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSection {
    pub dim: usize,
    pub classes: usize,
    pub pool_size: usize,
    pub class_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSection {
    /// Records per training set.
    pub n: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub weight_init_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSection {
    pub kinds: Vec<AttackKind>,
    pub alphas: Vec<f64>,
    pub method: SmoothingMethod,
    pub n_shadow: usize,
    pub n_reference: usize,
    pub n_distilled: usize,
    /// Models per world for leave-one-out; defaults to `n_reference`.
    pub n_loo: Option<usize>,
    /// Distillation queries per class.
    pub m_per_class: usize,
    /// Evaluation records per class.
    pub eval_per_class: usize,
}

impl AttackSection {
    pub fn n_loo(&self) -> usize {
        self.n_loo.unwrap_or(self.n_reference)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSection {
    pub variant: GameVariant,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub population: Option<PopulationSection>,
    pub training: Option<TrainingSection>,
    pub attack: Option<AttackSection>,
    pub game: Option<GameSection>,
    pub root: u64,
    pub out_dir: Option<PathBuf>,
}

const SECTIONS: [&str; 6] = ["population", "training", "attack", "game", "seeds", "output"];

struct SectionReader<'a> {
    origin: &'a str,
    name: &'static str,
    entries: BTreeMap<String, (String, usize)>,
}

impl<'a> SectionReader<'a> {
    fn take_opt(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take(&mut self, key: &str) -> Result<(String, usize)> {
        self.take_opt(key).ok_or_else(|| {
            Error::Config(format!(
                "{}: missing required field {}.{key}",
                self.origin, self.name
            ))
        })
    }

    /// One of several spellings; exactly one may appear.
    fn take_aliased(&mut self, keys: &[&str]) -> Result<(String, usize)> {
        let present: Vec<&str> = keys
            .iter()
            .copied()
            .filter(|k| self.entries.contains_key(*k))
            .collect();
        match present.len() {
            0 => Err(Error::Config(format!(
                "{}: missing required field {}.{}",
                self.origin, self.name, keys[0]
            ))),
            1 => Ok(self.entries.remove(present[0]).unwrap()),
            _ => Err(Error::Config(format!(
                "{}: {}.{} and {}.{} are the same setting, give only one",
                self.origin, self.name, present[0], self.name, present[1]
            ))),
        }
    }

    fn schema(&self, line: usize, msg: String) -> Error {
        Error::Schema {
            path: self.origin.to_string(),
            line,
            msg,
        }
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let (v, line) = self.take(key)?;
        v.parse().map_err(|_| {
            self.schema(line, format!("{}.{key}: {v:?} is not a count", self.name))
        })
    }

    fn f64_of(&self, key: &str, v: &str, line: usize) -> Result<f64> {
        let parsed: f64 = v.parse().map_err(|_| {
            self.schema(line, format!("{}.{key}: {v:?} is not a number", self.name))
        })?;
        if !parsed.is_finite() {
            return Err(self.schema(line, format!("{}.{key}: must be finite", self.name)));
        }
        Ok(parsed)
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let (v, line) = self.take(key)?;
        self.f64_of(key, &v, line)
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(Error::Schema {
                path: self.origin.to_string(),
                line,
                msg: format!("unknown key {}.{key}", self.name),
            });
        }
        Ok(())
    }
}

fn parse_alphas(origin: &str, value: &str, line: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in value.split(',') {
        let tok = tok.trim();
        let a: f64 = tok.parse().map_err(|_| Error::Schema {
            path: origin.to_string(),
            line,
            msg: format!("attack.alphas: {tok:?} is not a number"),
        })?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Schema {
                path: origin.to_string(),
                line,
                msg: format!("attack.alphas: {a} outside [0, 1]"),
            });
        }
        out.push(a);
    }
    if out.is_empty() {
        return Err(Error::Schema {
            path: origin.to_string(),
            line,
            msg: "attack.alphas: empty list".into(),
        });
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
        let schema = |line: usize, msg: String| Error::Schema {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let name = inner
                    .strip_suffix(']')
                    .ok_or_else(|| schema(line_no, format!("malformed section header {line:?}")))?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(schema(line_no, format!("unknown section [{name}]")));
                }
                if sections.contains_key(&name) {
                    return Err(schema(line_no, format!("section [{name}] appears twice")));
                }
                sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
            } else if let Some(eq) = line.find('=') {
                let key = line[..eq].trim().to_string();
                let value = line[eq + 1..].trim().to_string();
                if key.is_empty() {
                    return Err(schema(line_no, "empty key".into()));
                }
                let section = current
                    .as_ref()
                    .ok_or_else(|| schema(line_no, format!("key {key} outside any [section]")))?;
                let entries = sections.get_mut(section).unwrap();
                if entries.contains_key(&key) {
                    return Err(schema(line_no, format!("duplicate key {section}.{key}")));
                }
                entries.insert(key, (value, line_no));
            } else {
                return Err(schema(
                    line_no,
                    format!("expected [section] or key = value, got {line:?}"),
                ));
            }
        }

        let mut reader = |name: &'static str| {
            sections.remove(name).map(|entries| SectionReader {
                origin,
                name,
                entries,
            })
        };

        let population = match reader("population") {
            Some(mut r) => {
                let (dim_v, dim_l) = r.take_aliased(&["dim", "d"])?;
                let (cls_v, cls_l) = r.take_aliased(&["classes", "K", "k"])?;
                let parse_count = |r: &SectionReader, key, v: &str, line| -> Result<usize> {
                    v.parse()
                        .map_err(|_| r.schema(line, format!("population.{key}: {v:?} is not a count")))
                };
                let section = PopulationSection {
                    dim: parse_count(&r, "dim", &dim_v, dim_l)?,
                    classes: parse_count(&r, "classes", &cls_v, cls_l)?,
                    pool_size: r.usize("pool_size")?,
                    class_scale: r.f64("class_scale")?,
                };
                r.finish()?;
                Some(section)
            }
            None => None,
        };

        let training = match reader("training") {
            Some(mut r) => {
                let clip_norm = match r.take_opt("clip_norm") {
                    Some((v, line)) => Some(r.f64_of("clip_norm", &v, line)?),
                    None => None,
                };
                let section = TrainingSection {
                    n: r.usize("n")?,
                    hidden_width: r.usize("hidden_width")?,
                    epochs: r.usize("epochs")?,
                    batch_size: r.usize("batch_size")?,
                    learning_rate: r.f64("learning_rate")?,
                    clip_norm,
                    weight_init_scale: r.f64("weight_init_scale")?,
                };
                r.finish()?;
                Some(section)
            }
            None => None,
        };

        let attack = match reader("attack") {
            Some(mut r) => {
                let (kinds_v, kinds_l) = r.take("kinds")?;
                let mut kinds = Vec::new();
                for tok in kinds_v.split(',') {
                    let kind = AttackKind::parse(tok.trim()).map_err(|e| {
                        r.schema(kinds_l, format!("attack.kinds: {e}"))
                    })?;
                    if kinds.contains(&kind) {
                        return Err(r.schema(kinds_l, format!("attack.kinds: {kind} repeats")));
                    }
                    kinds.push(kind);
                }
                let (alphas_v, alphas_l) = r.take("alphas")?;
                let alphas = parse_alphas(origin, &alphas_v, alphas_l)?;
                let (method_v, method_l) = r.take("method")?;
                let method = SmoothingMethod::parse(&method_v)
                    .map_err(|e| r.schema(method_l, format!("attack.method: {e}")))?;
                let n_loo = match r.take_opt("n_loo") {
                    Some((v, line)) => Some(v.parse().map_err(|_| {
                        r.schema(line, format!("attack.n_loo: {v:?} is not a count"))
                    })?),
                    None => None,
                };
                let section = AttackSection {
                    kinds,
                    alphas,
                    method,
                    n_shadow: r.usize("n_shadow")?,
                    n_reference: r.usize("n_reference")?,
                    n_distilled: r.usize("n_distilled")?,
                    n_loo,
                    m_per_class: r.usize("m_per_class")?,
                    eval_per_class: r.usize("eval_per_class")?,
                };
                r.finish()?;
                Some(section)
            }
            None => None,
        };

        let game = match reader("game") {
            Some(mut r) => {
                let (variant_v, variant_l) = r.take("variant")?;
                let variant = GameVariant::parse(&variant_v).ok_or_else(|| {
                    r.schema(
                        variant_l,
                        format!("game.variant: unknown variant {variant_v:?}"),
                    )
                })?;
                let section = GameSection {
                    variant,
                    trials: r.usize("trials")?,
                };
                r.finish()?;
                Some(section)
            }
            None => None,
        };

        let root = match reader("seeds") {
            Some(mut r) => {
                let (v, line) = r.take("root").map_err(|_| {
                    Error::Config(format!("{origin}: missing required field seeds.root"))
                })?;
                let root = v.parse().map_err(|_| {
                    r.schema(line, format!("seeds.root: {v:?} is not a 64-bit seed"))
                })?;
                r.finish()?;
                root
            }
            None => {
                return Err(Error::Config(format!(
                    "{origin}: missing required field seeds.root"
                )))
            }
        };

        let out_dir = match reader("output") {
            Some(mut r) => {
                let (dir, _) = r.take("dir")?;
                r.finish()?;
                Some(PathBuf::from(dir))
            }
            None => None,
        };

        Ok(ExperimentConfig {
            population,
            training,
            attack,
            game,
            root,
            out_dir,
        })
    }

    /// Canonical text form: fixed section and key order, shortest
    /// round-trip numbers. Parsing it back yields an equal config.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.population {
            let _ = write!(
                s,
                "[population]\ndim = {}\nclasses = {}\npool_size = {}\nclass_scale = {}\n",
                p.dim, p.classes, p.pool_size, p.class_scale
            );
        }
        if let Some(t) = &self.training {
            let _ = write!(
                s,
                "[training]\nn = {}\nhidden_width = {}\nepochs = {}\nbatch_size = {}\nlearning_rate = {}\n",
                t.n, t.hidden_width, t.epochs, t.batch_size, t.learning_rate
            );
            if let Some(c) = t.clip_norm {
                let _ = write!(s, "clip_norm = {c}\n");
            }
            let _ = write!(s, "weight_init_scale = {}\n", t.weight_init_scale);
        }
        if let Some(a) = &self.attack {
            let kinds: Vec<&str> = a.kinds.iter().map(|k| k.as_str()).collect();
            let alphas: Vec<String> = a.alphas.iter().map(|x| format!("{x}")).collect();
            let _ = write!(
                s,
                "[attack]\nkinds = {}\nalphas = {}\nmethod = {}\nn_shadow = {}\nn_reference = {}\nn_distilled = {}\n",
                kinds.join(","),
                alphas.join(","),
                a.method.as_str(),
                a.n_shadow,
                a.n_reference,
                a.n_distilled
            );
            if let Some(n) = a.n_loo {
                let _ = write!(s, "n_loo = {n}\n");
            }
            let _ = write!(
                s,
                "m_per_class = {}\neval_per_class = {}\n",
                a.m_per_class, a.eval_per_class
            );
        }
        if let Some(g) = &self.game {
            let _ = write!(
                s,
                "[game]\nvariant = {}\ntrials = {}\n",
                g.variant.as_str(),
                g.trials
            );
        }
        let _ = write!(s, "[seeds]\nroot = {}\n", self.root);
        if let Some(dir) = &self.out_dir {
            let _ = write!(s, "[output]\ndir = {}\n", dir.display());
        }
        s
    }

    /// FNV-1a over the canonical form, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Command-line overrides; applied before hashing so outputs state
    /// the settings actually used.
    pub fn apply_overrides(
        &mut self,
        alpha: Option<&str>,
        method: Option<&str>,
        out: Option<&Path>,
    ) -> Result<()> {
        if alpha.is_some() || method.is_some() {
            let attack = self.attack.as_mut().ok_or_else(|| {
                Error::Config("--alpha/--method override needs an [attack] section".into())
            })?;
            if let Some(list) = alpha {
                attack.alphas = parse_alphas("--alpha", list, 1)?;
            }
            if let Some(m) = method {
                attack.method = SmoothingMethod::parse(m)
                    .map_err(|e| Error::Config(format!("--method: {e}")))?;
            }
        }
        if let Some(dir) = out {
            self.out_dir = Some(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn root_seed(&self) -> SeedSpec {
        SeedSpec::new(self.root)
    }

    pub fn population(&self) -> Result<&PopulationSection> {
        self.population
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [population] section".into()))
    }

    pub fn training(&self) -> Result<&TrainingSection> {
        self.training
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [training] section".into()))
    }

    pub fn attack(&self) -> Result<&AttackSection> {
        self.attack
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [attack] section".into()))
    }

    pub fn game(&self) -> Result<&GameSection> {
        self.game
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [game] section".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("config has no [output] section (or --out flag)".into()))
    }

    pub fn train_config(&self, seed: SeedSpec) -> Result<TrainConfig> {
        let t = self.training()?;
        Ok(TrainConfig {
            hidden_width: t.hidden_width,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            clip_norm: t.clip_norm,
            weight_init_scale: t.weight_init_scale,
            seed,
        })
    }
}
