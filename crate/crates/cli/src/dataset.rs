//! On-disk datasets: one scene file per sample plus a manifest of
//! `<relative path> <split>` lines. Header comments record the modalities
//! present and the image size.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tride_core::synth::{self, load_scene, save_scene, GenParams, SceneSample};
use tride_core::{Modalities, WeatherLabel};

use crate::config::SplitSizes;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CliError::contract(format!("unknown split '{s}' (train, val, test)")))
    }
}

/// Seed of scene `index` of `split`; distinct across splits and run seeds.
pub fn scene_seed(run_seed: u64, split: Split, index: usize) -> u64 {
    let tag = split as u64 + 1;
    run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tag << 40) ^ index as u64
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub modalities: Modalities,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<(PathBuf, Split)>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let bad = |line: usize, msg: &str| CliError::contract(format!("{}:{}: {msg}", path.display(), line + 1));
        let mut modalities = None;
        let mut size = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let mut kv = meta.split_whitespace();
                match (kv.next(), kv.next()) {
                    (Some("modalities"), Some(m)) => {
                        modalities = Some(m.parse::<Modalities>().map_err(|e| bad(i, &e.to_string()))?)
                    }
                    (Some("size"), Some(s)) => {
                        let (h, w) = s.split_once('x').ok_or_else(|| bad(i, "size must be HxW"))?;
                        let parse = |v: &str| v.parse::<usize>().map_err(|_| bad(i, "size must be HxW"));
                        size = Some((parse(h)?, parse(w)?));
                    }
                    _ => {}
                }
                continue;
            }
            let (file, split) = line.rsplit_once(' ').ok_or_else(|| bad(i, "expected '<path> <split>'"))?;
            entries.push((PathBuf::from(file.trim()), split.parse()?));
        }
        let modalities = modalities.ok_or_else(|| bad(0, "missing '# modalities' header"))?;
        let (height, width) = size.ok_or_else(|| bad(0, "missing '# size' header"))?;
        Ok(Dataset {
            root: root.to_path_buf(),
            modalities,
            height,
            width,
            entries,
        })
    }

    pub fn paths(&self, split: Split) -> Vec<PathBuf> {
        self.entries
            .iter()
            .filter(|(_, s)| *s == split)
            .map(|(p, _)| self.root.join(p))
            .collect()
    }

    pub fn load(&self, split: Split) -> Result<Vec<SceneSample>> {
        let scenes = self
            .paths(split)
            .iter()
            .map(|p| load_scene(p))
            .collect::<tride_core::Result<Vec<_>>>()?;
        if scenes.is_empty() {
            return Err(CliError::contract(format!("empty split '{split}' in {}", self.root.display())));
        }
        for s in &scenes {
            if (s.height, s.width) != (self.height, self.width) {
                return Err(CliError::contract(format!(
                    "scene of size {}x{} in a {}x{} dataset",
                    s.height, s.width, self.height, self.width
                )));
            }
        }
        Ok(scenes)
    }
}

/// Writes a synthetic dataset to `root`. Output depends only on
/// (`run_seed`, `params`, `sizes`).
pub fn generate(root: &Path, run_seed: u64, params: &GenParams, sizes: &SplitSizes) -> Result<Dataset> {
    params.validate()?;
    for (split, n) in [(Split::Train, sizes.n_train), (Split::Val, sizes.n_val), (Split::Test, sizes.n_test)] {
        if n == 0 {
            return Err(CliError::contract(format!("empty split '{split}': requested 0 scenes")));
        }
    }
    let mut entries = Vec::new();
    for (split, n) in [(Split::Train, sizes.n_train), (Split::Val, sizes.n_val), (Split::Test, sizes.n_test)] {
        let dir = root.join(split.name());
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for i in 0..n {
            let seed = scene_seed(run_seed, split, i);
            let scenes: Vec<(String, SceneSample)> = if split == Split::Test && sizes.paired_test_weather {
                WeatherLabel::ALL
                    .iter()
                    .map(|&w| Ok((format!("{i:06}_{}.scn", w.name()), synth::generate_scene_with_weather(seed, params, w)?)))
                    .collect::<tride_core::Result<_>>()?
            } else {
                vec![(format!("{i:06}.scn"), synth::generate_scene(seed, params)?)]
            };
            for (name, scene) in scenes {
                let rel = PathBuf::from(split.name()).join(name);
                save_scene(&scene, &root.join(&rel))?;
                entries.push((rel, split));
            }
        }
    }
    let mut manifest = format!(
        "# tride dataset\n# modalities {}\n# size {}x{}\n",
        Modalities::IRT,
        params.height,
        params.width
    );
    for (rel, split) in &entries {
        manifest.push_str(&format!("{} {split}\n", rel.display()));
    }
    let path = root.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| CliError::io(&path, e))?;
    Ok(Dataset {
        root: root.to_path_buf(),
        modalities: Modalities::IRT,
        height: params.height,
        width: params.width,
        entries,
    })
}
