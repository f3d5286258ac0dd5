//! Line-oriented demonstration files.
//!
//! ```text
//! ssil-demo v1 state_dim=<d>[ action_dim=<a>]
//! episode <id> len=<n>
//! <d floats>
//! action <a floats>        # action-labeled files only, after every non-final state
//! <d floats>
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{join, parse_floats};

const MAGIC: &str = "ssil-demo v1";

#[derive(Clone, Debug, PartialEq)]
pub struct DemoEpisode {
    pub id: u64,
    pub states: Vec<Vec<f64>>,
    /// Empty for state-only files; otherwise `states.len() - 1` entries.
    pub actions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoFile {
    pub state_dim: usize,
    pub action_dim: Option<usize>,
    pub episodes: Vec<DemoEpisode>,
}

impl DemoFile {
    pub fn pair_count(&self) -> usize {
        self.episodes.iter().map(|e| e.states.len().saturating_sub(1)).sum()
    }

    pub fn has_actions(&self) -> bool {
        self.action_dim.is_some()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write!(out, "{MAGIC} state_dim={}", self.state_dim).unwrap();
        if let Some(a) = self.action_dim {
            write!(out, " action_dim={a}").unwrap();
        }
        out.push('\n');
        for ep in &self.episodes {
            writeln!(out, "episode {} len={}", ep.id, ep.states.len()).unwrap();
            for (i, s) in ep.states.iter().enumerate() {
                writeln!(out, "{}", join(s.iter())).unwrap();
                if self.action_dim.is_some() && i + 1 < ep.states.len() {
                    writeln!(out, "action {}", join(ep.actions[i].iter())).unwrap();
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DemoFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<DemoFile> {
        let fail = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());

        let (n, header) = lines.next().ok_or_else(|| fail(1, "empty demonstration file".into()))?;
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| fail(n, format!("expected header `{MAGIC} state_dim=<d>`")))?;
        let mut state_dim = None;
        let mut action_dim = None;
        for field in rest.split_whitespace() {
            let (key, val) = field.split_once('=').ok_or_else(|| fail(n, format!("bad header field `{field}`")))?;
            let val: usize = val.parse().map_err(|e| fail(n, format!("bad value for {key}: {e}")))?;
            match key {
                "state_dim" => state_dim = Some(val),
                "action_dim" => action_dim = Some(val),
                _ => return Err(fail(n, format!("unknown header field `{key}`"))),
            }
        }
        let state_dim = state_dim.filter(|&d| d > 0).ok_or_else(|| fail(n, "missing or zero state_dim".into()))?;
        if action_dim == Some(0) {
            return Err(fail(n, "action_dim must be positive".into()));
        }

        let mut episodes = Vec::new();
        while let Some((n, line)) = lines.next() {
            let mut parts = line.split_whitespace();
            let (Some("episode"), Some(id), Some(len), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(fail(n, format!("expected `episode <id> len=<n>`, found `{line}`")));
            };
            let id: u64 = id.parse().map_err(|e| fail(n, format!("bad episode id: {e}")))?;
            let len: usize = len
                .strip_prefix("len=")
                .ok_or_else(|| fail(n, "expected `len=<n>`".into()))?
                .parse()
                .map_err(|e| fail(n, format!("bad episode length: {e}")))?;
            if len == 0 {
                return Err(fail(n, format!("episode {id} is empty")));
            }
            let mut states = Vec::with_capacity(len);
            let mut actions = Vec::new();
            for i in 0..len {
                let (n, row) = lines
                    .next()
                    .ok_or_else(|| fail(n, format!("episode {id} ends after {i} of {len} states")))?;
                states.push(parse_floats(row, state_dim).map_err(|m| fail(n, format!("state row: {m}")))?);
                if let (Some(ad), true) = (action_dim, i + 1 < len) {
                    let (n, row) = lines.next().ok_or_else(|| fail(n, "missing action line".into()))?;
                    let vals = row
                        .strip_prefix("action")
                        .ok_or_else(|| fail(n, format!("expected an action line, found `{row}`")))?;
                    actions.push(parse_floats(vals, ad).map_err(|m| fail(n, format!("action row: {m}")))?);
                }
            }
            episodes.push(DemoEpisode { id, states, actions });
        }
        Ok(DemoFile { state_dim, action_dim, episodes })
    }
}

/// (state, action) pairs from an action-labeled demonstration file; used only by
/// the behaviour-cloning baseline.
#[derive(Clone, Debug)]
pub struct ActionDemos {
    states: Array2<f64>,
    actions: Array2<f64>,
}

impl ActionDemos {
    pub fn from_file(file: &DemoFile) -> Result<Self> {
        let ad = file
            .action_dim
            .ok_or_else(|| Error::Config("demonstration file carries no action labels".into()))?;
        let mut s = Vec::new();
        let mut a = Vec::new();
        for ep in &file.episodes {
            for (state, action) in ep.states.iter().zip(&ep.actions) {
                s.extend_from_slice(state);
                a.extend_from_slice(action);
            }
        }
        let n = a.len() / ad;
        if n == 0 {
            return Err(Error::Config("action-labeled demonstrations are empty".into()));
        }
        Ok(ActionDemos {
            states: Array2::from_shape_vec((n, file.state_dim), s).expect("sized"),
            actions: Array2::from_shape_vec((n, ad), a).expect("sized"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&DemoFile::load(path)?)
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..self.len())).collect();
        (self.states.select(ndarray::Axis(0), &idx), self.actions.select(ndarray::Axis(0), &idx))
    }
}
