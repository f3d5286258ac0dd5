use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{env_reset, env_step, scripted_expert, EnvSpec};
use crate::buffers::{DemoEpisode, DemoFile};
use crate::error::{Error, Result};

/// Rolls out the scripted expert and keeps the first `n_episodes` successful episodes.
///
/// Each kept episode lists every visited state, including the terminal one.
pub fn generate_demos(spec: &EnvSpec, n_episodes: usize, seed: u64, include_actions: bool) -> Result<DemoFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 10 * n_episodes.max(1);
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut attempts = 0;
    while episodes.len() < n_episodes {
        if attempts == max_attempts {
            return Err(Error::Generation(format!(
                "{} expert reached only {} successes in {max_attempts} attempts",
                spec.kind,
                episodes.len()
            )));
        }
        attempts += 1;
        let mut state = env_reset(spec, rng.gen());
        let mut states = vec![state.flat()];
        let mut actions = Vec::new();
        loop {
            let action = scripted_expert(spec, &state);
            let out = env_step(spec, &state, &action);
            states.push(out.state.flat());
            actions.push(action);
            if out.done {
                if out.success {
                    episodes.push(DemoEpisode {
                        id: episodes.len() as u64,
                        states,
                        actions: if include_actions { actions } else { Vec::new() },
                    });
                }
                break;
            }
            state = out.state;
        }
    }
    Ok(DemoFile {
        state_dim: spec.state_dim(),
        action_dim: include_actions.then_some(spec.action_dim),
        episodes,
    })
}

/// [`generate_demos`] followed by a write to `out_path`.
pub fn write_demos(spec: &EnvSpec, n_episodes: usize, seed: u64, include_actions: bool, out_path: &Path) -> Result<DemoFile> {
    let file = generate_demos(spec, n_episodes, seed, include_actions)?;
    file.save(out_path)?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::expert_load;
    use crate::envs::EnvKind;

    #[test]
    fn state_only_file_has_no_actions() {
        let spec = EnvSpec::new(EnvKind::PickPlace2d);
        let f = generate_demos(&spec, 100, 0, false).unwrap();
        assert_eq!(f.episodes.len(), 100);
        assert!(f.episodes.iter().all(|e| e.actions.is_empty()));
        assert!(!f.to_text().contains("action"));
    }

    #[test]
    fn action_file_pairs_every_transition() {
        let spec = EnvSpec::new(EnvKind::Handover2d);
        let f = generate_demos(&spec, 5, 1, true).unwrap();
        for e in &f.episodes {
            assert_eq!(e.actions.len(), e.states.len() - 1);
            assert!(e.actions.iter().all(|a| a.len() == spec.action_dim));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = EnvSpec::new(EnvKind::Reach2d);
        let a = generate_demos(&spec, 10, 7, true).unwrap().to_text();
        let b = generate_demos(&spec, 10, 7, true).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_through_expert_buffer() {
        let spec = EnvSpec::new(EnvKind::PickPlace2d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.txt");
        let f = write_demos(&spec, 20, 3, false, &path).unwrap();
        let buf = expert_load(&path).unwrap();
        assert_eq!(buf.len(), f.pair_count());
        let loaded: Vec<Vec<f64>> = buf.episode_states().flat_map(|(_, s)| s.into_iter().map(<[f64]>::to_vec)).collect();
        let original: Vec<Vec<f64>> = f.episodes.iter().flat_map(|e| e.states.clone()).collect();
        assert_eq!(loaded, original);
    }
}
