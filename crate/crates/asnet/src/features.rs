//! First-layer input features, one block per ground action: the three
//! landmark membership flags (when enabled), the truth values of the
//! action's related propositions in the current state, and whether those
//! propositions appear in the goal. Packed as `[c v g]` per action.

use crate::ground::{FeatureMode, GroundTask};
use crate::heur::{lmcut, RelaxedTask};
use crate::ssp::State;
use std::collections::HashMap;
use std::rc::Rc;

/// Packed per-action feature blocks for one state.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub mode: FeatureMode,
    pub data: Vec<f64>,
    pub offsets: Vec<usize>,
}

/// Per-action block offsets and the total packed length.
pub fn feature_layout(task: &GroundTask, mode: FeatureMode) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(task.action_count());
    let mut len = 0;
    for a in &task.actions {
        offsets.push(len);
        len += mode.input_dim(task.shape.schemas[a.schema].related_count());
    }
    (offsets, len)
}

/// Compute the feature vector at `state`. The goal bits depend only on the
/// task, the truth bits on the state, and the landmark flags on the state
/// through a fresh LM-cut run.
pub fn input_features(
    task: &GroundTask,
    relaxed: &RelaxedTask,
    state: &State,
    mode: FeatureMode,
) -> FeatureSet {
    let (offsets, len) = feature_layout(task, mode);
    let mut data = vec![0.0; len];
    let landmarks = match mode {
        FeatureMode::LmCut => Some(lmcut(relaxed, state)),
        FeatureMode::Plain => None,
    };
    let goal_bit = |p: u32| -> f64 {
        if task.goal.binary_search(&p).is_ok() {
            1.0
        } else {
            0.0
        }
    };
    for (ai, action) in task.actions.iter().enumerate() {
        let m = action.rel.len();
        let mut k = offsets[ai];
        if let Some(lms) = &landmarks {
            let c = lms.flags(ai as u32);
            data[k..k + 3].copy_from_slice(&c);
            k += 3;
        }
        for &p in &action.rel {
            data[k] = if state.get(p) { 1.0 } else { 0.0 };
            k += 1;
        }
        for &p in &action.rel {
            data[k] = goal_bit(p);
            k += 1;
        }
        debug_assert_eq!(k - offsets[ai], mode.input_dim(m));
    }
    FeatureSet { mode, data, offsets }
}

/// Memo table over states; features are pure in (task, state, mode).
pub struct FeatureCache {
    mode: FeatureMode,
    map: HashMap<State, Rc<FeatureSet>>,
}

impl FeatureCache {
    pub fn new(mode: FeatureMode) -> FeatureCache {
        FeatureCache { mode, map: HashMap::new() }
    }

    pub fn get(
        &mut self,
        task: &GroundTask,
        relaxed: &RelaxedTask,
        state: &State,
    ) -> Rc<FeatureSet> {
        if let Some(f) = self.map.get(state) {
            return Rc::clone(f);
        }
        let f = Rc::new(input_features(task, relaxed, state, self.mode));
        self.map.insert(state.clone(), Rc::clone(&f));
        f
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
