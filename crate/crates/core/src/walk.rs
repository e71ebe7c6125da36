//! The k-choice random walk on the complete graph with self-loops, and
//! chronological loop-erasure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::step::StepFunction;

/// How forced collisions are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Maximal,
    Uniform,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Maximal => "maximal",
            Variant::Uniform => "uniform",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximal" | "max" => Ok(Variant::Maximal),
            "uniform" | "unif" => Ok(Variant::Uniform),
            _ => invalid(format!("unknown variant '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceRule {
    pub variant: Variant,
    pub k: usize,
}

impl ChoiceRule {
    pub fn new(variant: Variant, k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("k must be >= 1");
        }
        Ok(Self { variant, k })
    }

    pub fn maximal(k: usize) -> Result<Self> {
        Self::new(Variant::Maximal, k)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(Variant::Uniform, k)
    }
}

/// Which part of the past the walk tries to avoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvoidMode {
    /// Every vertex the walk has visited.
    FullPast,
    /// Only the vertices of the current loop-erasure.
    LoopErasure,
}

const NONE: u32 = 0;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mutable walk state on `K_n`.
///
/// Per-vertex arrays store `index + 1` so that zero means "absent"; this
/// keeps allocation cheap and lets [`ChoiceWalkState::reset`] clear only the
/// vertices a walk touched.
#[derive(Debug, Clone)]
pub struct ChoiceWalkState {
    n: usize,
    avoid_mode: AvoidMode,
    trajectory: Vec<u32>,
    last_occurrence: Vec<u32>,
    entry_rank: Vec<u32>,
    visited: u32,
    le_pos: Vec<u32>,
    le: Vec<u32>,
    le_indices: Vec<usize>,
    terminal: Vec<u64>,
    terminal_list: Vec<u32>,
    terminal_salt: Option<u64>,
}

impl ChoiceWalkState {
    pub fn new(n: usize, avoid_mode: AvoidMode, start: u32) -> Result<Self> {
        if n == 0 {
            return invalid("n must be >= 1");
        }
        if n > u32::MAX as usize - 1 {
            return invalid(format!("n = {n} exceeds the supported vertex range"));
        }
        if start as usize >= n {
            return invalid(format!("start vertex {start} out of range for n = {n}"));
        }
        let mut s = Self {
            n,
            avoid_mode,
            trajectory: Vec::new(),
            last_occurrence: vec![NONE; n],
            entry_rank: vec![NONE; n],
            visited: 0,
            le_pos: vec![NONE; n],
            le: Vec::new(),
            le_indices: Vec::new(),
            terminal: vec![0; n],
            terminal_list: Vec::new(),
            terminal_salt: None,
        };
        s.advance(start);
        Ok(s)
    }

    /// Restarts the walk at `start`, keeping the terminal set.
    pub fn reset(&mut self, start: u32) {
        assert!((start as usize) < self.n, "start vertex out of range");
        for &v in &self.trajectory {
            let v = v as usize;
            self.last_occurrence[v] = NONE;
            self.entry_rank[v] = NONE;
            self.le_pos[v] = NONE;
        }
        self.trajectory.clear();
        self.le.clear();
        self.le_indices.clear();
        self.visited = 0;
        self.advance(start);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn avoid_mode(&self) -> AvoidMode {
        self.avoid_mode
    }

    pub fn current(&self) -> u32 {
        *self.trajectory.last().expect("trajectory is never empty")
    }

    pub fn trajectory(&self) -> &[u32] {
        &self.trajectory
    }

    /// Number of steps taken so far.
    pub fn time(&self) -> usize {
        self.trajectory.len() - 1
    }

    /// Latest trajectory index of `v`, if visited.
    pub fn last_occurrence(&self, v: u32) -> Option<usize> {
        match self.last_occurrence[v as usize] {
            NONE => None,
            i => Some(i as usize - 1),
        }
    }

    /// Position of `v` in the order of first visits, if visited.
    pub fn entry_rank(&self, v: u32) -> Option<usize> {
        match self.entry_rank[v as usize] {
            NONE => None,
            i => Some(i as usize - 1),
        }
    }

    pub fn visited_count(&self) -> usize {
        self.visited as usize
    }

    pub fn is_visited(&self, v: u32) -> bool {
        self.entry_rank[v as usize] != NONE
    }

    /// Current loop-erasure of the trajectory.
    pub fn loop_erasure(&self) -> &[u32] {
        &self.le
    }

    /// Trajectory indices at which the loop-erasure vertices sit.
    pub fn le_indices(&self) -> &[usize] {
        &self.le_indices
    }

    pub fn le_len(&self) -> usize {
        self.le.len()
    }

    /// Position of `v` on the loop-erasure, if present.
    pub fn le_position(&self, v: u32) -> Option<usize> {
        match self.le_pos[v as usize] {
            NONE => None,
            i => Some(i as usize - 1),
        }
    }

    /// Rank of `v` inside the avoid set: first-visit order for the full past,
    /// position for the loop-erasure. Larger means entered more recently.
    #[inline]
    pub fn avoid_rank(&self, v: u32) -> Option<u32> {
        let r = match self.avoid_mode {
            AvoidMode::FullPast => self.entry_rank[v as usize],
            AvoidMode::LoopErasure => self.le_pos[v as usize],
        };
        (r != NONE).then(|| r - 1)
    }

    #[inline]
    pub fn in_avoid(&self, v: u32) -> bool {
        self.avoid_rank(v).is_some()
    }

    #[inline]
    pub fn is_terminal(&self, v: u32) -> bool {
        self.terminal[v as usize] != 0
    }

    pub fn terminal_vertices(&self) -> &[u32] {
        &self.terminal_list
    }

    /// Adds `v` to the terminal set with priority `rank` (larger is preferred).
    pub fn set_terminal(&mut self, v: u32, rank: u64) {
        let slot = &mut self.terminal[v as usize];
        if *slot == 0 {
            self.terminal_list.push(v);
        }
        *slot = rank.max(1);
    }

    pub fn terminal_rank(&self, v: u32) -> Option<u64> {
        match self.terminal[v as usize] {
            0 => None,
            r => Some(r),
        }
    }

    /// Replaces the stored terminal priorities by i.i.d. uniform ones derived
    /// from `salt`; `None` restores the stored ranks.
    pub fn set_terminal_salt(&mut self, salt: Option<u64>) {
        self.terminal_salt = salt;
    }

    pub fn clear_terminal(&mut self) {
        for &v in &self.terminal_list {
            self.terminal[v as usize] = 0;
        }
        self.terminal_list.clear();
        self.terminal_salt = None;
    }

    #[inline]
    fn terminal_key(&self, v: u32) -> (u64, u32) {
        match self.terminal_salt {
            Some(salt) => (mix(salt ^ mix(v as u64)), v),
            None => (self.terminal[v as usize], v),
        }
    }

    /// Moves the walk to `v`, updating occurrences and the loop-erasure.
    pub fn advance(&mut self, v: u32) {
        assert!((v as usize) < self.n, "vertex out of range");
        let idx = self.trajectory.len();
        self.trajectory.push(v);
        let vi = v as usize;
        self.last_occurrence[vi] = idx as u32 + 1;
        if self.entry_rank[vi] == NONE {
            self.visited += 1;
            self.entry_rank[vi] = self.visited;
        }
        match self.le_pos[vi] {
            NONE => {
                self.le.push(v);
                self.le_indices.push(idx);
                self.le_pos[vi] = self.le.len() as u32;
            }
            p => {
                let keep = p as usize;
                for w in self.le.drain(keep..) {
                    self.le_pos[w as usize] = NONE;
                }
                self.le_indices.truncate(keep);
            }
        }
    }

    /// Draws the k choices for the next step and applies the rule.
    pub fn step(&mut self, rule: &ChoiceRule, rng: &mut RngStream, buf: &mut Vec<u32>) -> u32 {
        fill_choices(self.n, rule.k, rng, buf);
        let v = choose(self, rule.variant, buf);
        self.advance(v);
        v
    }
}

fn fill_choices(n: usize, k: usize, rng: &mut RngStream, buf: &mut Vec<u32>) {
    buf.clear();
    buf.extend((0..k).map(|_| rng.vertex(n) as u32));
}

/// Draws k independent vertices uniformly from all n vertices.
pub fn sample_choices(state: &ChoiceWalkState, rule: &ChoiceRule, rng: &mut RngStream) -> Vec<u32> {
    let mut buf = Vec::with_capacity(rule.k);
    fill_choices(state.n, rule.k, rng, &mut buf);
    buf
}

#[inline]
fn choose(state: &ChoiceWalkState, variant: Variant, choices: &[u32]) -> u32 {
    // first choice outside Ter and Av
    for &c in choices {
        if !state.is_terminal(c) && !state.in_avoid(c) {
            return c;
        }
    }
    // some choice outside Ter: a collision with the avoid set
    match variant {
        Variant::Maximal => {
            let mut best: Option<(u32, u32)> = None;
            for &c in choices {
                if state.is_terminal(c) {
                    continue;
                }
                let r = state.avoid_rank(c).expect("non-terminal choice lies in the avoid set");
                if best.is_none_or(|(br, _)| r > br) {
                    best = Some((r, c));
                }
            }
            if let Some((_, c)) = best {
                return c;
            }
        }
        Variant::Uniform => {
            if let Some(&c) = choices.iter().find(|&&c| !state.is_terminal(c)) {
                return c;
            }
        }
    }
    // every choice is terminal
    match variant {
        Variant::Maximal => *choices
            .iter()
            .max_by_key(|&&c| state.terminal_key(c))
            .expect("choices are non-empty"),
        Variant::Uniform => choices[0],
    }
}

/// Resolves one step of the choice walk given the drawn choices.
///
/// The first choice outside both the terminal and avoid sets wins. Otherwise,
/// if some choice is non-terminal, the maximal rule takes the one that entered
/// the avoid set most recently and the uniform rule takes the first non-terminal
/// choice. If every choice is terminal, the maximal rule takes the highest
/// terminal priority and the uniform rule takes the first choice.
pub fn choice_step(state: &ChoiceWalkState, rule: &ChoiceRule, choices: &[u32]) -> Result<u32> {
    if choices.is_empty() {
        return invalid("choices must be non-empty");
    }
    if let Some(&c) = choices.iter().find(|&&c| c as usize >= state.n) {
        return invalid(format!("choice {c} out of range for n = {}", state.n));
    }
    Ok(choose(state, rule.variant, choices))
}

/// Chronological loop-erasure.
pub fn loop_erase(path: &[u32]) -> Result<Vec<u32>> {
    if path.is_empty() {
        return invalid("path must be non-empty");
    }
    let mut last = std::collections::HashMap::new();
    for (t, &v) in path.iter().enumerate() {
        last.insert(v, t);
    }
    let mut out = Vec::new();
    let mut lambda = 0;
    while lambda < path.len() {
        let v = path[lambda];
        out.push(v);
        lambda = last[&v] + 1;
    }
    Ok(out)
}

/// Runs the walk avoiding its own loop-erasure with no terminal set and
/// records `|LE(X[0, m])|` for `m = 0..=horizon`.
pub fn run_le_length_process(n: usize, rule: &ChoiceRule, horizon: usize, rng: &mut RngStream) -> Result<StepFunction> {
    if horizon == 0 {
        return invalid("horizon must be >= 1");
    }
    let mut state = ChoiceWalkState::new(n, AvoidMode::LoopErasure, 0)?;
    let mut buf = Vec::with_capacity(rule.k);
    let mut times = vec![0.0];
    let mut values = vec![1.0];
    for m in 1..=horizon {
        state.step(rule, rng, &mut buf);
        let z = state.le_len() as f64;
        if z != *values.last().unwrap() {
            times.push(m as f64);
            values.push(z);
        }
    }
    StepFunction::new(times, values, 0.0)
}

/// Reusable buffers for repeated loop-erased length runs on the same `K_n`.
#[derive(Debug, Clone)]
pub struct LeLengthSampler {
    state: ChoiceWalkState,
    buf: Vec<u32>,
    rule: ChoiceRule,
}

impl LeLengthSampler {
    pub fn new(n: usize, rule: ChoiceRule) -> Result<Self> {
        Ok(Self { state: ChoiceWalkState::new(n, AvoidMode::LoopErasure, 0)?, buf: Vec::with_capacity(rule.k), rule })
    }

    /// One fresh run, returning `Z_m` at each of the (sorted) `times`.
    pub fn sample_at(&mut self, times: &[usize], rng: &mut RngStream) -> Vec<usize> {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        self.state.reset(0);
        let mut out = Vec::with_capacity(times.len());
        let mut m = 0;
        for &t in times {
            while m < t {
                self.state.step(&self.rule, rng, &mut self.buf);
                m += 1;
            }
            out.push(self.state.le_len());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_from(n: usize, mode: AvoidMode, path: &[u32]) -> ChoiceWalkState {
        let mut s = ChoiceWalkState::new(n, mode, path[0]).unwrap();
        for &v in &path[1..] {
            s.advance(v);
        }
        s
    }

    #[test]
    fn n_one_always_vertex_zero() {
        let s = ChoiceWalkState::new(1, AvoidMode::FullPast, 0).unwrap();
        let rule = ChoiceRule::maximal(3).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_choices(&s, &rule, &mut rng), vec![0, 0, 0]);
        }
    }

    #[test]
    fn single_choice_frequency() {
        let s = ChoiceWalkState::new(10, AvoidMode::FullPast, 0).unwrap();
        let rule = ChoiceRule::maximal(1).unwrap();
        let mut rng = RngStream::new(2, 0);
        let draws = 100_000;
        let hits = (0..draws).filter(|_| sample_choices(&s, &rule, &mut rng)[0] == 7).count();
        let p = hits as f64 / draws as f64;
        let sd = (0.1 * 0.9 / draws as f64).sqrt();
        assert!((p - 0.1).abs() < 3.0 * sd, "p = {p}");
    }

    #[test]
    fn triple_draws_exchangeable() {
        // on n = 2, the ordered patterns with one 0 and two 1s are equally likely
        let s = ChoiceWalkState::new(2, AvoidMode::FullPast, 0).unwrap();
        let rule = ChoiceRule::maximal(3).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut counts = [0usize; 3];
        let draws = 80_000;
        for _ in 0..draws {
            let c = sample_choices(&s, &rule, &mut rng);
            match (c[0], c[1], c[2]) {
                (0, 1, 1) => counts[0] += 1,
                (1, 0, 1) => counts[1] += 1,
                (1, 1, 0) => counts[2] += 1,
                _ => {}
            }
        }
        let p = 1.0 / 8.0;
        let sd = (p * (1.0 - p) * draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 - p * draws as f64).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn fresh_choice_wins() {
        let s = state_from(10, AvoidMode::FullPast, &[0, 1, 2]);
        let rule = ChoiceRule::maximal(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[5, 1, 2]).unwrap(), 5);
        assert_eq!(choice_step(&s, &rule, &[1, 2, 5]).unwrap(), 5);
        let rule = ChoiceRule::uniform(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[1, 6, 5]).unwrap(), 6);
    }

    #[test]
    fn maximal_picks_latest_entry() {
        // a, b, c, d = 0, 1, 2, 3
        let s = state_from(4, AvoidMode::FullPast, &[0, 1, 2, 3]);
        let rule = ChoiceRule::maximal(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[1, 3, 0]).unwrap(), 3);
        let rule = ChoiceRule::uniform(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[1, 3, 0]).unwrap(), 1);
    }

    #[test]
    fn full_past_ranks_by_first_entry() {
        // revisiting 0 does not move it ahead of 1 in the avoid order
        let s = state_from(5, AvoidMode::FullPast, &[0, 1, 0]);
        let rule = ChoiceRule::maximal(2).unwrap();
        assert_eq!(choice_step(&s, &rule, &[0, 1]).unwrap(), 1);
        assert_eq!(s.last_occurrence(0), Some(2));
        assert_eq!(s.last_occurrence(1), Some(1));
    }

    #[test]
    fn loop_erasure_ranks_by_position() {
        let s = state_from(6, AvoidMode::LoopErasure, &[0, 1, 2, 1, 3]);
        assert_eq!(s.loop_erasure(), &[0, 1, 3]);
        assert!(!s.in_avoid(2));
        let rule = ChoiceRule::maximal(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[0, 1, 3]).unwrap(), 3);
        assert_eq!(choice_step(&s, &rule, &[1, 0]).unwrap(), 1);
        // 2 was erased, so it counts as fresh
        assert_eq!(choice_step(&s, &rule, &[1, 2]).unwrap(), 2);
    }

    #[test]
    fn terminal_ranking() {
        let mut s = ChoiceWalkState::new(10, AvoidMode::LoopErasure, 0).unwrap();
        s.set_terminal(4, 2);
        s.set_terminal(5, 7);
        s.set_terminal(6, 5);
        let rule = ChoiceRule::maximal(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[4, 5, 6]).unwrap(), 5);
        // a non-terminal avoid vertex beats terminal ones
        assert_eq!(choice_step(&s, &rule, &[4, 0, 6]).unwrap(), 0);
        let rule = ChoiceRule::uniform(3).unwrap();
        assert_eq!(choice_step(&s, &rule, &[4, 5, 6]).unwrap(), 4);
        s.clear_terminal();
        assert!(!s.is_terminal(5));
    }

    #[test]
    fn salted_terminal_order_is_uniform() {
        let mut s = ChoiceWalkState::new(5, AvoidMode::LoopErasure, 0).unwrap();
        for v in 1..4 {
            s.set_terminal(v, v as u64);
        }
        let rule = ChoiceRule::maximal(3).unwrap();
        let mut rng = RngStream::new(9, 0);
        let mut counts = [0usize; 3];
        let reps = 30_000;
        for _ in 0..reps {
            s.set_terminal_salt(Some(rand::RngCore::next_u64(&mut rng)));
            counts[choice_step(&s, &rule, &[1, 2, 3]).unwrap() as usize - 1] += 1;
        }
        let sd = (reps as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - reps as f64 / 3.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn empty_choices_rejected() {
        let s = ChoiceWalkState::new(3, AvoidMode::FullPast, 0).unwrap();
        let rule = ChoiceRule::maximal(2).unwrap();
        assert!(choice_step(&s, &rule, &[]).is_err());
        assert!(choice_step(&s, &rule, &[3]).is_err());
        assert!(ChoiceRule::maximal(0).is_err());
    }

    #[test]
    fn loop_erase_examples() {
        assert_eq!(loop_erase(&[0]).unwrap(), vec![0]);
        assert_eq!(loop_erase(&[0, 1, 0, 2]).unwrap(), vec![0, 2]);
        assert_eq!(loop_erase(&[0, 1, 2, 1, 3]).unwrap(), vec![0, 1, 3]);
        assert!(loop_erase(&[]).is_err());
    }

    #[test]
    fn le_indices_are_lambda_times() {
        let s = state_from(6, AvoidMode::LoopErasure, &[0, 1, 2, 1, 3]);
        assert_eq!(s.le_indices(), &[0, 1, 4]);
    }

    #[test]
    fn le_process_basic_properties() {
        let rule = ChoiceRule::maximal(2).unwrap();
        for seed in 0..50 {
            let f = run_le_length_process(30, &rule, 100, &mut RngStream::new(seed, 0)).unwrap();
            assert_eq!(f.eval(0.0).unwrap(), 1.0);
            for m in 0..=100 {
                let z = f.eval(m as f64).unwrap();
                assert!(z <= m as f64 + 1.0 && z >= 1.0);
            }
        }
        assert!(run_le_length_process(30, &rule, 0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn le_extension_probability() {
        // P(Z grows | Z = l) = 1 - (l/n)^k, n = 100, k = 2
        let n = 100;
        let rule = ChoiceRule::maximal(2).unwrap();
        let mut trials = vec![0usize; n + 1];
        let mut grows = vec![0usize; n + 1];
        let mut state = ChoiceWalkState::new(n, AvoidMode::LoopErasure, 0).unwrap();
        let mut buf = Vec::new();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..200 {
            state.reset(0);
            for _ in 0..300 {
                let l = state.le_len();
                state.step(&rule, &mut rng, &mut buf);
                trials[l] += 1;
                if state.le_len() == l + 1 {
                    grows[l] += 1;
                }
            }
        }
        let mut checked = 0;
        for l in 1..=n {
            if trials[l] < 500 {
                continue;
            }
            let p = 1.0 - (l as f64 / n as f64).powi(2);
            let sd = (p * (1.0 - p) / trials[l] as f64).sqrt();
            let phat = grows[l] as f64 / trials[l] as f64;
            assert!((phat - p).abs() < 4.0 * sd + 1e-12, "l = {l}: {phat} vs {p}");
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn k1_steps_uniform() {
        // with k = 1 the walk is simple random walk with self-loops
        let n = 6;
        let mut state = ChoiceWalkState::new(n, AvoidMode::FullPast, 0).unwrap();
        let rule = ChoiceRule::maximal(1).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut buf = Vec::new();
        let mut counts = vec![0usize; n];
        let steps = 60_000;
        for _ in 0..steps {
            counts[state.step(&rule, &mut rng, &mut buf) as usize] += 1;
        }
        let expected = steps as f64 / n as f64;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square with 5 df: mean 5, sd sqrt(10)
        assert!(chi < 5.0 + 3.0 * 10f64.sqrt(), "chi = {chi}");
    }

    #[test]
    fn maximal_jump_target_law() {
        // collision from LE length l lands on position j+1 w.p. ((j+1)^k - j^k)/l^k
        let n = 30;
        let k = 2;
        let rule = ChoiceRule::maximal(k).unwrap();
        let mut rng = RngStream::new(6, 0);
        let mut state = ChoiceWalkState::new(n, AvoidMode::LoopErasure, 0).unwrap();
        let mut buf = Vec::new();
        let mut counts = vec![vec![0usize; 11]; 11];
        for _ in 0..40_000 {
            state.reset(0);
            loop {
                let l = state.le_len();
                fill_choices(n, k, &mut rng, &mut buf);
                let v = choose(&state, rule.variant, &buf);
                if let Some(p) = state.le_position(v) {
                    if l <= 10 {
                        counts[l][p] += 1;
                    }
                    break;
                }
                state.advance(v);
            }
        }
        for l in 2..=10 {
            let total: usize = counts[l].iter().sum();
            if total < 200 {
                continue;
            }
            let mut chi = 0.0;
            for j in 0..l {
                let p = (((j + 1) as f64).powi(k as i32) - (j as f64).powi(k as i32)) / (l as f64).powi(k as i32);
                let e = p * total as f64;
                chi += (counts[l][j] as f64 - e).powi(2) / e;
            }
            let df = (l - 1) as f64;
            assert!(chi < df + 4.0 * (2.0 * df).sqrt(), "l = {l}: chi = {chi}");
        }
    }

    #[test]
    fn sampler_reuse_matches_fresh_runs() {
        let rule = ChoiceRule::maximal(2).unwrap();
        let mut sampler = LeLengthSampler::new(50, rule).unwrap();
        let times = [0, 3, 10, 40];
        for r in 0..20 {
            let a = sampler.sample_at(&times, &mut RngStream::new(8, r));
            let f = run_le_length_process(50, &rule, 40, &mut RngStream::new(8, r)).unwrap();
            let b: Vec<usize> = times.iter().map(|&t| f.eval(t as f64).unwrap() as usize).collect();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn incremental_le_matches_scratch(n in 1usize..12, path in proptest::collection::vec(0u32..12, 1..200)) {
            let path: Vec<u32> = path.into_iter().map(|v| v % n as u32).collect();
            let mut s = ChoiceWalkState::new(n, AvoidMode::LoopErasure, path[0]).unwrap();
            for t in 1..path.len() {
                s.advance(path[t]);
                let scratch = loop_erase(&path[..=t]).unwrap();
                prop_assert_eq!(s.loop_erasure(), &scratch[..]);
                for (i, &v) in scratch.iter().enumerate() {
                    prop_assert_eq!(s.le_position(v), Some(i));
                }
                let last = path[..=t].iter().rposition(|&w| w == path[t]).unwrap();
                prop_assert_eq!(s.last_occurrence(path[t]), Some(last));
            }
        }

        #[test]
        fn forced_collisions_are_sound(seed in 0u64..1000, k in 1usize..4, n in 2usize..20) {
            let rule = ChoiceRule::maximal(k).unwrap();
            let mut rng = RngStream::new(seed, 0);
            let mut s = ChoiceWalkState::new(n, AvoidMode::FullPast, 0).unwrap();
            for _ in 0..50 {
                let ch = sample_choices(&s, &rule, &mut rng);
                let v = choice_step(&s, &rule, &ch).unwrap();
                if s.in_avoid(v) {
                    prop_assert!(ch.iter().all(|&c| s.in_avoid(c)));
                    let best = ch.iter().map(|&c| s.avoid_rank(c).unwrap()).max().unwrap();
                    prop_assert_eq!(s.avoid_rank(v).unwrap(), best);
                }
                s.advance(v);
            }
        }
    }
}
