use std::fmt;
use std::str::FromStr;

use crate::scalar::Scalar;
use crate::transform::AffineTransform;

pub const NUM_ACTIONS: usize = 8;

/// Default sequence length used by the policy.
pub const DEFAULT_MAX_STEPS: usize = 40;

const SHIFT_PIXELS: f64 = 4.0;
const SCALE_FACTOR: f64 = 1.2;
const ROTATION_DEG: f64 = 10.0;

/// One of the eight discrete transformations. Names describe what happens to
/// the image content; the integer encoding is the policy's output index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Action {
    TranslateUp4 = 0,
    TranslateDown4 = 1,
    TranslateLeft4 = 2,
    TranslateRight4 = 3,
    ScaleUp1_2 = 4,
    RotateCW10 = 5,
    RotateCCW10 = 6,
    Identity = 7,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::TranslateUp4,
        Action::TranslateDown4,
        Action::TranslateLeft4,
        Action::TranslateRight4,
        Action::ScaleUp1_2,
        Action::RotateCW10,
        Action::RotateCCW10,
        Action::Identity,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::TranslateUp4 => "up4",
            Action::TranslateDown4 => "down4",
            Action::TranslateLeft4 => "left4",
            Action::TranslateRight4 => "right4",
            Action::ScaleUp1_2 => "scale1.2",
            Action::RotateCW10 => "cw10",
            Action::RotateCCW10 => "ccw10",
            Action::Identity => "identity",
        }
    }

    /// Sampling-grid matrix of this action on a square canvas of `canvas_size` pixels.
    ///
    /// Moving content right by 4 px means each output pixel samples 4 px to its
    /// left, hence the negative grid offset. The zoom samples a grid shrunk by
    /// 1/1.2 so content appears 1.2× larger. With y pointing down, the grid
    /// matrix `[[c, s], [-s, c]]` turns content clockwise.
    pub fn to_matrix<T: Scalar>(self, canvas_size: usize) -> AffineTransform<T> {
        assert!(canvas_size > 0, "canvas size must be positive");
        let shift = 2.0 * SHIFT_PIXELS / canvas_size as f64;
        let theta = ROTATION_DEG.to_radians();
        let (s, c) = theta.sin_cos();
        let inv = 1.0 / SCALE_FACTOR;
        let m = match self {
            Action::TranslateUp4 => [[1.0, 0.0, 0.0], [0.0, 1.0, shift]],
            Action::TranslateDown4 => [[1.0, 0.0, 0.0], [0.0, 1.0, -shift]],
            Action::TranslateLeft4 => [[1.0, 0.0, shift], [0.0, 1.0, 0.0]],
            Action::TranslateRight4 => [[1.0, 0.0, -shift], [0.0, 1.0, 0.0]],
            Action::ScaleUp1_2 => [[inv, 0.0, 0.0], [0.0, inv, 0.0]],
            Action::RotateCW10 => [[c, s, 0.0], [-s, c, 0.0]],
            Action::RotateCCW10 => [[c, -s, 0.0], [s, c, 0.0]],
            Action::Identity => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        };
        AffineTransform::from_f64(m)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Ordered list of actions; `f_T ∘ … ∘ f_1` applies them front to back.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ActionSequence {
    actions: Vec<Action>,
}

impl ActionSequence {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn identity(len: usize) -> Self {
        Self { actions: vec![Action::Identity; len] }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, a: Action) {
        self.actions.push(a);
    }

    /// First `t` actions (saturating at the sequence length).
    pub fn prefix(&self, t: usize) -> &[Action] {
        &self.actions[..t.min(self.actions.len())]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.actions.iter().map(|&a| a as u8).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        bytes
            .iter()
            .map(|&b| Action::from_index(b as usize))
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }
}

impl FromIterator<Action> for ActionSequence {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
