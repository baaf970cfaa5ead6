//! States, actions, and norms.
//!
//! States live in a finite-dimensional normed vector space. Finite state
//! spaces (the chain environment) embed their states at integer coordinates
//! so that the same norm machinery applies everywhere.

use smallvec::SmallVec;
use std::fmt;

/// Coordinates of a state. Inline storage covers every shipped environment
/// (dimension at most 2) without per-step allocation.
pub type Coords = SmallVec<[f64; 2]>;

/// A point in the environment's state space.
#[derive(Debug, Clone, PartialEq)]
pub struct State(pub Coords);

impl State {
    pub fn new(coords: impl Into<Coords>) -> Self {
        State(coords.into())
    }

    /// One-dimensional state.
    pub fn scalar(x: f64) -> Self {
        State(SmallVec::from_slice(&[x]))
    }

    /// Two-dimensional state (position, velocity).
    pub fn pair(x: f64, v: f64) -> Self {
        State(SmallVec::from_slice(&[x, v]))
    }

    /// Finite-chain state embedded at an integer coordinate.
    pub fn index(i: usize) -> Self {
        State::scalar(i as f64)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Value of a one-dimensional state.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.0.len(), 1, "expected scalar state");
        self.0[0]
    }

    /// Nearest chain index for an integer-embedded state, clamped to `0..n`.
    pub fn chain_index(&self, n_states: usize) -> usize {
        let x = self.0[0].round();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(n_states - 1)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A control input: a point in a compact interval box, or an index into a
/// finite action set.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Continuous(Coords),
    Discrete(usize),
}

impl Action {
    pub fn scalar(a: f64) -> Self {
        Action::Continuous(SmallVec::from_slice(&[a]))
    }

    pub fn continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Continuous(c) => Some(c),
            Action::Discrete(_) => None,
        }
    }

    pub fn discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Action::Continuous(c) => c.iter().all(|a| a.is_finite()),
            Action::Discrete(_) => true,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Continuous(c) => {
                write!(f, "[")?;
                for (i, a) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, "]")
            }
            Action::Discrete(i) => write!(f, "#{i}"),
        }
    }
}

/// The norm fixed by each environment: sup-norm for box/interval goals,
/// Euclidean otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Euclidean,
    Sup,
}

impl Norm {
    pub fn of(&self, coords: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => coords.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Norm::Sup => coords.iter().fold(0.0, |m, c| m.max(c.abs())),
        }
    }

    pub fn dist(&self, a: &State, b: &State) -> f64 {
        debug_assert_eq!(a.dim(), b.dim());
        match self {
            Norm::Euclidean => a
                .coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::Sup => a
                .coords()
                .iter()
                .zip(b.coords())
                .fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    pub fn state_norm(&self, s: &State) -> f64 {
        self.of(s.coords())
    }
}

pub fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}
