//! Per-sample transmission menu: for each of the four feature levels, the
//! semantic loss at the classifying endpoint, the airtime at the current rate,
//! and the label that endpoint would predict.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::skb::{ClassId, FeatureExtractor, SemanticKb};
use crate::{Error, Result};

/// What gets sent for one sample. Exactly one level per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    /// Raw visual feature, classified entirely by the receiver.
    Visual = 1,
    /// Transmitter-encoded intermediate feature, decoded by the receiver.
    Intermediate = 2,
    /// Transmitter-decoded semantic feature, matched against the receiver base.
    Semantic = 3,
    /// Label estimated by the transmitter against its own base.
    Label = 4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Visual, Level::Intermediate, Level::Semantic, Level::Label];

    /// Zero-based position in [`Level::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Level> {
        match n {
            1 => Some(Level::Visual),
            2 => Some(Level::Intermediate),
            3 => Some(Level::Semantic),
            4 => Some(Level::Label),
            _ => None,
        }
    }
}

/// One level per sample of a slot.
pub type TransmissionChoice = Vec<Level>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMenu {
    pub loss: [f64; 4],
    /// Seconds.
    pub latency: [f64; 4],
    pub predicted: [ClassId; 4],
}

impl LevelMenu {
    pub fn loss_of(&self, level: Level) -> f64 {
        self.loss[level.index()]
    }

    pub fn latency_of(&self, level: Level) -> f64 {
        self.latency[level.index()]
    }

    pub fn predicted_by(&self, level: Level) -> ClassId {
        self.predicted[level.index()]
    }

    pub fn min_latency(&self) -> f64 {
        self.latency.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Scalars on the wire per level: `(D_v, k, D_s, 1)`.
pub fn payload_dims(visual_dim: usize, latent_dim: usize, semantic_dim: usize) -> [usize; 4] {
    [visual_dim, latent_dim, semantic_dim, 1]
}

/// Builds the menu of one sample at rate `rate` bits/s with `quantization`
/// bits per scalar. `sample_id` only labels numerical errors.
pub fn build_menu(
    sample: &[f64],
    tx: &FeatureExtractor,
    rx: &FeatureExtractor,
    kb: &SemanticKb,
    rate: f64,
    quantization: f64,
    sample_id: usize,
) -> Result<LevelMenu> {
    if !(rate > 0.0) {
        return Err(Error::Domain { what: "rate", value: rate });
    }
    if sample.len() != tx.visual_dim() || sample.len() != rx.visual_dim() {
        return Err(Error::contract(format!(
            "sample has {} visual dims, extractors expect {}/{}",
            sample.len(),
            tx.visual_dim(),
            rx.visual_dim()
        )));
    }

    let rx_latent = rx.encode_visual(sample);
    let tx_latent = tx.encode_visual(sample);
    let at_receiver = rx.decode_semantic(&rx_latent);
    let mixed = rx.decode_semantic(&tx_latent);
    let at_transmitter = tx.decode_semantic(&tx_latent);

    for proj in [&at_receiver, &mixed, &at_transmitter] {
        if proj.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical { context: "feature projection", sample: sample_id });
        }
    }

    let (c1, l1) = kb.nearest(&kb.rx_members, &at_receiver);
    let (c2, l2) = kb.nearest(&kb.rx_members, &mixed);
    let (c3, l3) = kb.nearest(&kb.rx_members, &at_transmitter);
    let (c4, l4) = kb.nearest(&kb.tx_members, &at_transmitter);

    let dims = payload_dims(tx.visual_dim(), tx.latent_dim(), kb.semantic_dim());
    let per_scalar = quantization / rate;
    let latency = dims.map(|n| n as f64 * per_scalar);
    Ok(LevelMenu { loss: [l1, l2, l3, l4], latency, predicted: [c1, c2, c3, c4] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceOutcome {
    pub avg_loss: f64,
    pub avg_latency: f64,
    pub correct: Vec<bool>,
}

impl ChoiceOutcome {
    pub fn accuracy(&self) -> f64 {
        accuracy(&self.correct)
    }
}

pub fn accuracy(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Averages of the chosen entries over the slot's samples, and per-sample
/// correctness of the endpoint that ends up classifying.
pub fn evaluate_choice(menus: &[LevelMenu], choice: &[Level], truth: &[ClassId]) -> Result<ChoiceOutcome> {
    if menus.len() != choice.len() || menus.len() != truth.len() {
        return Err(Error::contract(format!(
            "menus ({}), choice ({}) and labels ({}) differ in length",
            menus.len(),
            choice.len(),
            truth.len()
        )));
    }
    if menus.is_empty() {
        return Err(Error::contract("no samples to evaluate"));
    }
    let m = menus.len() as f64;
    let mut loss = 0.0;
    let mut latency = 0.0;
    let mut correct = Vec::with_capacity(menus.len());
    for ((menu, &level), &label) in menus.iter().zip(choice).zip(truth) {
        loss += menu.loss_of(level);
        latency += menu.latency_of(level);
        correct.push(menu.predicted_by(level) == label);
    }
    Ok(ChoiceOutcome { avg_loss: loss / m, avg_latency: latency / m, correct })
}
