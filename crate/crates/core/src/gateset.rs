//! Pauli and pi/2 Clifford labels, the 24-element single-qubit Clifford
//! group, random benchmarking sequences and their predicted outcomes.
//!
//! Ideal gates are tracked on the six cardinal Bloch states; no matrix
//! products are needed to predict an outcome. Gates are compared as
//! rotations, so global phase (and therefore `+I` vs `-I`) never matters.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::Unitary2;
use crate::rng::{self, SimRng};

/// Sequence lengths of the reference campaign.
pub const PAPER_LENGTHS: [usize; 10] = [1, 3, 8, 21, 55, 144, 233, 377, 610, 987];

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("sequence length must be at least 1")]
    ZeroLength,
    #[error("unknown gate token `{0}`")]
    UnknownToken(String),
    #[error("malformed sequence record: {0}")]
    Malformed(String),
    #[error("sequence with seed {seed} predicts {recorded:?} but its gates lead to {tracked:?}")]
    PredictionMismatch {
        seed: u64,
        recorded: Pole,
        tracked: Pole,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// `exp(-i pi sigma_p / 2)` for `sigma_p` in `{+-X, +-Y, +-Z, +-I}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliLabel {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
    PlusI,
    MinusI,
}

impl PauliLabel {
    pub const ALL: [PauliLabel; 8] = [
        PauliLabel::PlusX,
        PauliLabel::MinusX,
        PauliLabel::PlusY,
        PauliLabel::MinusY,
        PauliLabel::PlusZ,
        PauliLabel::MinusZ,
        PauliLabel::PlusI,
        PauliLabel::MinusI,
    ];

    /// Rotation axis, `None` for the identity pair.
    pub fn axis(self) -> Option<Axis> {
        use PauliLabel::*;
        match self {
            PlusX | MinusX => Some(Axis::X),
            PlusY | MinusY => Some(Axis::Y),
            PlusZ | MinusZ => Some(Axis::Z),
            PlusI | MinusI => None,
        }
    }

    pub fn sign(self) -> f64 {
        use PauliLabel::*;
        match self {
            PlusX | PlusY | PlusZ | PlusI => 1.0,
            MinusX | MinusY | MinusZ | MinusI => -1.0,
        }
    }

    /// Whether the gate needs microwave pulses (x and y families).
    pub fn is_driven(self) -> bool {
        matches!(self.axis(), Some(Axis::X) | Some(Axis::Y))
    }

    pub fn unitary(self) -> Unitary2 {
        match self.axis() {
            // exp(-+ i pi/2 I): identity up to phase.
            None => Unitary2::IDENTITY,
            Some(axis) => Unitary2::rotation(signed_axis(axis, self.sign()), PI),
        }
    }

    pub fn token(self) -> &'static str {
        use PauliLabel::*;
        match self {
            PlusX => "+X",
            MinusX => "-X",
            PlusY => "+Y",
            MinusY => "-Y",
            PlusZ => "+Z",
            MinusZ => "-Z",
            PlusI => "+I",
            MinusI => "-I",
        }
    }
}

/// `exp(-i pi sigma_c / 4)` for `sigma_c` in `{+-X, +-Y}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CliffordLabel {
    PlusX90,
    MinusX90,
    PlusY90,
    MinusY90,
}

impl CliffordLabel {
    /// Also the tie-break order used when choosing a closing gate.
    pub const ALL: [CliffordLabel; 4] = [
        CliffordLabel::PlusX90,
        CliffordLabel::MinusX90,
        CliffordLabel::PlusY90,
        CliffordLabel::MinusY90,
    ];

    pub fn axis(self) -> Axis {
        match self {
            CliffordLabel::PlusX90 | CliffordLabel::MinusX90 => Axis::X,
            CliffordLabel::PlusY90 | CliffordLabel::MinusY90 => Axis::Y,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            CliffordLabel::PlusX90 | CliffordLabel::PlusY90 => 1.0,
            CliffordLabel::MinusX90 | CliffordLabel::MinusY90 => -1.0,
        }
    }

    pub fn unitary(self) -> Unitary2 {
        Unitary2::rotation(signed_axis(self.axis(), self.sign()), PI / 2.0)
    }

    pub fn token(self) -> &'static str {
        match self {
            CliffordLabel::PlusX90 => "+X90",
            CliffordLabel::MinusX90 => "-X90",
            CliffordLabel::PlusY90 => "+Y90",
            CliffordLabel::MinusY90 => "-Y90",
        }
    }
}

fn signed_axis(axis: Axis, sign: f64) -> [f64; 3] {
    match axis {
        Axis::X => [sign, 0.0, 0.0],
        Axis::Y => [0.0, sign, 0.0],
        Axis::Z => [0.0, 0.0, sign],
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for CliffordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PauliLabel {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PauliLabel::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| GateError::UnknownToken(s.to_string()))
    }
}

impl FromStr for CliffordLabel {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CliffordLabel::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| GateError::UnknownToken(s.to_string()))
    }
}

/// Either kind of protocol gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Pauli(PauliLabel),
    Clifford(CliffordLabel),
}

impl Gate {
    /// The twelve protocol gates: 8 Paulis then 4 Cliffords.
    pub fn protocol_gates() -> impl Iterator<Item = Gate> {
        PauliLabel::ALL
            .into_iter()
            .map(Gate::Pauli)
            .chain(CliffordLabel::ALL.into_iter().map(Gate::Clifford))
    }

    pub fn unitary(self) -> Unitary2 {
        match self {
            Gate::Pauli(p) => p.unitary(),
            Gate::Clifford(c) => c.unitary(),
        }
    }

    /// Signed-permutation action on Bloch vectors.
    pub fn rotation(self) -> Rotation {
        match self {
            Gate::Pauli(p) => match p.axis() {
                None => Rotation::IDENTITY,
                Some(a) => Rotation::quarter_turn(a, 1).pow(2),
            },
            Gate::Clifford(c) => Rotation::quarter_turn(c.axis(), c.sign() as i8),
        }
    }
}

/// A proper rotation of the cube: 3x3 integer matrix with entries in
/// `{-1, 0, 1}` acting on Bloch vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rotation(pub [[i8; 3]; 3]);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);

    /// Right-handed rotation by `+-pi/2` about a coordinate axis.
    pub fn quarter_turn(axis: Axis, sign: i8) -> Rotation {
        let s = sign.signum();
        match axis {
            Axis::X => Rotation([[1, 0, 0], [0, 0, -s], [0, s, 0]]),
            Axis::Y => Rotation([[0, 0, s], [0, 1, 0], [-s, 0, 0]]),
            Axis::Z => Rotation([[0, -s, 0], [s, 0, 0], [0, 0, 1]]),
        }
    }

    /// `self` applied after `first`.
    pub fn then_after(&self, first: &Rotation) -> Rotation {
        let mut out = [[0i8; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * first.0[k][j]).sum();
            }
        }
        Rotation(out)
    }

    pub fn pow(&self, n: u32) -> Rotation {
        (0..n).fold(Rotation::IDENTITY, |acc, _| self.then_after(&acc))
    }

    pub fn apply(&self, v: [i8; 3]) -> [i8; 3] {
        let mut out = [0i8; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|k| self.0[i][k] * v[k]).sum();
        }
        out
    }

    pub fn order(&self) -> u32 {
        let mut acc = *self;
        let mut n = 1;
        while acc != Rotation::IDENTITY {
            acc = self.then_after(&acc);
            n += 1;
        }
        n
    }
}

/// Multiplication table of the 24 single-qubit Clifford rotations, generated
/// from `+X90` and `+Y90`.
#[derive(Debug, Clone)]
pub struct CliffordTable {
    elements: Vec<Rotation>,
    /// Generator word (applied left to right) reaching each element.
    words: Vec<Vec<CliffordLabel>>,
    product: Vec<Vec<usize>>,
    index: HashMap<Rotation, usize>,
}

impl CliffordTable {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> Rotation {
        self.elements[i]
    }

    pub fn elements(&self) -> &[Rotation] {
        &self.elements
    }

    /// Index of `a` applied after `b`.
    pub fn compose(&self, a: usize, b: usize) -> usize {
        self.product[a][b]
    }

    pub fn index_of(&self, r: &Rotation) -> Option<usize> {
        self.index.get(r).copied()
    }

    pub fn index_of_gate(&self, g: Gate) -> usize {
        self.index[&g.rotation()]
    }

    /// A unitary realizing element `i`, built from its generator word.
    pub fn unitary(&self, i: usize) -> Unitary2 {
        self.words[i]
            .iter()
            .fold(Unitary2::IDENTITY, |acc, g| g.unitary() * acc)
    }
}

pub fn clifford_table() -> CliffordTable {
    let generators = [CliffordLabel::PlusX90, CliffordLabel::PlusY90];
    let mut elements = vec![Rotation::IDENTITY];
    let mut words: Vec<Vec<CliffordLabel>> = vec![Vec::new()];
    let mut index = HashMap::from([(Rotation::IDENTITY, 0usize)]);
    let mut frontier = 0;
    while frontier < elements.len() {
        for g in generators {
            let next = Gate::Clifford(g).rotation().then_after(&elements[frontier]);
            if let std::collections::hash_map::Entry::Vacant(slot) = index.entry(next) {
                slot.insert(elements.len());
                let mut w = words[frontier].clone();
                w.push(g);
                words.push(w);
                elements.push(next);
            }
        }
        frontier += 1;
    }
    let product = elements
        .iter()
        .map(|a| elements.iter().map(|b| index[&a.then_after(b)]).collect())
        .collect();
    CliffordTable {
        elements,
        words,
        product,
        index,
    }
}

/// One of the six Bloch-axis states. `PlusZ` is `|down>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CardinalState {
    PlusZ,
    MinusZ,
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl CardinalState {
    pub const ALL: [CardinalState; 6] = [
        CardinalState::PlusZ,
        CardinalState::MinusZ,
        CardinalState::PlusX,
        CardinalState::MinusX,
        CardinalState::PlusY,
        CardinalState::MinusY,
    ];

    pub fn bloch(self) -> [i8; 3] {
        use CardinalState::*;
        match self {
            PlusX => [1, 0, 0],
            MinusX => [-1, 0, 0],
            PlusY => [0, 1, 0],
            MinusY => [0, -1, 0],
            PlusZ => [0, 0, 1],
            MinusZ => [0, 0, -1],
        }
    }

    pub fn from_bloch(v: [i8; 3]) -> Option<CardinalState> {
        CardinalState::ALL.into_iter().find(|s| s.bloch() == v)
    }

    pub fn pole(self) -> Option<Pole> {
        match self {
            CardinalState::PlusZ => Some(Pole::Down),
            CardinalState::MinusZ => Some(Pole::Up),
            _ => None,
        }
    }
}

/// Ideal image of a cardinal state under a protocol gate.
pub fn step_cardinal(s: CardinalState, g: Gate) -> CardinalState {
    CardinalState::from_bloch(g.rotation().apply(s.bloch()))
        .expect("Clifford rotations permute the cardinal states")
}

/// Predicted measurement result of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    Down,
    Up,
}

impl Pole {
    pub fn token(self) -> &'static str {
        match self {
            Pole::Down => "down",
            Pole::Up => "up",
        }
    }
}

impl FromStr for Pole {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "down" => Ok(Pole::Down),
            "up" => Ok(Pole::Up),
            other => Err(GateError::UnknownToken(other.to_string())),
        }
    }
}

/// The deterministic closing Clifford taking `s` to a pole. States already on
/// a pole get the identity; equatorial states get the first working label in
/// `CliffordLabel::ALL` order.
pub fn closing_clifford_for(s: CardinalState) -> (Option<CliffordLabel>, Pole) {
    if let Some(pole) = s.pole() {
        return (None, pole);
    }
    CliffordLabel::ALL
        .into_iter()
        .find_map(|c| {
            step_cardinal(s, Gate::Clifford(c))
                .pole()
                .map(|pole| (Some(c), pole))
        })
        .expect("every equatorial state reaches a pole under some pi/2 rotation")
}

/// A random Pauli followed by a random pi/2 Clifford.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComputationalGate {
    pub pauli: PauliLabel,
    pub clifford: CliffordLabel,
}

impl ComputationalGate {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        ComputationalGate {
            pauli: PauliLabel::ALL[rng.random_range(0..8)],
            clifford: CliffordLabel::ALL[rng.random_range(0..4)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateSequence {
    pub length: usize,
    pub gates: Vec<ComputationalGate>,
    pub closing_pauli: PauliLabel,
    /// `None` means the closing Clifford is the identity.
    pub closing_clifford: Option<CliffordLabel>,
    pub predicted_outcome: Pole,
    pub seed: u64,
}

/// Seed of sequence `index` at `length` in a campaign.
pub fn sequence_seed(master_seed: u64, length: usize, index: usize) -> u64 {
    rng::derive_seed(&[
        master_seed,
        rng::stream::SEQUENCE,
        length as u64,
        index as u64,
    ])
}

pub fn sample_sequence(length: usize, seed: u64) -> Result<GateSequence, GateError> {
    if length == 0 {
        return Err(GateError::ZeroLength);
    }
    let mut rng = rng::rng_for(&[seed]);
    Ok(sample_with(length, seed, &mut rng))
}

fn sample_with(length: usize, seed: u64, rng: &mut SimRng) -> GateSequence {
    let gates: Vec<_> = (0..length)
        .map(|_| ComputationalGate::random(rng))
        .collect();
    let closing_pauli = PauliLabel::ALL[rng.random_range(0..8)];
    let state = track(&gates, closing_pauli);
    let (closing_clifford, predicted_outcome) = closing_clifford_for(state);
    GateSequence {
        length,
        gates,
        closing_pauli,
        closing_clifford,
        predicted_outcome,
        seed,
    }
}

fn track(gates: &[ComputationalGate], closing_pauli: PauliLabel) -> CardinalState {
    let s = gates.iter().fold(CardinalState::PlusZ, |s, g| {
        step_cardinal(
            step_cardinal(s, Gate::Pauli(g.pauli)),
            Gate::Clifford(g.clifford),
        )
    });
    step_cardinal(s, Gate::Pauli(closing_pauli))
}

impl GateSequence {
    /// Predicted pole recomputed from the gates.
    pub fn tracked_outcome(&self) -> Pole {
        let s = track(&self.gates, self.closing_pauli);
        let s = match self.closing_clifford {
            Some(c) => step_cardinal(s, Gate::Clifford(c)),
            None => s,
        };
        s.pole().unwrap_or(Pole::Down)
    }

    /// All gates in application order, closing pair included.
    pub fn all_gates(&self) -> Vec<Gate> {
        let mut out = Vec::with_capacity(2 * self.length + 2);
        for g in &self.gates {
            out.push(Gate::Pauli(g.pauli));
            out.push(Gate::Clifford(g.clifford));
        }
        out.push(Gate::Pauli(self.closing_pauli));
        if let Some(c) = self.closing_clifford {
            out.push(Gate::Clifford(c));
        }
        out
    }
}

/// Product of the ideal gate unitaries, z Paulis as true rotations.
pub fn ideal_sequence_unitary(seq: &GateSequence) -> Unitary2 {
    seq.all_gates()
        .into_iter()
        .fold(Unitary2::IDENTITY, |acc, g| g.unitary() * acc)
}

/// One line of the sequences file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub seed: u64,
    pub length: usize,
    /// `pauli:clifford` tokens separated by spaces.
    pub gates: String,
    pub closing_pauli: String,
    /// A Clifford token or `I`.
    pub closing_clifford: String,
    pub predicted: Pole,
}

impl From<&GateSequence> for SequenceRecord {
    fn from(seq: &GateSequence) -> Self {
        let gates = seq
            .gates
            .iter()
            .map(|g| format!("{}:{}", g.pauli, g.clifford))
            .collect::<Vec<_>>()
            .join(" ");
        SequenceRecord {
            seed: seq.seed,
            length: seq.length,
            gates,
            closing_pauli: seq.closing_pauli.to_string(),
            closing_clifford: seq
                .closing_clifford
                .map_or_else(|| "I".to_string(), |c| c.to_string()),
            predicted: seq.predicted_outcome,
        }
    }
}

impl TryFrom<&SequenceRecord> for GateSequence {
    type Error = GateError;

    fn try_from(r: &SequenceRecord) -> Result<Self, Self::Error> {
        let gates = r
            .gates
            .split_whitespace()
            .map(|tok| {
                let (p, c) = tok
                    .split_once(':')
                    .ok_or_else(|| GateError::Malformed(format!("gate token `{tok}`")))?;
                Ok(ComputationalGate {
                    pauli: p.parse()?,
                    clifford: c.parse()?,
                })
            })
            .collect::<Result<Vec<_>, GateError>>()?;
        if gates.len() != r.length {
            return Err(GateError::Malformed(format!(
                "length {} but {} gates",
                r.length,
                gates.len()
            )));
        }
        if gates.is_empty() {
            return Err(GateError::ZeroLength);
        }
        let closing_clifford = match r.closing_clifford.as_str() {
            "I" => None,
            tok => Some(tok.parse()?),
        };
        let seq = GateSequence {
            length: r.length,
            gates,
            closing_pauli: r.closing_pauli.parse()?,
            closing_clifford,
            predicted_outcome: r.predicted,
            seed: r.seed,
        };
        let tracked = seq.tracked_outcome();
        if tracked != seq.predicted_outcome {
            return Err(GateError::PredictionMismatch {
                seed: seq.seed,
                recorded: seq.predicted_outcome,
                tracked,
            });
        }
        Ok(seq)
    }
}

/// Serialize sequences as JSON lines.
pub fn write_sequences<W: std::io::Write>(mut w: W, seqs: &[GateSequence]) -> std::io::Result<()> {
    for s in seqs {
        let line =
            serde_json::to_string(&SequenceRecord::from(s)).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_sequences<R: std::io::BufRead>(r: R) -> Result<Vec<GateSequence>, GateError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| GateError::Malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord = serde_json::from_str(&line)
            .map_err(|e| GateError::Malformed(format!("line {}: {e}", n + 1)))?;
        out.push(GateSequence::try_from(&rec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{apply, QubitState};

    /// Conjugate the Bloch vector of `s` through the exact unitary.
    fn unitary_image(s: CardinalState, g: Gate) -> [f64; 3] {
        let psi = state_for(s);
        apply(&g.unitary(), psi).bloch()
    }

    fn state_for(s: CardinalState) -> QubitState {
        // Rotate |down> onto the requested axis with exact unitaries.
        let u = match s {
            CardinalState::PlusZ => Unitary2::IDENTITY,
            CardinalState::MinusZ => Unitary2::rotation([1.0, 0.0, 0.0], PI),
            CardinalState::PlusX => Unitary2::rotation([0.0, 1.0, 0.0], PI / 2.0),
            CardinalState::MinusX => Unitary2::rotation([0.0, 1.0, 0.0], -PI / 2.0),
            CardinalState::PlusY => Unitary2::rotation([1.0, 0.0, 0.0], -PI / 2.0),
            CardinalState::MinusY => Unitary2::rotation([1.0, 0.0, 0.0], PI / 2.0),
        };
        apply(&u, QubitState::down())
    }

    #[test]
    fn state_preparation_helper_is_right() {
        for s in CardinalState::ALL {
            let b = state_for(s).bloch();
            let want = s.bloch();
            for k in 0..3 {
                assert!((b[k] - want[k] as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cardinal_tracking_matches_unitary_conjugation() {
        for s in CardinalState::ALL {
            for g in Gate::protocol_gates() {
                let img = step_cardinal(s, g).bloch();
                let exact = unitary_image(s, g);
                for k in 0..3 {
                    assert!((exact[k] - img[k] as f64).abs() < 1e-12, "{s:?} {g:?}");
                }
            }
        }
    }

    #[test]
    fn worked_examples() {
        use CardinalState::*;
        assert_eq!(
            step_cardinal(PlusZ, Gate::Clifford(CliffordLabel::PlusX90)),
            MinusY
        );
        assert_eq!(step_cardinal(PlusX, Gate::Pauli(PauliLabel::PlusZ)), MinusX);
        for s in CardinalState::ALL {
            assert_eq!(step_cardinal(s, Gate::Pauli(PauliLabel::PlusI)), s);
            assert_eq!(step_cardinal(s, Gate::Pauli(PauliLabel::MinusI)), s);
        }
    }

    #[test]
    fn x90_twice_is_x_pauli() {
        let t = clifford_table();
        let x90 = t.index_of_gate(Gate::Clifford(CliffordLabel::PlusX90));
        assert_eq!(
            t.compose(x90, x90),
            t.index_of_gate(Gate::Pauli(PauliLabel::PlusX))
        );
        let u = CliffordLabel::PlusX90.unitary() * CliffordLabel::PlusX90.unitary();
        assert!(u.distance_up_to_phase(&PauliLabel::PlusX.unitary()) < 1e-12);
    }

    #[test]
    fn table_has_24_elements_and_all_protocol_gates() {
        let t = clifford_table();
        assert_eq!(t.len(), 24);
        for g in Gate::protocol_gates() {
            let i = t.index_of_gate(g);
            assert!(
                t.unitary(i).distance_up_to_phase(&g.unitary()) < 1e-12,
                "{g:?}"
            );
        }
    }

    #[test]
    fn element_orders() {
        let t = clifford_table();
        let mut counts = [0usize; 5];
        for r in t.elements() {
            let n = r.order() as usize;
            assert!(n <= 4);
            counts[n] += 1;
        }
        // identity, 9 half turns, 8 third turns about body diagonals, 6 quarter turns
        assert_eq!(counts, [0, 1, 9, 8, 6]);
        for g in Gate::protocol_gates() {
            assert_eq!(4 % g.rotation().order(), 0);
        }
    }

    #[test]
    fn closing_gate_reaches_a_pole() {
        assert_eq!(
            closing_clifford_for(CardinalState::PlusZ),
            (None, Pole::Down)
        );
        assert_eq!(
            closing_clifford_for(CardinalState::MinusZ),
            (None, Pole::Up)
        );
        // +x: both y rotations work; the tie-break picks +Y90.
        assert_eq!(
            closing_clifford_for(CardinalState::PlusX),
            (Some(CliffordLabel::PlusY90), Pole::Up)
        );
        for s in CardinalState::ALL {
            let (c, pole) = closing_clifford_for(s);
            let img = match c {
                Some(c) => unitary_image(s, Gate::Clifford(c)),
                None => state_for(s).bloch(),
            };
            let z = if pole == Pole::Down { 1.0 } else { -1.0 };
            assert!((img[2] - z).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn zero_length_rejected() {
        assert_eq!(sample_sequence(0, 1), Err(GateError::ZeroLength));
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = sample_sequence(1, 99).unwrap();
        assert_eq!(a, sample_sequence(1, 99).unwrap());
        let b = sample_sequence(55, sequence_seed(7, 55, 3)).unwrap();
        assert_eq!(b, sample_sequence(55, sequence_seed(7, 55, 3)).unwrap());
    }

    #[test]
    fn label_frequencies_are_uniform() {
        let mut pauli = HashMap::new();
        let mut cliff = HashMap::new();
        let n = 10_000;
        for i in 0..n {
            let s = sample_sequence(1, sequence_seed(5, 1, i)).unwrap();
            *pauli.entry(s.gates[0].pauli).or_insert(0usize) += 1;
            *cliff.entry(s.gates[0].clifford).or_insert(0usize) += 1;
        }
        for p in PauliLabel::ALL {
            let f = pauli[&p] as f64 / n as f64;
            assert!((f - 0.125).abs() < 0.02, "{p} {f}");
        }
        for c in CliffordLabel::ALL {
            let f = cliff[&c] as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.02, "{c} {f}");
        }
    }

    #[test]
    fn predicted_outcome_matches_unitary_product() {
        for i in 0..100 {
            let length = PAPER_LENGTHS[i % 5];
            let seq = sample_sequence(length, sequence_seed(11, length, i)).unwrap();
            let s = apply(&ideal_sequence_unitary(&seq), QubitState::down());
            let p = match seq.predicted_outcome {
                Pole::Down => s.amp_down.norm_sqr(),
                Pole::Up => s.amp_up.norm_sqr(),
            };
            assert!((p - 1.0).abs() < 1e-9, "seq {i}: {p}");
        }
    }

    #[test]
    fn sequence_file_round_trips_bit_exact() {
        let seqs: Vec<_> = (0..20)
            .map(|i| sample_sequence(1 + i * 7, sequence_seed(3, 1 + i * 7, i)).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_sequences(&mut buf, &seqs).unwrap();
        let back = read_sequences(buf.as_slice()).unwrap();
        assert_eq!(back, seqs);
        let mut again = Vec::new();
        write_sequences(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn tampered_prediction_is_rejected() {
        let seq = sample_sequence(8, 42).unwrap();
        let mut rec = SequenceRecord::from(&seq);
        rec.predicted = match rec.predicted {
            Pole::Down => Pole::Up,
            Pole::Up => Pole::Down,
        };
        assert!(matches!(
            GateSequence::try_from(&rec),
            Err(GateError::PredictionMismatch { .. })
        ));
    }
}
