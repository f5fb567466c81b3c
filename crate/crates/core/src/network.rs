//! Stacked sort layers ending in one filter per class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{LayerOutput, SortLayer};
use crate::perm::{adjacent_transpose_augment, Norm, Permutation};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `eta * (1 + cos(pi * t / T)) / 2` for `t = 1..=T`.
    Cosine,
}

impl LrSchedule {
    pub fn eta_at(self, base: f64, t: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let phase = std::f64::consts::PI * t as f64 / total as f64;
                base * (1.0 + phase.cos()) / 2.0
            }
        }
    }
}

/// Which hidden filters learn from a training sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenRule {
    /// The `winners` filters closest to the input learn it. Labels are not used.
    Competitive,
    /// Each hidden layer is given a target ordering of its own filter-ids: the
    /// true-class output filter for the last hidden layer, and for lower layers
    /// the ordering of the first filter of the target one layer up. Filters
    /// that the layer ranks later than the target does learn the input.
    #[default]
    TargetMotion,
    /// Like `TargetMotion`, but only the first `winners` filters of the target
    /// learn the input.
    TargetWinners,
    /// `TargetMotion` plus the opposite move: filters ranked earlier than the
    /// target ranks them learn the reversed input.
    PushPull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden_sizes: Vec<usize>,
    pub classes: usize,
    pub iterations: usize,
    pub eta: f64,
    /// Whether the output layer learns (`llu`). Frozen when false.
    pub last_layer_update: bool,
    pub augment_count: usize,
    pub lr_schedule: LrSchedule,
    pub norm: Norm,
    pub winners: usize,
    pub hidden_rule: HiddenRule,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![128],
            classes: 2,
            iterations: 300,
            eta: 0.1,
            last_layer_update: false,
            augment_count: 0,
            lr_schedule: LrSchedule::Constant,
            norm: Norm::L1,
            winners: 1,
            hidden_rule: HiddenRule::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidArgument("eta must be > 0".into()));
        }
        if self.winners == 0 {
            return Err(Error::InvalidArgument("winners must be >= 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer width must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Learning rate used at each iteration.
    pub etas: Vec<f64>,
    /// `(iteration, train error)` at the requested cadence.
    pub errors: Vec<(usize, f64)>,
}

impl TrainLog {
    /// `iteration,eta,train_error` rows; the error column is empty when it was
    /// not sampled at that iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,eta,train_error\n");
        let mut errors = self.errors.iter().peekable();
        for (i, eta) in self.etas.iter().enumerate() {
            let t = i + 1;
            let err = match errors.peek() {
                Some(&&(it, e)) if it == t => {
                    errors.next();
                    format!("{e}")
                }
                _ => String::new(),
            };
            out.push_str(&format!("{t},{eta},{err}\n"));
        }
        out
    }
}

/// Forward trace: the permutation fed to each layer and each layer's output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace {
    pub inputs: Vec<Permutation>,
    pub outputs: Vec<LayerOutput>,
}

impl NetworkTrace {
    /// Output-layer distances, one per class.
    pub fn class_distances(&self) -> &[f64] {
        &self.outputs.last().expect("network has layers").distances
    }

    /// Closest class; ties go to the smaller class-id.
    pub fn predicted(&self) -> usize {
        self.outputs.last().expect("network has layers").output.items()[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<SortLayer>,
    config: NetworkConfig,
}

impl Network {
    /// Random filters throughout. The output layer is frozen unless
    /// `last_layer_update` is set.
    pub fn new(input_vocab: usize, config: NetworkConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if input_vocab == 0 {
            return Err(Error::InvalidArgument("input vocabulary must be >= 1".into()));
        }
        let mut layers = Vec::with_capacity(config.hidden_sizes.len() + 1);
        let mut vocab = input_vocab;
        for &width in &config.hidden_sizes {
            let mut layer = SortLayer::random(width, vocab, config.norm, rng)?;
            layer.winners = config.winners;
            layers.push(layer);
            vocab = width;
        }
        let mut output = SortLayer::random(config.classes, vocab, config.norm, rng)?;
        output.frozen = !config.last_layer_update;
        layers.push(output);
        Ok(Self { layers, config })
    }

    pub fn from_parts(layers: Vec<SortLayer>, config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for pair in layers.windows(2) {
            if pair[1].vocab() != pair[0].width() {
                return Err(Error::VocabMismatch {
                    left: pair[0].width(),
                    right: pair[1].vocab(),
                });
            }
        }
        if layers.last().map(SortLayer::width) != Some(config.classes) {
            return Err(Error::InvalidArgument(
                "output layer width must equal the class count".into(),
            ));
        }
        Ok(Self { layers, config })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[SortLayer] {
        &self.layers
    }

    pub fn input_vocab(&self) -> usize {
        self.layers[0].vocab()
    }

    pub fn output_layer(&self) -> &SortLayer {
        self.layers.last().expect("network has layers")
    }

    pub fn forward(&self, input: &Permutation) -> Result<NetworkTrace> {
        if input.len() != self.input_vocab() {
            return Err(Error::VocabMismatch {
                left: input.len(),
                right: self.input_vocab(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<LayerOutput> = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let out = layer.forward(&current)?;
            inputs.push(std::mem::replace(&mut current, out.output.clone()));
            outputs.push(out);
        }
        Ok(NetworkTrace { inputs, outputs })
    }

    pub fn predict(&self, input: &Permutation) -> Result<usize> {
        Ok(self.forward(input)?.predicted())
    }

    /// Fraction of misclassified samples.
    pub fn error_rate(&self, data: &[(Permutation, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("evaluation data"));
        }
        let mut wrong = 0usize;
        for (x, y) in data {
            if self.predict(x)? != *y {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / data.len() as f64)
    }

    /// One training round on a single labelled sample.
    pub fn train_step(&mut self, input: &Permutation, label: usize, eta: f64) -> Result<()> {
        if label >= self.config.classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} >= class count {}",
                self.config.classes
            )));
        }
        if eta == 0.0 {
            return Ok(());
        }
        let trace = self.forward(input)?;
        let out_idx = self.layers.len() - 1;
        if !self.layers[out_idx].frozen {
            self.layers[out_idx].update(&trace.inputs[out_idx], Some(label), eta)?;
        }
        let mut target = self.layers[out_idx].filter(label).ordering().clone();
        for l in (0..out_idx).rev() {
            let layer = &mut self.layers[l];
            let x = trace.inputs[l].items();
            let mut pushed = Vec::new();
            let ids = match self.config.hidden_rule {
                HiddenRule::Competitive => layer.closest(&trace.outputs[l]),
                HiddenRule::TargetWinners => {
                    target.items()[..layer.winners.min(layer.width())].to_vec()
                }
                HiddenRule::TargetMotion => {
                    let current = trace.outputs[l].output.positions();
                    let wanted = target.positions();
                    (0..layer.width())
                        .filter(|&j| current[j] > wanted[j])
                        .collect()
                }
                HiddenRule::PushPull => {
                    let current = trace.outputs[l].output.positions();
                    let wanted = target.positions();
                    pushed = (0..layer.width()).filter(|&j| current[j] < wanted[j]).collect();
                    (0..layer.width())
                        .filter(|&j| current[j] > wanted[j])
                        .collect()
                }
            };
            layer.attract(&ids, x, eta)?;
            layer.repel(&pushed, x, eta)?;
            target = layer.filter(target.items()[0]).ordering().clone();
        }
        Ok(())
    }

    /// Presents `iterations` samples, cycling through `data` in a freshly
    /// shuffled order each epoch. With `log_every = Some(k)` the train error
    /// is recorded every `k` iterations and at the end.
    pub fn train(
        &mut self,
        data: &[(Permutation, usize)],
        rng: &mut SeededRng,
        log_every: Option<usize>,
    ) -> Result<TrainLog> {
        if data.is_empty() {
            return Err(Error::Empty("training data"));
        }
        if let Some((_, y)) = data.iter().find(|(_, y)| *y >= self.config.classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} >= class count {}",
                self.config.classes
            )));
        }
        let total = self.config.iterations;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut cursor = order.len();
        let mut log = TrainLog::default();
        for t in 1..=total {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let (x, y) = &data[order[cursor]];
            cursor += 1;
            let eta = self.config.lr_schedule.eta_at(self.config.eta, t, total);
            let sample = adjacent_transpose_augment(x, self.config.augment_count, rng);
            self.train_step(&sample, *y, eta)?;
            log.etas.push(eta);
            if let Some(k) = log_every {
                if k > 0 && (t % k == 0 || t == total) {
                    log.errors.push((t, self.error_rate(data)?));
                }
            }
        }
        Ok(log)
    }
}
