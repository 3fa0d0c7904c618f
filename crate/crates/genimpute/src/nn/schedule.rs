use serde::{Deserialize, Serialize};

/// Reduce-on-plateau configuration. Defaults: divide by 5 after 10 epochs
/// without an improvement larger than 1e-4 on the monitored metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub decay_factor: f64,
    pub patience: usize,
    pub tolerance: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            decay_factor: 5.0,
            patience: 10,
            tolerance: 1e-4,
        }
    }
}

/// Learning-rate schedule that decays when the monitored metric (lower is
/// better) stops improving. The learning rate never increases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauSchedule {
    learning_rate: f64,
    config: PlateauConfig,
    /// None until the first finite metric arrives (JSON cannot hold
    /// infinities).
    best_metric: Option<f64>,
    epochs_since_improvement: usize,
    history: Vec<f64>,
}

impl PlateauSchedule {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Self {
        assert!(initial_lr > 0.0, "learning rate must be positive");
        assert!(config.decay_factor > 1.0, "decay factor must exceed 1");
        assert!(config.patience >= 1, "patience must be at least 1");
        PlateauSchedule {
            learning_rate: initial_lr,
            config,
            best_metric: None,
            epochs_since_improvement: 0,
            history: Vec::new(),
        }
    }

    /// Records one epoch's metric and returns the (possibly decayed)
    /// learning rate. Non-finite metrics are treated as "no improvement".
    pub fn step(&mut self, metric: f64) -> f64 {
        self.history.push(metric);
        let improved = metric.is_finite()
            && self
                .best_metric
                .map(|best| metric < best - self.config.tolerance)
                .unwrap_or(true);
        if improved {
            self.best_metric = Some(metric);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.config.patience {
                self.learning_rate /= self.config.decay_factor;
                self.epochs_since_improvement = 0;
            }
        }
        self.learning_rate
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}
