use serde::{Deserialize, Serialize};

/// Raw counters for one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub node_count: usize,
    pub slots: u64,
    pub generated: u64,
    /// Unique packets that reached their destination.
    pub delivered: u64,
    pub duplicates_at_destination: u64,
    /// Packets whose every copy vanished without reaching the destination.
    pub dropped: u64,
    /// Undelivered packets still queued somewhere when the episode ended.
    pub residual: u64,
    pub transmissions: u64,
    pub broadcasts: u64,
    pub unicasts: u64,
    pub acks_returned: u64,
    /// `delivery_slot − created_slot` per delivered packet.
    pub delays: Vec<u64>,
    /// Hops traversed per delivered packet.
    pub hops: Vec<u64>,
}

/// Derived performance figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub goodput: f64,
    /// `N_TX / (N · N_D)`; missing when nothing was delivered.
    pub normalized_overhead: Option<f64>,
    pub broadcast_rate: Option<f64>,
    pub mean_delay: Option<f64>,
    pub mean_hops: Option<f64>,
}

fn mean(samples: &[u64]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().sum::<u64>() as f64 / samples.len() as f64)
    }
}

impl EpisodeMetrics {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            ..Self::default()
        }
    }

    pub fn goodput(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.delivered as f64 / self.generated as f64
        }
    }

    pub fn summarize(&self) -> Summary {
        summarize(self, self.node_count)
    }

    /// `generated = delivered + dropped + residual`.
    pub fn is_conserved(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.residual
    }
}

pub fn summarize(m: &EpisodeMetrics, node_count: usize) -> Summary {
    let decisions = m.broadcasts + m.unicasts;
    Summary {
        goodput: m.goodput(),
        normalized_overhead: (m.delivered > 0)
            .then(|| m.transmissions as f64 / (node_count as f64 * m.delivered as f64)),
        broadcast_rate: (decisions > 0).then(|| m.broadcasts as f64 / decisions as f64),
        mean_delay: mean(&m.delays),
        mean_hops: mean(&m.hops),
    }
}
