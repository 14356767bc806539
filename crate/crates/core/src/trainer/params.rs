use serde::{Deserialize, Serialize};

/// One named parameter buffer. Weight tensors carry an `active` flag per
/// element; inactive entries are masked-out filters and stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<bool>>,
    /// False for running statistics, which are state rather than parameters.
    pub trainable: bool,
}

impl ParamTensor {
    pub fn is_active(&self, i: usize) -> bool {
        self.active.as_ref().is_none_or(|a| a[i])
    }

    pub fn active_count(&self) -> usize {
        match &self.active {
            Some(a) => a.iter().filter(|&&x| x).count(),
            None => self.values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub tensors: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Trainable scalars, masked entries excluded.
    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(|t| t.active_count()).sum()
    }

    /// Connection weights only (no bias or normalization terms).
    pub fn weight_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.active.is_some()).map(|t| t.active_count()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.values.len()]).collect()
    }

    /// True if every masked entry is exactly zero.
    pub fn masked_entries_zero(&self) -> bool {
        self.tensors.iter().all(|t| match &t.active {
            Some(a) => t.values.iter().zip(a).all(|(&v, &on)| on || v == 0.0),
            None => true,
        })
    }
}

/// Names shared by every executor so that parameter sets line up.
pub fn weight_name(src: usize, dst: usize) -> String {
    format!("l{dst}.w{src}")
}

pub fn bias_name(layer: usize) -> String {
    format!("l{layer}.bias")
}

pub fn bn_names(layer: usize) -> [String; 4] {
    ["gamma", "beta", "running_mean", "running_var"].map(|s| format!("l{layer}.bn.{s}"))
}
