use serde::{Deserialize, Serialize};

/// A `[states x outputs]` table indexed by a discrete state id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabular {
    num_states: usize,
    outputs: usize,
    table: Vec<f64>,
}

impl Tabular {
    pub fn zeros(num_states: usize, outputs: usize) -> Self {
        Self {
            num_states,
            outputs,
            table: vec![0.0; num_states * outputs],
        }
    }

    pub(crate) fn from_parts(num_states: usize, outputs: usize, table: Vec<f64>) -> Option<Self> {
        (table.len() == num_states * outputs).then_some(Self {
            num_states,
            outputs,
            table,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.table
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.outputs;
        &self.table[start..start + self.outputs]
    }

    pub fn accumulate_grad(&self, state: usize, grad_out: &[f64], grads: &mut [f64]) {
        let start = state * self.outputs;
        for (g, d) in grads[start..start + self.outputs].iter_mut().zip(grad_out) {
            *g += d;
        }
    }
}
