use serde::{Deserialize, Serialize};

use super::miso::{HwMiso, MisoRunner};
use super::ModelError;
use crate::timeseries::TimeSeries;

/// Independent MISO blocks, one per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwMimo {
    pub blocks: Vec<HwMiso>,
}

impl HwMimo {
    pub fn new(blocks: Vec<HwMiso>) -> Result<Self, ModelError> {
        let m = HwMimo { blocks };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks.is_empty() {
            return Err(ModelError::InvalidStructure("MIMO model has no blocks".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            b.validate()?;
            if self.blocks[..k].iter().any(|o| o.output == b.output) {
                return Err(ModelError::InvalidStructure(format!("duplicate output `{}`", b.output)));
            }
        }
        Ok(())
    }

    pub fn outputs(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.output.as_str()).collect()
    }

    /// Union of block inputs in first-seen order.
    pub fn inputs(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for b in &self.blocks {
            for i in &b.inputs {
                if !names.contains(&i.as_str()) {
                    names.push(i);
                }
            }
        }
        names
    }

    pub fn block(&self, output: &str) -> Option<&HwMiso> {
        self.blocks.iter().find(|b| b.output == output)
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(HwMiso::n_params).sum()
    }

    pub fn simulate(&self, data: &TimeSeries) -> Result<TimeSeries, ModelError> {
        let channels = self
            .blocks
            .iter()
            .map(|b| Ok((b.output.clone(), b.simulate(data)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(TimeSeries::new(data.sample_time(), channels)?)
    }

    pub fn runner(&self) -> MimoRunner<'_> {
        let names = self.inputs();
        let index = self
            .blocks
            .iter()
            .map(|b| {
                b.inputs
                    .iter()
                    .map(|i| names.iter().position(|n| n == i).expect("input listed"))
                    .collect()
            })
            .collect();
        MimoRunner {
            runners: self.blocks.iter().map(HwMiso::runner).collect(),
            index,
            scratch: Vec::new(),
        }
    }
}

/// One-sample advance of every block. Inputs follow [`HwMimo::inputs`],
/// outputs follow [`HwMimo::outputs`].
#[derive(Debug, Clone)]
pub struct MimoRunner<'a> {
    runners: Vec<MisoRunner<'a>>,
    index: Vec<Vec<usize>>,
    scratch: Vec<f64>,
}

impl MimoRunner<'_> {
    pub fn step(&mut self, inputs: &[f64], out: &mut [f64]) {
        for ((r, idx), o) in self.runners.iter_mut().zip(&self.index).zip(out.iter_mut()) {
            self.scratch.clear();
            self.scratch.extend(idx.iter().map(|&i| inputs[i]));
            *o = r.step(&self.scratch);
        }
    }
}
