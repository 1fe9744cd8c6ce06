use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{layer_cycles, NetworkShape, PerfError, SystolicConfig};

/// Tile loop nesting for one fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopOrder {
    /// Outer loop over output blocks: partial sums stay in the array and
    /// the adder tree drains once per output block.
    OutputMajor,
    /// Outer loop over input blocks: partial sums spill after every tile,
    /// so each tile pays its own drain.
    InputMajor,
}

impl LoopOrder {
    pub fn name(self) -> &'static str {
        match self {
            LoopOrder::OutputMajor => "output-major",
            LoopOrder::InputMajor => "input-major",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    /// Opens a layer; inputs come from the on-chip output buffer.
    LoadInputs { layer: usize, words: usize },
    /// DRAM → weight buffer for one `w_sys × h_sys` tile.
    LoadWeights { in_block: usize, out_block: usize, words: usize },
    /// One array pass over a resident weight tile.
    MatMul { in_block: usize, out_block: usize },
    /// Drains the row adder trees into the output buffer.
    Reduce { out_block: usize, depth: usize },
    /// Activation on one output block; hidden behind the drain.
    Alu { out_block: usize, lanes: usize },
    /// Closes a layer.
    Store { layer: usize, words: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub shape: NetworkShape,
    pub config: SystolicConfig,
    pub orders: Vec<LoopOrder>,
    pub instructions: Vec<Instruction>,
    pub cycles: u64,
}

impl Schedule {
    /// Emits the instruction stream for `shape` on `config` and prices it
    /// in closed form.
    pub fn build(shape: &NetworkShape, config: &SystolicConfig, order: LoopOrder) -> Result<Self, PerfError> {
        config.validate()?;
        let (w, h, depth) = (config.w_sys, config.h_sys, config.tree_depth());
        let mut instructions = Vec::new();
        let mut cycles = 0;
        for (layer, (d_in, d_out)) in shape.layers().enumerate() {
            let (n_in, n_out) = (d_in.div_ceil(w), d_out.div_ceil(h));
            let tile_in = |ib: usize| w.min(d_in - ib * w);
            let tile_out = |ob: usize| h.min(d_out - ob * h);
            let load = |ib: usize, ob: usize| Instruction::LoadWeights {
                in_block: ib,
                out_block: ob,
                words: tile_in(ib) * tile_out(ob),
            };
            instructions.push(Instruction::LoadInputs { layer, words: d_in });
            let compute = match order {
                LoopOrder::OutputMajor => {
                    for ob in 0..n_out {
                        for ib in 0..n_in {
                            instructions.push(load(ib, ob));
                            instructions.push(Instruction::MatMul { in_block: ib, out_block: ob });
                        }
                        instructions.push(Instruction::Reduce { out_block: ob, depth });
                        instructions.push(Instruction::Alu { out_block: ob, lanes: tile_out(ob) });
                    }
                    layer_cycles(d_in, d_out, config)?
                }
                LoopOrder::InputMajor => {
                    for ib in 0..n_in {
                        for ob in 0..n_out {
                            instructions.push(load(ib, ob));
                            instructions.push(Instruction::MatMul { in_block: ib, out_block: ob });
                            instructions.push(Instruction::Reduce { out_block: ob, depth });
                        }
                    }
                    for ob in 0..n_out {
                        instructions.push(Instruction::Alu { out_block: ob, lanes: tile_out(ob) });
                    }
                    (n_in * n_out * (1 + depth)) as u64
                }
            };
            instructions.push(Instruction::Store { layer, words: d_out });
            cycles += compute.max(config.transfer_cycles(d_in * d_out));
        }
        Ok(Self {
            shape: shape.clone(),
            config: *config,
            orders: vec![order; shape.layer_count()],
            instructions,
            cycles,
        })
    }

    pub fn micros(&self) -> f64 {
        self.config.micros(self.cycles)
    }
}

#[derive(Default)]
struct OpenLayer {
    layer: usize,
    array: u64,
    words: usize,
    loaded: HashSet<(usize, usize)>,
    pending: HashSet<usize>,
}

/// Replays `schedule.instructions`.
///
/// Within a layer the array and the DRAM channel run concurrently (double
/// buffering), so a layer costs `max(array cycles, transfer cycles)`.
/// Layers are separated by a barrier. A stream that uses a tile before
/// loading it, loads a weight twice, leaves partial sums undrained, or does
/// not load every weight of a layer is rejected.
pub fn simulate(schedule: &Schedule) -> Result<u64, PerfError> {
    let cfg = &schedule.config;
    let dims: Vec<(usize, usize)> = schedule.shape.layers().collect();
    let mut open: Option<OpenLayer> = None;
    let mut next_layer = 0;
    let mut total = 0u64;
    let bad = |index: usize, reason: String| PerfError::Malformed { index, reason };

    for (index, ins) in schedule.instructions.iter().enumerate() {
        if let Instruction::LoadInputs { layer, .. } = ins {
            if open.is_some() {
                return Err(bad(index, "layer opened twice".into()));
            }
            if *layer != next_layer || *layer >= dims.len() {
                return Err(bad(index, format!("expected layer {next_layer}, found {layer}")));
            }
            open = Some(OpenLayer { layer: *layer, ..OpenLayer::default() });
            continue;
        }
        let Some(cur) = open.as_mut() else {
            return Err(bad(index, "instruction outside a layer".into()));
        };
        match ins {
            Instruction::LoadInputs { .. } => unreachable!(),
            Instruction::LoadWeights { in_block, out_block, words } => {
                if !cur.loaded.insert((*in_block, *out_block)) {
                    return Err(bad(index, format!("tile ({in_block}, {out_block}) loaded twice")));
                }
                cur.words += words;
            }
            Instruction::MatMul { in_block, out_block } => {
                if !cur.loaded.contains(&(*in_block, *out_block)) {
                    return Err(bad(index, format!("tile ({in_block}, {out_block}) not resident")));
                }
                cur.array += 1;
                cur.pending.insert(*out_block);
            }
            Instruction::Reduce { out_block, depth } => {
                if !cur.pending.remove(out_block) {
                    return Err(bad(index, format!("nothing to drain for output block {out_block}")));
                }
                cur.array += *depth as u64;
            }
            Instruction::Alu { .. } => {}
            Instruction::Store { layer, .. } => {
                if *layer != cur.layer {
                    return Err(bad(index, format!("store for layer {layer} inside layer {}", cur.layer)));
                }
                if !cur.pending.is_empty() {
                    return Err(bad(index, "undrained partial sums".into()));
                }
                let (d_in, d_out) = dims[cur.layer];
                if cur.words != d_in * d_out {
                    return Err(bad(index, format!("loaded {} of {} weights", cur.words, d_in * d_out)));
                }
                total += cur.array.max(cfg.transfer_cycles(cur.words));
                open = None;
                next_layer += 1;
            }
        }
    }
    if open.is_some() {
        return Err(bad(schedule.instructions.len(), "unterminated layer".into()));
    }
    if next_layer != 0 && next_layer != dims.len() {
        return Err(bad(schedule.instructions.len(), format!("{next_layer} of {} layers scheduled", dims.len())));
    }
    Ok(total)
}

/// One point of the search space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub w_sys: usize,
    pub h_sys: usize,
    pub order: LoopOrder,
}

/// Every power-of-two `w_sys ≤ pe_budget` with `h_sys = pe_budget / w_sys`,
/// under both loop orders.
pub fn candidates(pe_budget: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut w = 1;
    while w <= pe_budget {
        for order in [LoopOrder::OutputMajor, LoopOrder::InputMajor] {
            out.push(Candidate { w_sys: w, h_sys: pe_budget / w, order });
        }
        w *= 2;
    }
    out
}

/// Exhaustive search for the fastest schedule. Ties go to the wider array,
/// then to output-major order.
pub fn compile(shape: &NetworkShape, base: &SystolicConfig, candidates: &[Candidate]) -> Result<Schedule, PerfError> {
    let mut best: Option<Schedule> = None;
    for c in candidates {
        let cfg = SystolicConfig { w_sys: c.w_sys, h_sys: c.h_sys, ..*base };
        let s = Schedule::build(shape, &cfg, c.order)?;
        let better = match &best {
            None => true,
            Some(b) => {
                let key = |s: &Schedule| {
                    (s.cycles, std::cmp::Reverse(s.config.w_sys), s.orders.first() != Some(&LoopOrder::OutputMajor))
                };
                key(&s) < key(b)
            }
        };
        if better {
            best = Some(s);
        }
    }
    best.ok_or(PerfError::EmptyCandidates)
}

/// Candidates whose latency lies within `rel_tol` of `target_us`.
pub fn match_latency(
    shape: &NetworkShape,
    base: &SystolicConfig,
    candidates: &[Candidate],
    target_us: f64,
    rel_tol: f64,
) -> Result<Vec<(Candidate, f64)>, PerfError> {
    let mut hits = Vec::new();
    for c in candidates {
        let cfg = SystolicConfig { w_sys: c.w_sys, h_sys: c.h_sys, ..*base };
        let us = Schedule::build(shape, &cfg, c.order)?.micros();
        if ((us - target_us) / target_us).abs() <= rel_tol {
            hits.push((*c, us));
        }
    }
    Ok(hits)
}
