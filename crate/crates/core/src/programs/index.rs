use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{ProblemInstance, SlotTable};

/// Who a block of variables belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Owner {
    /// Duopoly player, 0-based.
    Rsp(usize),
    /// Single provider with one pooled fleet.
    Monopoly,
    /// Vehicle set of the partitioned monopoly, 0-based.
    Set(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Price,
    /// Demand served by a vehicle set (partitioned monopoly only).
    Served,
    Routing,
    /// Vehicles available at a node after a slot.
    State,
}

/// A contiguous run of columns laid out row-major over `(edge or node, slot)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub owner: Owner,
    pub kind: VarKind,
    pub scenario: Option<usize>,
    pub offset: usize,
    /// Edges for prices, served demand and routing; nodes for states.
    pub rows: usize,
    pub horizon: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn column(&self, row: usize, slot: usize) -> usize {
        debug_assert!(row < self.rows && slot < self.horizon);
        self.offset + row * self.horizon + slot
    }
}

/// Bijection between model variables and program columns.
///
/// Columns are grouped in blocks appended in assembly order; within a block
/// they run over edges (or nodes) in the network's edge order, then slots.
/// The assembly order is owner by owner and, for each owner, price, served,
/// routing, then state blocks (states per scenario in scenario order).
#[derive(Debug, Clone, PartialEq)]
pub struct VariableIndex {
    blocks: Vec<Block>,
    edges: Vec<(usize, usize)>,
    node_count: usize,
    horizon: usize,
    total: usize,
}

impl VariableIndex {
    pub fn new(instance: &ProblemInstance) -> Self {
        Self {
            blocks: Vec::new(),
            edges: instance.network.edges().to_vec(),
            node_count: instance.network.node_count(),
            horizon: instance.horizon,
            total: 0,
        }
    }

    /// Appends a block and returns its offset.
    pub fn push(&mut self, owner: Owner, kind: VarKind, scenario: Option<usize>) -> usize {
        assert!(self.find_block(owner, kind, scenario).is_none(), "duplicate block");
        let rows = match kind {
            VarKind::State => self.node_count,
            _ => self.edges.len(),
        };
        let block = Block {
            owner,
            kind,
            scenario,
            offset: self.total,
            rows,
            horizon: self.horizon,
        };
        self.total += block.len();
        self.blocks.push(block);
        self.total - rows * self.horizon
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn find_block(&self, owner: Owner, kind: VarKind, scenario: Option<usize>) -> Option<&Block> {
        self.blocks
            .iter()
            .find(|b| b.owner == owner && b.kind == kind && b.scenario == scenario)
    }

    /// Block lookup that panics when the block is absent; assembly code only
    /// asks for blocks it created.
    pub fn block(&self, owner: Owner, kind: VarKind, scenario: Option<usize>) -> &Block {
        self.find_block(owner, kind, scenario)
            .unwrap_or_else(|| panic!("no {kind:?} block for {owner:?} (scenario {scenario:?})"))
    }

    pub fn column(&self, owner: Owner, kind: VarKind, scenario: Option<usize>, row: usize, slot: usize) -> usize {
        self.block(owner, kind, scenario).column(row, slot)
    }

    /// Block and in-block coordinates of a column.
    pub fn locate(&self, col: usize) -> Option<(&Block, usize, usize)> {
        let b = self
            .blocks
            .iter()
            .find(|b| col >= b.offset && col < b.offset + b.len())?;
        let local = col - b.offset;
        Some((b, local / b.horizon, local % b.horizon))
    }

    /// Human-readable name, 1-based for players, sets, slots and scenarios;
    /// nodes keep their 0-based ids.
    pub fn name(&self, col: usize) -> String {
        let Some((b, row, slot)) = self.locate(col) else {
            return format!("col{col}");
        };
        let symbol = match b.kind {
            VarKind::Price => "p",
            VarKind::Served => "dhat",
            VarKind::Routing => "u",
            VarKind::State => "x",
        };
        let mut parts = Vec::with_capacity(5);
        match b.owner {
            Owner::Rsp(i) | Owner::Set(i) => parts.push((i + 1).to_string()),
            Owner::Monopoly => {}
        }
        if b.kind == VarKind::State {
            parts.push(row.to_string());
        } else {
            let (j, l) = self.edges[row];
            parts.push(j.to_string());
            parts.push(l.to_string());
        }
        parts.push((slot + 1).to_string());
        if let Some(m) = b.scenario {
            parts.push((m + 1).to_string());
        }
        format!("{symbol}[{}]", parts.join(","))
    }

    /// Copies a block out of a solution vector.
    pub fn table(&self, owner: Owner, kind: VarKind, scenario: Option<usize>, x: &[f64]) -> SlotTable<f64> {
        let b = self.block(owner, kind, scenario);
        SlotTable::from_fn(b.rows, b.horizon, |r, s| x[b.column(r, s)])
    }

    /// Writes a table into a solution vector.
    pub fn store(&self, owner: Owner, kind: VarKind, scenario: Option<usize>, table: &SlotTable<f64>, x: &mut [f64]) {
        let b = self.block(owner, kind, scenario);
        assert_eq!((table.edges(), table.horizon()), (b.rows, b.horizon));
        for r in 0..b.rows {
            for s in 0..b.horizon {
                x[b.column(r, s)] = table.get(r, s);
            }
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Rsp(i) => write!(f, "RSP {}", i + 1),
            Owner::Monopoly => write!(f, "monopoly"),
            Owner::Set(i) => write!(f, "vehicle set {}", i + 1),
        }
    }
}
