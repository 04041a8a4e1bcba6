use crate::error::{Error, Result};
use crate::network::{ProblemInstance, SlotTable, RSP_COUNT};
use crate::programs::index::{Block, Owner, VarKind, VariableIndex};
use crate::programs::scenarios::ScenarioSet;
use crate::programs::tags;
use crate::qp::{LinearExpr, QpBuilder, QuadraticProgram, RowTag};

/// Which program an [`AssembledGame`] holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Formulation {
    /// Joint maximization of the potential over both providers' strategies.
    Potential,
    /// One provider's best response to fixed rival prices.
    BestResponse { rsp: usize, rival_prices: SlotTable<f64> },
    /// Single provider; `merged` pools both fleets, otherwise the first fleet is used.
    Monopoly { merged: bool },
    /// Single provider that tracks which of the two vehicle sets serves each trip.
    PartitionedMonopoly,
    /// Potential game in expectation over demand scenarios.
    Stochastic { weights: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct AssembledGame {
    pub program: QuadraticProgram,
    pub index: VariableIndex,
    pub formulation: Formulation,
    /// Decision-independent objective term left out of the program. Zero except
    /// for potential programs.
    pub dropped_constant: f64,
}

impl AssembledGame {
    /// Program objective plus the dropped constant.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.program.objective(x) + self.dropped_constant
    }

    /// A point that is feasible by construction: prices where every demand
    /// vanishes, no rerouting, states equal to the initial placement.
    pub fn feasibility_witness(&self, instance: &ProblemInstance) -> Vec<f64> {
        let mut x = vec![0.0; self.index.len()];
        let pm = instance.p_max;
        for b in self.index.blocks() {
            for r in 0..b.rows {
                for t in 0..b.horizon {
                    let v = match b.kind {
                        VarKind::Price => match &self.formulation {
                            Formulation::BestResponse { rival_prices, .. } => {
                                (pm / 2.0 + rival_prices.get(r, t) / 2.0).min(pm)
                            }
                            _ => pm,
                        },
                        VarKind::State => initial_placement(instance, &self.formulation, b.owner)[r],
                        VarKind::Served | VarKind::Routing => 0.0,
                    };
                    x[b.column(r, t)] = v;
                }
            }
        }
        x
    }
}

fn initial_placement(instance: &ProblemInstance, formulation: &Formulation, owner: Owner) -> Vec<f64> {
    match owner {
        Owner::Rsp(i) | Owner::Set(i) => instance.fleets.initial_placement[i].clone(),
        Owner::Monopoly => match formulation {
            Formulation::Monopoly { merged: false } => instance.fleets.initial_placement[0].clone(),
            _ => instance.fleets.merged_placement(),
        },
    }
}

/// `(edge, departure slot)` pairs arriving at each node in each slot.
fn arrivals(instance: &ProblemInstance) -> Vec<Vec<Vec<(usize, usize)>>> {
    let net = &instance.network;
    let mut out = vec![vec![Vec::new(); instance.horizon]; net.node_count()];
    for e in 0..net.edge_count() {
        let (_, l) = net.edge(e);
        for t in 0..instance.horizon {
            if let Some(a) = instance.travel.arrival(e, t) {
                out[l][a].push((e, t));
            }
        }
    }
    out
}

struct Assembly<'a> {
    instance: &'a ProblemInstance,
    builder: QpBuilder,
    index: VariableIndex,
    arrivals: Vec<Vec<Vec<(usize, usize)>>>,
}

impl<'a> Assembly<'a> {
    fn new(instance: &'a ProblemInstance) -> Result<Self> {
        instance.ensure_valid()?;
        Ok(Self {
            instance,
            builder: QuadraticProgram::builder(),
            index: VariableIndex::new(instance),
            arrivals: arrivals(instance),
        })
    }

    fn block(&mut self, owner: Owner, kind: VarKind, scenario: Option<usize>) -> Block {
        let (lo, hi, tag) = match (kind, owner) {
            (VarKind::Price, _) => (0.0, self.instance.p_max, tags::PRICE_BOUNDS),
            (VarKind::Served, _) => (0.0, f64::INFINITY, tags::SERVED_NONNEGATIVITY),
            (VarKind::Routing, Owner::Rsp(_)) => (0.0, f64::INFINITY, tags::ROUTING_NONNEGATIVITY),
            (VarKind::Routing, Owner::Monopoly) => (0.0, f64::INFINITY, tags::POOLED_ROUTING_NONNEGATIVITY),
            (VarKind::Routing, Owner::Set(_)) => (0.0, f64::INFINITY, tags::SET_ROUTING_NONNEGATIVITY),
            (VarKind::State, Owner::Rsp(_)) if scenario.is_some() => {
                (0.0, f64::INFINITY, tags::SCENARIO_FLEET_NONNEGATIVITY)
            }
            (VarKind::State, Owner::Rsp(_)) => (0.0, f64::INFINITY, tags::FLEET_NONNEGATIVITY),
            (VarKind::State, Owner::Monopoly) => (0.0, f64::INFINITY, tags::POOLED_FLEET_NONNEGATIVITY),
            (VarKind::State, Owner::Set(_)) => (0.0, f64::INFINITY, tags::SET_FLEET_NONNEGATIVITY),
        };
        let offset = self.index.push(owner, kind, scenario);
        let block = self.index.block(owner, kind, scenario).clone();
        for col in offset..offset + block.len() {
            let got = self.builder.add_variable(self.index.name(col), lo, hi, tag);
            debug_assert_eq!(got, col);
        }
        block
    }

    fn edges(&self) -> usize {
        self.instance.network.edge_count()
    }

    fn horizon(&self) -> usize {
        self.instance.horizon
    }

    /// One balance row per node and slot:
    /// `x(j,t) = x(j,t−1) + arrivals − departures`, where each trip moves
    /// `demand_term(e,t) + u(e,t)` vehicles.
    fn flow_rows(
        &mut self,
        initial: &[f64],
        state: &Block,
        routing: &Block,
        demand_term: &dyn Fn(usize, usize) -> LinearExpr,
        tag: RowTag,
    ) {
        let net = &self.instance.network;
        for j in 0..net.node_count() {
            for t in 0..self.instance.horizon {
                let mut row = LinearExpr::var(state.column(j, t), 1.0);
                if t == 0 {
                    row.constant -= initial[j];
                } else {
                    row.add_term(state.column(j, t - 1), -1.0);
                }
                for &(e, tau) in &self.arrivals[j][t] {
                    row.add_scaled(&demand_term(e, tau), -1.0);
                    row.add_term(routing.column(e, tau), -1.0);
                }
                for &e in net.out_edges(j) {
                    row.add_scaled(&demand_term(e, t), 1.0);
                    row.add_term(routing.column(e, t), 1.0);
                }
                self.builder.add_equality(&row, tag);
            }
        }
    }

    fn reroute_costs(&mut self, routing: &Block, weight: f64) {
        for e in 0..self.edges() {
            for t in 0..self.horizon() {
                let c = self.instance.costs.reroute.get(e, t);
                self.builder.add_linear(routing.column(e, t), -weight * c);
            }
        }
    }

    fn finish(self, formulation: Formulation, dropped_constant: f64) -> Result<AssembledGame> {
        Ok(AssembledGame {
            program: self.builder.build()?,
            index: self.index,
            formulation,
            dropped_constant,
        })
    }
}

/// `D(1/2 − p_i/p_max + p_k/(2 p_max))` with both prices as columns.
fn duopoly_expr(base: f64, p_max: f64, own: usize, rival: usize) -> LinearExpr {
    let mut expr = LinearExpr::constant(base / 2.0);
    if base != 0.0 {
        expr.add_term(own, -base / p_max).add_term(rival, base / (2.0 * p_max));
    }
    expr
}

/// Same demand with a fixed rival price.
fn duopoly_expr_fixed(base: f64, p_max: f64, own: usize, rival_price: f64) -> LinearExpr {
    let mut expr = LinearExpr::constant(base / 2.0 + base * rival_price / (2.0 * p_max));
    if base != 0.0 {
        expr.add_term(own, -base / p_max);
    }
    expr
}

/// `D(1 − p/p_max)`
fn monopoly_expr(base: f64, p_max: f64, price: usize) -> LinearExpr {
    let mut expr = LinearExpr::constant(base);
    if base != 0.0 {
        expr.add_term(price, -base / p_max);
    }
    expr
}

/// `demand >= 0`, emitted only for trips with positive base demand.
fn demand_row(builder: &mut QpBuilder, expr: &LinearExpr, tag: RowTag) {
    let mut negated = LinearExpr::default();
    negated.add_scaled(expr, -1.0);
    builder.add_inequality(&negated, tag);
}

fn potential_objective(a: &mut Assembly, demand: &SlotTable<f64>, prices: [&Block; RSP_COUNT], weight: f64) {
    let pm = a.instance.p_max;
    for e in 0..a.edges() {
        for t in 0..a.horizon() {
            let d = weight * demand.get(e, t);
            if d == 0.0 {
                continue;
            }
            let c = a.instance.costs.ride.get(e, t);
            let (p1, p2) = (prices[0].column(e, t), prices[1].column(e, t));
            a.builder.add_product(p1, p2, d / (2.0 * pm));
            for p in [p1, p2] {
                a.builder.add_product(p, p, -d / pm);
                a.builder.add_linear(p, d / 2.0 + c * d / pm);
            }
        }
    }
}

fn decision_free_part(instance: &ProblemInstance, demand: &SlotTable<f64>, weight: f64) -> f64 {
    -(RSP_COUNT as f64) * weight * {
        let mut s = 0.0;
        for e in 0..instance.network.edge_count() {
            for t in 0..instance.horizon {
                s += instance.costs.ride.get(e, t) * demand.get(e, t) / 2.0;
            }
        }
        s
    }
}

/// Both providers' prices, routings and states under the potential objective,
/// with every flow, bound and demand-nonnegativity constraint of both.
pub fn assemble_potential_game(instance: &ProblemInstance) -> Result<AssembledGame> {
    let mut a = Assembly::new(instance)?;
    let mut blocks = Vec::new();
    for i in 0..RSP_COUNT {
        let p = a.block(Owner::Rsp(i), VarKind::Price, None);
        let u = a.block(Owner::Rsp(i), VarKind::Routing, None);
        let x = a.block(Owner::Rsp(i), VarKind::State, None);
        blocks.push((p, u, x));
    }
    let pm = instance.p_max;
    potential_objective(&mut a, &instance.demand, [&blocks[0].0, &blocks[1].0], 1.0);
    for (i, (p, u, x)) in blocks.iter().enumerate() {
        let (own, rival) = (p, &blocks[1 - i].0);
        a.reroute_costs(u, 1.0);
        let demand = &instance.demand;
        let term = |e: usize, t: usize| duopoly_expr(demand.get(e, t), pm, own.column(e, t), rival.column(e, t));
        a.flow_rows(&instance.fleets.initial_placement[i], x, u, &term, tags::FLOW_BALANCE);
        for e in 0..a.edges() {
            for t in 0..a.horizon() {
                if demand.get(e, t) > 0.0 {
                    demand_row(&mut a.builder, &term(e, t), tags::DEMAND_NONNEGATIVITY);
                }
            }
        }
    }
    let dropped = decision_free_part(instance, &instance.demand, 1.0);
    a.finish(Formulation::Potential, dropped)
}

/// Best response of provider `rsp` (0-based) to fixed rival prices. The
/// objective is the provider's profit with unclipped demand, constant included.
pub fn assemble_best_response(
    instance: &ProblemInstance,
    rsp: usize,
    rival_prices: &SlotTable<f64>,
) -> Result<AssembledGame> {
    if rsp >= RSP_COUNT {
        return Err(Error::InvalidArgument(format!("provider index {rsp} out of range")));
    }
    let mut a = Assembly::new(instance)?;
    if (rival_prices.edges(), rival_prices.horizon()) != (a.edges(), a.horizon()) {
        return Err(Error::DimensionMismatch(
            "rival price table does not match the instance".into(),
        ));
    }
    let pm = instance.p_max;
    if let Some(p) = rival_prices.values().iter().find(|p| !(**p >= 0.0 && **p <= pm)) {
        return Err(Error::InvalidArgument(format!("rival price {p} outside [0, {pm}]")));
    }
    let p = a.block(Owner::Rsp(rsp), VarKind::Price, None);
    let u = a.block(Owner::Rsp(rsp), VarKind::Routing, None);
    let x = a.block(Owner::Rsp(rsp), VarKind::State, None);
    let demand = &instance.demand;
    for e in 0..a.edges() {
        for t in 0..a.horizon() {
            let d = demand.get(e, t);
            if d == 0.0 {
                continue;
            }
            let c = instance.costs.ride.get(e, t);
            let pk = rival_prices.get(e, t);
            let col = p.column(e, t);
            // (p − c)·D(1/2 − p/pm + pk/(2pm))
            a.builder.add_product(col, col, -d / pm);
            a.builder.add_linear(col, d / 2.0 + pk * d / (2.0 * pm) + c * d / pm);
            a.builder.add_constant(-c * d * (0.5 + pk / (2.0 * pm)));
        }
    }
    a.reroute_costs(&u, 1.0);
    let term = |e: usize, t: usize| duopoly_expr_fixed(demand.get(e, t), pm, p.column(e, t), rival_prices.get(e, t));
    a.flow_rows(
        &instance.fleets.initial_placement[rsp],
        &x,
        &u,
        &term,
        tags::FLOW_BALANCE,
    );
    for e in 0..a.edges() {
        for t in 0..a.horizon() {
            if demand.get(e, t) > 0.0 {
                demand_row(&mut a.builder, &term(e, t), tags::DEMAND_NONNEGATIVITY);
            }
        }
    }
    a.finish(
        Formulation::BestResponse {
            rsp,
            rival_prices: rival_prices.clone(),
        },
        0.0,
    )
}

fn monopoly_objective(a: &mut Assembly, price: &Block) {
    let pm = a.instance.p_max;
    for e in 0..a.edges() {
        for t in 0..a.horizon() {
            let d = a.instance.demand.get(e, t);
            if d == 0.0 {
                continue;
            }
            let c = a.instance.costs.ride.get(e, t);
            let col = price.column(e, t);
            a.builder.add_product(col, col, -d / pm);
            a.builder.add_linear(col, d + c * d / pm);
            a.builder.add_constant(-c * d);
        }
    }
}

/// Single provider facing demand `D(1 − p/p_max)`. With `merged` the fleet is
/// both providers' vehicles combined; otherwise it is the first fleet.
pub fn assemble_monopoly(instance: &ProblemInstance, merged: bool) -> Result<AssembledGame> {
    let mut a = Assembly::new(instance)?;
    let p = a.block(Owner::Monopoly, VarKind::Price, None);
    let u = a.block(Owner::Monopoly, VarKind::Routing, None);
    let x = a.block(Owner::Monopoly, VarKind::State, None);
    monopoly_objective(&mut a, &p);
    a.reroute_costs(&u, 1.0);
    let formulation = Formulation::Monopoly { merged };
    let initial = initial_placement(instance, &formulation, Owner::Monopoly);
    let pm = instance.p_max;
    let demand = &instance.demand;
    let term = |e: usize, t: usize| monopoly_expr(demand.get(e, t), pm, p.column(e, t));
    a.flow_rows(&initial, &x, &u, &term, tags::POOLED_FLOW_BALANCE);
    a.finish(formulation, 0.0)
}

/// Monopoly whose vehicles stay labelled by the fleet they started in. Each
/// set has its own served demand, routing and states; the served demands of
/// the two sets add up to the monopoly demand.
pub fn assemble_partitioned_monopoly(instance: &ProblemInstance) -> Result<AssembledGame> {
    let mut a = Assembly::new(instance)?;
    let p = a.block(Owner::Monopoly, VarKind::Price, None);
    let mut sets = Vec::new();
    for s in 0..RSP_COUNT {
        let d = a.block(Owner::Set(s), VarKind::Served, None);
        let u = a.block(Owner::Set(s), VarKind::Routing, None);
        let x = a.block(Owner::Set(s), VarKind::State, None);
        sets.push((d, u, x));
    }
    monopoly_objective(&mut a, &p);
    let pm = instance.p_max;
    for e in 0..a.edges() {
        for t in 0..a.horizon() {
            // d̂¹ + d̂² − D(1 − p/pm) = 0
            let mut row = LinearExpr::default();
            row.add_scaled(&monopoly_expr(instance.demand.get(e, t), pm, p.column(e, t)), -1.0);
            for (d, _, _) in &sets {
                row.add_term(d.column(e, t), 1.0);
            }
            a.builder.add_equality(&row, tags::DEMAND_SPLIT);
        }
    }
    for (s, (d, u, x)) in sets.iter().enumerate() {
        a.reroute_costs(u, 1.0);
        let term = |e: usize, t: usize| LinearExpr::var(d.column(e, t), 1.0);
        a.flow_rows(
            &instance.fleets.initial_placement[s],
            x,
            u,
            &term,
            tags::SET_FLOW_BALANCE,
        );
    }
    a.finish(Formulation::PartitionedMonopoly, 0.0)
}

/// Potential game in expectation: prices and routings are chosen once, states
/// follow each scenario's demand, and every scenario's flow must be feasible.
pub fn assemble_stochastic_game(instance: &ProblemInstance, scenarios: &ScenarioSet) -> Result<AssembledGame> {
    let mut a = Assembly::new(instance)?;
    scenarios.check_shape(instance)?;
    let mut prices = Vec::new();
    let mut routing = Vec::new();
    let mut states = Vec::new();
    for i in 0..RSP_COUNT {
        prices.push(a.block(Owner::Rsp(i), VarKind::Price, None));
        routing.push(a.block(Owner::Rsp(i), VarKind::Routing, None));
        states.push(
            (0..scenarios.len())
                .map(|m| a.block(Owner::Rsp(i), VarKind::State, Some(m)))
                .collect::<Vec<_>>(),
        );
    }
    let pm = instance.p_max;
    let mut dropped = 0.0;
    for s in scenarios.scenarios() {
        potential_objective(&mut a, &s.demand, [&prices[0], &prices[1]], s.weight);
        dropped += decision_free_part(instance, &s.demand, s.weight);
    }
    for i in 0..RSP_COUNT {
        let (own, rival) = (&prices[i], &prices[1 - i]);
        a.reroute_costs(&routing[i], 1.0);
        for (m, s) in scenarios.scenarios().iter().enumerate() {
            let term = |e: usize, t: usize| duopoly_expr(s.demand.get(e, t), pm, own.column(e, t), rival.column(e, t));
            a.flow_rows(
                &instance.fleets.initial_placement[i],
                &states[i][m],
                &routing[i],
                &term,
                tags::SCENARIO_FLOW_BALANCE,
            );
        }
        // Demand nonnegativity reads p_i − p_k/2 <= p_max/2 whenever D > 0, so
        // one row per trip covers every scenario; it is written with the
        // largest scenario demand as coefficient scale.
        for e in 0..a.edges() {
            for t in 0..a.horizon() {
                let d = scenarios
                    .scenarios()
                    .iter()
                    .map(|s| s.demand.get(e, t))
                    .fold(0.0, f64::max);
                if d > 0.0 {
                    let expr = duopoly_expr(d, pm, own.column(e, t), rival.column(e, t));
                    demand_row(&mut a.builder, &expr, tags::DEMAND_NONNEGATIVITY);
                }
            }
        }
    }
    let weights = scenarios.scenarios().iter().map(|s| s.weight).collect();
    a.finish(Formulation::Stochastic { weights }, dropped)
}
