//! Assembly of the game programs into [`QuadraticProgram`](crate::qp::QuadraticProgram)s
//! over a shared variable index.

mod assemble;
mod index;
pub mod objectives;
mod scenarios;

pub use assemble::{
    assemble_best_response, assemble_monopoly, assemble_partitioned_monopoly, assemble_potential_game,
    assemble_stochastic_game, AssembledGame, Formulation,
};
pub use index::{Block, Owner, VarKind, VariableIndex};
pub use objectives::Strategy;
pub use scenarios::{ScaledScenario, Scenario, ScenarioSet, WEIGHT_SUM_TOL};

/// Row and bound tags naming the role of each constraint.
pub mod tags {
    use crate::qp::RowTag;

    pub const FLOW_BALANCE: RowTag = "flow balance";
    pub const FLEET_NONNEGATIVITY: RowTag = "fleet nonnegativity";
    pub const ROUTING_NONNEGATIVITY: RowTag = "routing nonnegativity";
    pub const PRICE_BOUNDS: RowTag = "price bounds";
    pub const DEMAND_NONNEGATIVITY: RowTag = "demand nonnegativity";
    pub const POOLED_FLOW_BALANCE: RowTag = "pooled flow balance";
    pub const POOLED_FLEET_NONNEGATIVITY: RowTag = "pooled fleet nonnegativity";
    pub const POOLED_ROUTING_NONNEGATIVITY: RowTag = "pooled routing nonnegativity";
    pub const SET_FLOW_BALANCE: RowTag = "vehicle-set flow balance";
    pub const SET_FLEET_NONNEGATIVITY: RowTag = "vehicle-set fleet nonnegativity";
    pub const SET_ROUTING_NONNEGATIVITY: RowTag = "vehicle-set routing nonnegativity";
    pub const SERVED_NONNEGATIVITY: RowTag = "served demand nonnegativity";
    pub const DEMAND_SPLIT: RowTag = "demand split";
    pub const SCENARIO_FLOW_BALANCE: RowTag = "scenario flow balance";
    pub const SCENARIO_FLEET_NONNEGATIVITY: RowTag = "scenario fleet nonnegativity";

    pub const ALL: &[RowTag] = &[
        FLOW_BALANCE,
        FLEET_NONNEGATIVITY,
        ROUTING_NONNEGATIVITY,
        PRICE_BOUNDS,
        DEMAND_NONNEGATIVITY,
        POOLED_FLOW_BALANCE,
        POOLED_FLEET_NONNEGATIVITY,
        POOLED_ROUTING_NONNEGATIVITY,
        SET_FLOW_BALANCE,
        SET_FLEET_NONNEGATIVITY,
        SET_ROUTING_NONNEGATIVITY,
        SERVED_NONNEGATIVITY,
        DEMAND_SPLIT,
        SCENARIO_FLOW_BALANCE,
        SCENARIO_FLEET_NONNEGATIVITY,
    ];
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::objectives::{monopoly_profit, potential, surrogate_profit};
    use super::*;
    use crate::fixtures;
    use crate::network::{build_two_cluster_instance, ProblemInstance, SlotTable, TwoClusterParams};
    use crate::qp::primal_residual;

    fn small_cluster() -> ProblemInstance {
        build_two_cluster_instance(&TwoClusterParams {
            n: 2,
            q: 0.3,
            demand_profile: vec![10.0, 4.0, 8.0],
            capacity: 30.0,
            ..TwoClusterParams::default()
        })
        .unwrap()
    }

    fn random_point(game: &AssembledGame, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..game.index.len())
            .map(|c| {
                let hi = game.program.upper[c].min(5.0);
                rng.gen_range(0.0..hi)
            })
            .collect()
    }

    fn strategy(game: &AssembledGame, owner: Owner, x: &[f64]) -> Strategy {
        Strategy {
            prices: game.index.table(owner, VarKind::Price, None, x),
            routing: game.index.table(owner, VarKind::Routing, None, x),
        }
    }

    /// Central differences of `f` at `x` along every coordinate.
    fn fd_gradient(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                y[k] = x[k] + h;
                let up = f(&y);
                y[k] = x[k] - h;
                let down = f(&y);
                y[k] = x[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], rel: f64) {
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            assert!(
                (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0),
                "entry {k}: {x} vs {y}"
            );
        }
    }

    #[test]
    fn first_slot_row_has_no_arrivals() {
        let inst = fixtures::single_pair(10.0, 0.0, 100.0).unwrap();
        let game = assemble_monopoly(&inst, false).unwrap();
        let eq = &game.program.equalities;
        assert_eq!(eq.len(), 2);
        let x0 = game.index.column(Owner::Monopoly, VarKind::State, None, 0, 0);
        let u = game.index.column(Owner::Monopoly, VarKind::Routing, None, 0, 0);
        let p = game.index.column(Owner::Monopoly, VarKind::Price, None, 0, 0);
        let (cols, vals) = eq.matrix.row(0);
        let row: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
        // x(0,1) + D(1 − p) + u = x₀(0)  →  x − 10 p + u = 50 − 10
        assert!(row.contains(&(x0, 1.0)) && row.contains(&(u, 1.0)) && row.contains(&(p, -10.0)));
        assert_eq!(row.len(), 3);
        assert_eq!(eq.rhs[0], 40.0);
    }

    #[test]
    fn second_slot_receives_departures_of_first() {
        let mut inst = fixtures::single_pair(10.0, 0.0, 100.0).unwrap();
        inst.horizon = 2;
        inst.travel.0 = SlotTable::filled(2, 2, 1);
        inst.demand = SlotTable::filled(2, 2, 10.0);
        inst.costs.ride = SlotTable::filled(2, 2, 0.0);
        inst.costs.reroute = SlotTable::filled(2, 2, 0.0);
        let game = assemble_monopoly(&inst, false).unwrap();
        let idx = &game.index;
        // Row of node 1, slot 2 is the fourth row (node-major, then slot).
        let (cols, _) = game.program.equalities.matrix.row(3);
        let u01 = idx.column(Owner::Monopoly, VarKind::Routing, None, 0, 0);
        let p01 = idx.column(Owner::Monopoly, VarKind::Price, None, 0, 0);
        assert!(cols.contains(&u01) && cols.contains(&p01));
    }

    #[test]
    fn potential_price_hessian_block() {
        let inst = fixtures::single_pair(40.0, 0.1, 100.0).unwrap();
        let game = assemble_potential_game(&inst).unwrap();
        let p1 = game.index.column(Owner::Rsp(0), VarKind::Price, None, 0, 0);
        let p2 = game.index.column(Owner::Rsp(1), VarKind::Price, None, 0, 0);
        let q = &game.program.quadratic;
        let entry = |r: usize, c: usize| {
            let (cols, vals) = q.row(r);
            cols.iter().position(|&k| k == c).map_or(0.0, |k| vals[k])
        };
        assert_eq!(entry(p1, p1), -80.0);
        assert_eq!(entry(p2, p2), -80.0);
        assert_eq!(entry(p1, p2), 20.0);
        assert_eq!(entry(p2, p1), 20.0);
    }

    #[test]
    fn zero_demand_pair_has_no_quadratic_terms() {
        let mut inst = fixtures::single_pair(40.0, 0.1, 100.0).unwrap();
        inst.demand.set(1, 0, 0.0);
        let game = assemble_potential_game(&inst).unwrap();
        let p1 = game.index.column(Owner::Rsp(0), VarKind::Price, None, 1, 0);
        assert!(game.program.quadratic.row(p1).0.is_empty());
        assert_eq!(game.program.linear[p1], 0.0);
        // One demand row per provider for the remaining pair.
        assert_eq!(game.program.inequalities.len(), 2);
    }

    #[test]
    fn assembled_objectives_match_written_out_forms() {
        let inst = small_cluster();
        let mut rng = ChaCha8Rng::seed_from_u64(7);

        let pot = assemble_potential_game(&inst).unwrap();
        let full = |x: &[f64]| {
            potential(
                &inst,
                &inst.demand,
                &[strategy(&pot, Owner::Rsp(0), x), strategy(&pot, Owner::Rsp(1), x)],
            )
        };
        for _ in 0..3 {
            let x = random_point(&pot, &mut rng);
            let direct = full(&x);
            assert!((pot.objective_value(&x) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            assert_close(&pot.program.gradient(&x), &fd_gradient(&x, full), 1e-6);
        }

        let rival = SlotTable::from_fn(inst.network.edge_count(), inst.horizon, |e, t| {
            ((e * 7 + t * 3) % 10) as f64 / 10.0
        });
        for i in 0..2 {
            let br = assemble_best_response(&inst, i, &rival).unwrap();
            let profit = |x: &[f64]| surrogate_profit(&inst, &inst.demand, &strategy(&br, Owner::Rsp(i), x), &rival);
            let x = random_point(&br, &mut rng);
            assert!((br.objective_value(&x) - profit(&x)).abs() <= 1e-9 * profit(&x).abs().max(1.0));
            assert_close(&br.program.gradient(&x), &fd_gradient(&x, profit), 1e-6);
        }

        let mono = assemble_monopoly(&inst, true).unwrap();
        let profit = |x: &[f64]| {
            let s = strategy(&mono, Owner::Monopoly, x);
            monopoly_profit(&inst, &s.prices, &[&s.routing])
        };
        let x = random_point(&mono, &mut rng);
        assert!((mono.objective_value(&x) - profit(&x)).abs() <= 1e-9 * profit(&x).abs().max(1.0));
        assert_close(&mono.program.gradient(&x), &fd_gradient(&x, profit), 1e-6);

        let part = assemble_partitioned_monopoly(&inst).unwrap();
        let profit = |x: &[f64]| {
            let p = part.index.table(Owner::Monopoly, VarKind::Price, None, x);
            let u1 = part.index.table(Owner::Set(0), VarKind::Routing, None, x);
            let u2 = part.index.table(Owner::Set(1), VarKind::Routing, None, x);
            monopoly_profit(&inst, &p, &[&u1, &u2])
        };
        let x = random_point(&part, &mut rng);
        assert!((part.objective_value(&x) - profit(&x)).abs() <= 1e-9 * profit(&x).abs().max(1.0));
        assert_close(&part.program.gradient(&x), &fd_gradient(&x, profit), 1e-6);
    }

    #[test]
    fn potential_price_derivative_matches_profit_derivative() {
        let inst = small_cluster();
        let pot = assemble_potential_game(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_point(&pot, &mut rng);
        let grad = pot.program.gradient(&x);
        for i in 0..2 {
            let rival = pot.index.table(Owner::Rsp(1 - i), VarKind::Price, None, &x);
            let br = assemble_best_response(&inst, i, &rival).unwrap();
            let mut y = vec![0.0; br.index.len()];
            for kind in [VarKind::Price, VarKind::Routing, VarKind::State] {
                let t = pot.index.table(Owner::Rsp(i), kind, None, &x);
                br.index.store(Owner::Rsp(i), kind, None, &t, &mut y);
            }
            let br_grad = br.program.gradient(&y);
            for kind in [VarKind::Price, VarKind::Routing] {
                let (a, b) = (
                    pot.index.block(Owner::Rsp(i), kind, None),
                    br.index.block(Owner::Rsp(i), kind, None),
                );
                for k in 0..a.len() {
                    let (ga, gb) = (grad[a.offset + k], br_grad[b.offset + k]);
                    assert!((ga - gb).abs() <= 1e-9 * ga.abs().max(1.0), "{ga} vs {gb}");
                }
            }
        }
    }

    #[test]
    fn witness_is_feasible_for_every_formulation() {
        let inst = small_cluster();
        let rival = SlotTable::filled(inst.network.edge_count(), inst.horizon, 0.3);
        let scenarios = ScenarioSet::scaled(&inst, &[(1.0, 0.25), (2.0, 0.75)]).unwrap();
        let games = vec![
            assemble_potential_game(&inst).unwrap(),
            assemble_best_response(&inst, 1, &rival).unwrap(),
            assemble_monopoly(&inst, true).unwrap(),
            assemble_monopoly(&inst, false).unwrap(),
            assemble_partitioned_monopoly(&inst).unwrap(),
            assemble_stochastic_game(&inst, &scenarios).unwrap(),
        ];
        for g in &games {
            let w = g.feasibility_witness(&inst);
            let (res, worst) = primal_residual(&g.program, &w).unwrap();
            assert!(res <= 1e-12, "{:?}: {res} at {worst:?}", g.formulation);
        }
    }

    #[test]
    fn every_row_carries_a_known_tag() {
        let inst = small_cluster();
        let scenarios = ScenarioSet::deterministic(&inst);
        for g in [
            assemble_potential_game(&inst).unwrap(),
            assemble_partitioned_monopoly(&inst).unwrap(),
            assemble_stochastic_game(&inst, &scenarios).unwrap(),
        ] {
            let p = &g.program;
            for tag in p
                .equalities
                .tags
                .iter()
                .chain(&p.inequalities.tags)
                .chain(&p.bound_tags)
            {
                assert!(tags::ALL.contains(tag), "unknown tag {tag}");
            }
        }
    }

    #[test]
    fn single_scenario_matches_potential_program() {
        let inst = small_cluster();
        let a = assemble_potential_game(&inst).unwrap();
        let b = assemble_stochastic_game(&inst, &ScenarioSet::deterministic(&inst)).unwrap();
        assert_eq!(a.program.quadratic, b.program.quadratic);
        assert_eq!(a.program.linear, b.program.linear);
        assert_eq!(a.program.equalities.matrix, b.program.equalities.matrix);
        assert_eq!(a.program.equalities.rhs, b.program.equalities.rhs);
        assert_eq!(a.program.inequalities.matrix, b.program.inequalities.matrix);
        assert_eq!(a.program.lower, b.program.lower);
        assert_eq!(a.program.upper, b.program.upper);
        assert_eq!(a.dropped_constant, b.dropped_constant);
    }

    #[test]
    fn scenario_weights_must_sum_to_one() {
        let inst = small_cluster();
        assert!(ScenarioSet::scaled(&inst, &[(1.0, 0.5), (2.0, 0.4)]).is_err());
        assert!(ScenarioSet::scaled(&inst, &[(1.0, 0.5), (2.0, 0.5)]).is_ok());
        let b =
            assemble_stochastic_game(&inst, &ScenarioSet::scaled(&inst, &[(1.0, 0.5), (2.0, 0.5)]).unwrap()).unwrap();
        // Expected demand 1.5·D drives the price curvature.
        let p = b.index.column(Owner::Rsp(0), VarKind::Price, None, 0, 0);
        let d = inst.demand.get(0, 0);
        let (cols, vals) = b.program.quadratic.row(p);
        let diag = vals[cols.iter().position(|&c| c == p).unwrap()];
        assert!((diag + 2.0 * 1.5 * d).abs() < 1e-12);
    }

    #[test]
    fn names_follow_the_documented_scheme() {
        let inst = fixtures::single_pair(10.0, 0.0, 100.0).unwrap();
        let g = assemble_potential_game(&inst).unwrap();
        assert_eq!(g.program.names[0], "p[1,0,1,1]");
        let x = g.index.column(Owner::Rsp(1), VarKind::State, None, 1, 0);
        assert_eq!(g.program.names[x], "x[2,1,1]");
        let part = assemble_partitioned_monopoly(&inst).unwrap();
        assert_eq!(part.program.names[2], "dhat[1,0,1,1]");
    }
}
