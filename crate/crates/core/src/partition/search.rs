//! Index-based form of a partition problem and the exact search over it.

use std::cmp::Ordering;

use super::{cmp_scalar, PartitionError, PartitionProblem};
use crate::model::{Placement, TierChain};
use crate::perf::{crossing_weight, PerfError};
use crate::scalar::Scalar;

#[derive(Clone)]
struct Link<T> {
    from: usize,
    to: usize,
    /// Crossing seconds indexed `[from rank][to rank]`.
    cross: Vec<Vec<T>>,
}

#[derive(Clone)]
struct Pipe<T> {
    verts: Vec<usize>,
    /// Index into `links` for each consecutive pair of `verts`.
    hops: Vec<usize>,
    constraint: T,
}

#[derive(Clone)]
pub(crate) struct Compiled<T> {
    ids: Vec<String>,
    domains: Vec<Vec<usize>>,
    /// Raw vertex weight `T × P` per rank; `None` where the vertex cannot run.
    weight: Vec<Vec<Option<T>>>,
    service: Vec<Vec<Option<T>>>,
    c_edge: T,
    c_cloud: T,
    links: Vec<Link<T>>,
    pipes: Vec<Pipe<T>>,
    /// Vertex indices sorted by id, for the final tie-break.
    by_id: Vec<usize>,
}

/// Everything the tie-break needs about one complete assignment.
pub(crate) struct Eval<T> {
    pub cost: T,
    pub max_latency: T,
    /// Largest `latency - constraint`; non-positive iff feasible.
    pub excess: T,
    pub cuts: usize,
    pub feasible: bool,
}

impl<T: Scalar> Compiled<T> {
    pub fn new(problem: &PartitionProblem<T>) -> Result<Self, PartitionError> {
        let app = &problem.app;
        let tiers = &problem.tiers;
        let n = tiers.len();
        let ids: Vec<String> = app.microservices.iter().map(|m| m.id.clone()).collect();
        let index = |id: &str| ids.iter().position(|m| m == id).expect("validated");

        let mut weight = Vec::new();
        let mut service = Vec::new();
        let mut domains = Vec::new();
        for ms in &app.microservices {
            let mut w = vec![None; n];
            let mut s = vec![None; n];
            let mut d = Vec::new();
            for (r, t) in tiers.tiers().iter().enumerate() {
                if ms.can_run_at(&t.id) {
                    let st = ms.service_time[&t.id];
                    s[r] = Some(st);
                    w[r] = Some(st * t.price_rate);
                    d.push(r);
                }
            }
            weight.push(w);
            service.push(s);
            domains.push(d);
        }

        let mut links = Vec::new();
        for l in &app.links {
            let mut cross = vec![vec![T::zero(); n]; n];
            for (a, row) in cross.iter_mut().enumerate() {
                for (b, cell) in row.iter_mut().enumerate() {
                    if a != b {
                        *cell = crossing_weight(l, tiers, &problem.net, a, b)?;
                    }
                }
            }
            links.push(Link {
                from: index(&l.from),
                to: index(&l.to),
                cross,
            });
        }

        let mut pipes = Vec::new();
        for p in &app.pipelines {
            let hops = p
                .hops()
                .map(|(a, b)| {
                    app.links
                        .iter()
                        .position(|l| l.from == a && l.to == b)
                        .ok_or_else(|| {
                            PerfError::Model(crate::model::ModelError::InvalidPlacement(format!(
                                "pipeline {} uses undeclared link ({a},{b})",
                                p.id
                            )))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            pipes.push(Pipe {
                verts: p.path.iter().map(|m| index(m)).collect(),
                hops,
                constraint: problem.constraints[&p.id],
            });
        }

        let mut by_id: Vec<usize> = (0..ids.len()).collect();
        by_id.sort_by(|&a, &b| ids[a].cmp(&ids[b]));

        Ok(Self {
            ids,
            domains,
            weight,
            service,
            c_edge: problem.weights.c_edge,
            c_cloud: problem.weights.c_cloud,
            links,
            pipes,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn domains(&self) -> &[Vec<usize>] {
        &self.domains
    }

    /// Same problem with each vertex restricted to `domains[v]`.
    pub fn with_domains(&self, domains: Vec<Vec<usize>>) -> Self {
        Self {
            domains,
            ..self.clone()
        }
    }

    pub fn placement(&self, tiers: &TierChain<T>, ranks: &[usize]) -> Placement {
        Placement::from_pairs(
            self.ids
                .iter()
                .zip(ranks)
                .map(|(id, &r)| (id.as_str(), tiers.at(r).id.as_str())),
        )
    }

    fn c_for(&self, rank: usize) -> T {
        if rank == 0 {
            self.c_edge
        } else {
            self.c_cloud
        }
    }

    /// Weighted cost of `v` at `rank`.
    fn vertex_cost(&self, v: usize, rank: usize) -> T {
        self.c_for(rank) * self.weight[v][rank].expect("rank in domain")
    }

    /// Same summation order as `perf::total_cost` and
    /// `perf::pipeline_latency`, so values agree bit for bit.
    pub fn evaluate(&self, ranks: &[usize]) -> Eval<T> {
        let mut edge = T::zero();
        let mut cloud = T::zero();
        for (v, &r) in ranks.iter().enumerate() {
            let w = self.weight[v][r].expect("rank in domain");
            if r == 0 {
                edge = edge + w;
            } else {
                cloud = cloud + w;
            }
        }
        let cost = self.c_edge * edge + self.c_cloud * cloud;

        let mut max_latency = T::zero();
        let mut excess: Option<T> = None;
        let mut feasible = true;
        for p in &self.pipes {
            let total = self.pipe_latency(p, ranks);
            if total > p.constraint {
                feasible = false;
            }
            let over = total - p.constraint;
            excess = Some(excess.map_or(over, |e: T| e.max_of(over)));
            max_latency = max_latency.max_of(total);
        }
        let cuts = self
            .links
            .iter()
            .filter(|l| ranks[l.from] != ranks[l.to])
            .count();
        Eval {
            cost,
            max_latency,
            excess: excess.unwrap_or_else(T::zero),
            cuts,
            feasible,
        }
    }

    fn pipe_latency(&self, p: &Pipe<T>, ranks: &[usize]) -> T {
        let mut edge = T::zero();
        let mut cloud = T::zero();
        for &v in &p.verts {
            let r = ranks[v];
            let t = self.service[v][r].expect("rank in domain");
            if r == 0 {
                edge = edge + t;
            } else {
                cloud = cloud + t;
            }
        }
        let mut comm = T::zero();
        for &h in &p.hops {
            let l = &self.links[h];
            let (a, b) = (ranks[l.from], ranks[l.to]);
            if a != b {
                comm = comm + l.cross[a][b];
            }
        }
        edge + cloud + comm
    }

    /// Total order on feasible assignments: cost, then worst pipeline
    /// latency, then number of cut links, then tier ranks by vertex id.
    pub fn cmp_feasible(&self, a: (&Eval<T>, &[usize]), b: (&Eval<T>, &[usize])) -> Ordering {
        cmp_scalar(a.0.cost, b.0.cost)
            .then_with(|| cmp_scalar(a.0.max_latency, b.0.max_latency))
            .then_with(|| a.0.cuts.cmp(&b.0.cuts))
            .then_with(|| self.cmp_lex(a.1, b.1))
    }

    /// Order used when nothing is feasible: smallest worst-case excess
    /// first, then the feasible order.
    pub fn cmp_infeasible(&self, a: (&Eval<T>, &[usize]), b: (&Eval<T>, &[usize])) -> Ordering {
        cmp_scalar(a.0.excess, b.0.excess).then_with(|| self.cmp_feasible(a, b))
    }

    /// Feasible beats infeasible; otherwise the matching order above.
    pub fn cmp_any(&self, a: (&Eval<T>, &[usize]), b: (&Eval<T>, &[usize])) -> Ordering {
        match (a.0.feasible, b.0.feasible) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => self.cmp_feasible(a, b),
            (false, false) => self.cmp_infeasible(a, b),
        }
    }

    fn cmp_lex(&self, a: &[usize], b: &[usize]) -> Ordering {
        for &v in &self.by_id {
            match a[v].cmp(&b[v]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn min_cost(&self, v: usize) -> T {
        self.domains[v]
            .iter()
            .map(|&r| self.vertex_cost(v, r))
            .reduce(|a, b| a.min_of(b))
            .expect("non-empty domain")
    }

    fn min_service(&self, v: usize) -> T {
        self.domains[v]
            .iter()
            .map(|&r| self.service[v][r].expect("rank in domain"))
            .reduce(|a, b| a.min_of(b))
            .expect("non-empty domain")
    }

    /// Vertex with the cheapest weighted cost at each position.
    pub fn cheapest(&self) -> Vec<usize> {
        (0..self.len())
            .map(|v| {
                *self.domains[v]
                    .iter()
                    .reduce(|a, b| {
                        if self.vertex_cost(v, *b) < self.vertex_cost(v, *a) {
                            b
                        } else {
                            a
                        }
                    })
                    .expect("non-empty domain")
            })
            .collect()
    }
}

/// Lower bounds are compared in `f64` with a small relative slack so that
/// rounding in the bound never prunes a subtree holding an optimum.
fn exceeds<T: Scalar>(bound: T, best: T) -> bool {
    let (b, x) = (bound.as_f64(), best.as_f64());
    b > x + 1e-9 * x.abs() + 1e-12
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Goal {
    Feasible,
    LeastExcess,
}

struct Search<'a, T> {
    c: &'a Compiled<T>,
    goal: Goal,
    order: Vec<usize>,
    /// `suffix[d]`: sum of cheapest weighted costs of `order[d..]`.
    suffix: Vec<T>,
    min_service: Vec<T>,
    /// Pipelines containing each vertex.
    member_of: Vec<Vec<usize>>,
    ranks: Vec<usize>,
    assigned: Vec<bool>,
    best: Option<(Eval<T>, Vec<usize>)>,
}

impl<T: Scalar> Search<'_, T> {
    /// Latency lower bound of pipeline `p` under the partial assignment.
    fn pipe_bound(&self, p: usize) -> T {
        let pipe = &self.c.pipes[p];
        let mut total = T::zero();
        for &v in &pipe.verts {
            total = total
                + if self.assigned[v] {
                    self.c.service[v][self.ranks[v]].expect("rank in domain")
                } else {
                    self.min_service[v]
                };
        }
        for &h in &pipe.hops {
            let l = &self.c.links[h];
            if self.assigned[l.from] && self.assigned[l.to] {
                let (a, b) = (self.ranks[l.from], self.ranks[l.to]);
                if a != b {
                    total = total + l.cross[a][b];
                }
            }
        }
        total
    }

    fn descend(&mut self, depth: usize, partial_cost: T) {
        if depth == self.order.len() {
            let eval = self.c.evaluate(&self.ranks);
            if self.goal == Goal::Feasible && !eval.feasible {
                return;
            }
            let better = match &self.best {
                None => true,
                Some((b, r)) => {
                    let ord = match self.goal {
                        Goal::Feasible => self.c.cmp_feasible((&eval, &self.ranks), (b, r)),
                        Goal::LeastExcess => self.c.cmp_infeasible((&eval, &self.ranks), (b, r)),
                    };
                    ord == Ordering::Less
                }
            };
            if better {
                self.best = Some((eval, self.ranks.clone()));
            }
            return;
        }
        let v = self.order[depth];
        let domain = self.c.domains[v].clone();
        for r in domain {
            self.ranks[v] = r;
            self.assigned[v] = true;
            let cost = partial_cost + self.c.vertex_cost(v, r);
            if self.prune(v, cost + self.suffix[depth + 1]) {
                continue;
            }
            self.descend(depth + 1, cost);
        }
        self.assigned[v] = false;
    }

    fn prune(&self, v: usize, cost_bound: T) -> bool {
        match self.goal {
            Goal::Feasible => {
                if let Some((b, _)) = &self.best {
                    if exceeds(cost_bound, b.cost) {
                        return true;
                    }
                }
                self.member_of[v].iter().any(|&p| {
                    let pipe = &self.c.pipes[p];
                    exceeds(self.pipe_bound(p), pipe.constraint)
                })
            }
            Goal::LeastExcess => match &self.best {
                None => false,
                Some((b, _)) => self.member_of[v].iter().any(|&p| {
                    let pipe = &self.c.pipes[p];
                    exceeds(self.pipe_bound(p) - pipe.constraint, b.excess)
                }),
            },
        }
    }
}

fn run<T: Scalar>(c: &Compiled<T>, goal: Goal) -> Option<Vec<usize>> {
    let n = c.len();
    // pipeline vertices first, in path order, so latency bounds bite early
    let mut order = Vec::with_capacity(n);
    for p in &c.pipes {
        for &v in &p.verts {
            if !order.contains(&v) {
                order.push(v);
            }
        }
    }
    for v in 0..n {
        if !order.contains(&v) {
            order.push(v);
        }
    }
    let mut suffix = vec![T::zero(); n + 1];
    for d in (0..n).rev() {
        suffix[d] = suffix[d + 1] + c.min_cost(order[d]);
    }
    let mut member_of = vec![Vec::new(); n];
    for (i, p) in c.pipes.iter().enumerate() {
        for &v in &p.verts {
            member_of[v].push(i);
        }
    }
    let mut s = Search {
        c,
        goal,
        order,
        suffix,
        min_service: (0..n).map(|v| c.min_service(v)).collect(),
        member_of,
        ranks: c.domains.iter().map(|d| d[0]).collect(),
        assigned: vec![false; n],
        best: None,
    };
    s.descend(0, T::zero());
    s.best.map(|(_, r)| r)
}

/// Optimal assignment by the feasible order, or the least-violating one by
/// the infeasible order when no assignment meets every constraint.
pub(crate) fn branch_and_bound<T: Scalar>(c: &Compiled<T>) -> Vec<usize> {
    run(c, Goal::Feasible)
        .or_else(|| run(c, Goal::LeastExcess))
        .expect("at least one complete assignment exists")
}

/// Every assignment in the domains, best first by [`Compiled::cmp_any`].
/// Only for tests and tiny graphs.
#[cfg(test)]
pub(crate) fn enumerate<T: Scalar>(c: &Compiled<T>) -> Vec<usize> {
    let n = c.len();
    let mut ranks: Vec<usize> = c.domains.iter().map(|d| d[0]).collect();
    let mut idx = vec![0usize; n];
    let mut best: Option<(Eval<T>, Vec<usize>)> = None;
    loop {
        let e = c.evaluate(&ranks);
        let better = best
            .as_ref()
            .map_or(true, |(b, r)| c.cmp_any((&e, &ranks), (b, r)) == Ordering::Less);
        if better {
            best = Some((e, ranks.clone()));
        }
        let mut k = 0;
        loop {
            if k == n {
                return best.expect("visited at least one").1;
            }
            idx[k] += 1;
            if idx[k] < c.domains[k].len() {
                ranks[k] = c.domains[k][idx[k]];
                break;
            }
            idx[k] = 0;
            ranks[k] = c.domains[k][0];
            k += 1;
        }
    }
}
