//! Recombining lattices driven by a homogeneous Markov kernel.
//!
//! The state after `t` steps is a vector of counters `z ∈ {0..t}^m`; each
//! move adds a 0/1 shift to the counters. Prices and auxiliary observables
//! are affine (or, for prices, exponential-affine) in `(t, z)`. Because the
//! one-step increments are identical up to scale at every node, the minimal
//! entropy kernel is the same everywhere and is computed once.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bsde::gkw_step;
use crate::error::{Error, Result};
use crate::lp;
use crate::math;
use crate::measures::entropic_projection;
use crate::tolerance::{PROBABILITY_FLOOR, PROBABILITY_SUM_TOL};
use crate::tree::{EventTree, Node};
use crate::valuation::one_step_primal;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LatticeMove {
    /// Counter increments, one 0/1 entry per factor.
    pub shift: Vec<u8>,
    pub p: f64,
}

/// `base + drift·t + loading·z`, exponentiated for geometric prices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FactorMap {
    pub base: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub drift: f64,
    pub loading: Vec<f64>,
}

impl FactorMap {
    fn exponent(&self, t: usize, z: &[usize]) -> f64 {
        self.drift * t as f64 + self.loading.iter().zip(z).map(|(l, c)| l * *c as f64).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LatticeSpec {
    pub steps: usize,
    pub factors: usize,
    pub moves: Vec<LatticeMove>,
    pub assets: Vec<FactorMap>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub aux: Vec<FactorMap>,
    /// Prices are `base·exp(drift·t + loading·z)` instead of affine.
    #[cfg_attr(feature = "serde", serde(default))]
    pub geometric: bool,
}

impl LatticeSpec {
    /// Two correlated random walks, the first traded with drift: a
    /// Bachelier asset `S` and a non-traded observable `X` (a standard
    /// Brownian approximation) with correlation `rho`, over `steps` steps to
    /// `maturity`.
    pub fn basis_risk(steps: usize, maturity: f64, s0: f64, mu: f64, sigma: f64, rho: f64) -> Self {
        let h = maturity / steps as f64;
        let sh = math::sqrt(h);
        let moves = [([1u8, 1u8], 1.0 + rho), ([1, 0], 1.0 - rho), ([0, 1], 1.0 - rho), ([0, 0], 1.0 + rho)]
            .iter()
            .map(|(s, w)| LatticeMove {
                shift: s.to_vec(),
                p: w / 4.0,
            })
            .collect();
        Self {
            steps,
            factors: 2,
            moves,
            assets: vec![FactorMap {
                base: s0,
                drift: mu * h - sigma * sh,
                loading: vec![2.0 * sigma * sh, 0.0],
            }],
            aux: vec![FactorMap {
                base: 0.0,
                drift: -sh,
                loading: vec![0.0, 2.0 * sh],
            }],
            geometric: false,
        }
    }
}

/// A validated lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        let m = spec.factors;
        let invalid = |reason: alloc::string::String| Error::InvalidTree { node: 0, reason };
        if spec.steps == 0 {
            return Err(invalid("lattice needs at least one step".into()));
        }
        if spec.moves.len() < 2 {
            return Err(invalid("lattice needs at least two moves".into()));
        }
        if spec.assets.is_empty() {
            return Err(invalid("lattice needs at least one asset".into()));
        }
        for (i, mv) in spec.moves.iter().enumerate() {
            if mv.shift.len() != m || mv.shift.iter().any(|s| *s > 1) {
                return Err(invalid(format!("move {} must shift each of the {} factors by 0 or 1", i, m)));
            }
            if !(mv.p >= PROBABILITY_FLOOR) {
                return Err(invalid(format!("move {} has probability {} below the floor", i, mv.p)));
            }
            if spec.moves[..i].iter().any(|o| o.shift == mv.shift) {
                return Err(invalid(format!("move {} repeats an earlier shift", i)));
            }
        }
        let sum: f64 = spec.moves.iter().map(|mv| mv.p).sum();
        if math::abs(sum - 1.0) > PROBABILITY_SUM_TOL {
            return Err(Error::ProbabilitySum { node: 0, sum });
        }
        for f in spec.assets.iter().chain(&spec.aux) {
            if f.loading.len() != m || !f.base.is_finite() || !f.drift.is_finite() || f.loading.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("factor map must have {} finite loadings", m)));
            }
        }
        if spec.geometric && spec.assets.iter().any(|a| !(a.base > 0.0)) {
            return Err(invalid("geometric prices need positive bases".into()));
        }
        let lattice = Self { spec };
        let z0 = vec![0; m];
        let inc = lattice.increments(0, &z0);
        if !lp::admits_positive_martingale(&inc, lattice.assets(), lattice.branching()) {
            return Err(Error::NoArbitrageViolated { node: 0 });
        }
        Ok(lattice)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.spec.steps
    }

    pub fn assets(&self) -> usize {
        self.spec.assets.len()
    }

    pub fn aux_dim(&self) -> usize {
        self.spec.aux.len()
    }

    pub fn branching(&self) -> usize {
        self.spec.moves.len()
    }

    pub fn reference_kernel(&self) -> Vec<f64> {
        self.spec.moves.iter().map(|mv| mv.p).collect()
    }

    /// Number of counter boxes at time `t`: `(t+1)^m`.
    pub fn slice_len(&self, t: usize) -> usize {
        (t + 1).pow(self.spec.factors as u32)
    }

    /// Counters of box index `idx` at time `t` (mixed radix `t+1`).
    pub fn state(&self, t: usize, mut idx: usize) -> Vec<usize> {
        let mut z = vec![0; self.spec.factors];
        for c in z.iter_mut() {
            *c = idx % (t + 1);
            idx /= t + 1;
        }
        z
    }

    pub fn index(&self, t: usize, z: &[usize]) -> usize {
        z.iter().rev().fold(0, |acc, c| acc * (t + 1) + c)
    }

    pub fn price(&self, t: usize, z: &[usize]) -> Vec<f64> {
        self.spec
            .assets
            .iter()
            .map(|a| {
                if self.spec.geometric {
                    a.base * math::exp(a.exponent(t, z))
                } else {
                    a.base + a.exponent(t, z)
                }
            })
            .collect()
    }

    pub fn aux(&self, t: usize, z: &[usize]) -> Vec<f64> {
        self.spec.aux.iter().map(|a| a.base + a.exponent(t, z)).collect()
    }

    fn child(&self, z: &[usize], mv: &LatticeMove) -> Vec<usize> {
        z.iter().zip(&mv.shift).map(|(c, s)| c + *s as usize).collect()
    }

    /// Row-major `k × d` price increments out of `(t, z)`.
    pub fn increments(&self, t: usize, z: &[usize]) -> Vec<f64> {
        let s = self.price(t, z);
        let mut out = Vec::with_capacity(self.branching() * self.assets());
        for mv in &self.spec.moves {
            let c = self.price(t + 1, &self.child(z, mv));
            out.extend(c.iter().zip(&s).map(|(a, b)| a - b));
        }
        out
    }

    /// The minimal entropy kernel, identical at every node.
    pub fn qe_kernel(&self) -> Result<Vec<f64>> {
        let z0 = vec![0; self.spec.factors];
        let k = self.branching();
        Ok(entropic_projection(&self.reference_kernel(), &self.increments(0, &z0), self.assets(), &vec![0.0; k])?.kernel)
    }

    /// Payoff evaluated on every terminal box.
    pub fn terminal_values(&self, payoff: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
        let n = self.steps();
        (0..self.slice_len(n))
            .map(|i| {
                let z = self.state(n, i);
                payoff(&self.price(n, &z), &self.aux(n, &z))
            })
            .collect()
    }

    /// Generic backward induction: `step(t, z, increments, continuation)`
    /// returns the node value. Returns the root value.
    pub fn backward(&self, terminal: Vec<f64>, mut step: impl FnMut(usize, &[usize], &[f64], &[f64]) -> Result<f64>) -> Result<f64> {
        let m = self.spec.factors;
        let k = self.branching();
        let constant_increments = if self.spec.geometric { None } else { Some(self.increments(0, &vec![0; m])) };
        let mut next = terminal;
        let mut cont = vec![0.0; k];
        let mut z = vec![0usize; m];
        let mut offsets = vec![0usize; k];
        for t in (0..self.steps()).rev() {
            let radix = t + 2;
            for (o, mv) in offsets.iter_mut().zip(&self.spec.moves) {
                *o = mv.shift.iter().rev().fold(0, |acc, s| acc * radix + *s as usize);
            }
            let mut cur = vec![0.0; self.slice_len(t)];
            z.iter_mut().for_each(|c| *c = 0);
            for slot in cur.iter_mut() {
                let base = z.iter().rev().fold(0, |acc, c| acc * radix + c);
                for (c, o) in cont.iter_mut().zip(&offsets) {
                    *c = next[base + o];
                }
                *slot = match &constant_increments {
                    Some(inc) => step(t, &z, inc, &cont)?,
                    None => step(t, &z, &self.increments(t, &z), &cont)?,
                };
                // Odometer increment in radix t + 1.
                for c in z.iter_mut() {
                    *c += 1;
                    if *c <= t {
                        break;
                    }
                    *c = 0;
                }
            }
            next = cur;
        }
        Ok(next[0])
    }

    /// `E_{Q^E}[B]`.
    pub fn expectation(&self, payoff: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
        let q = self.qe_kernel()?;
        self.backward(self.terminal_values(payoff), |_, _, _, cont| Ok(q.iter().zip(cont).map(|(a, b)| a * b).sum()))
    }

    /// Root value of the explicit BSDE scheme.
    pub fn scheme_root(&self, payoff: impl Fn(&[f64], &[f64]) -> f64, alpha: f64) -> Result<f64> {
        let q = self.qe_kernel()?;
        let d = self.assets();
        let k = self.branching();
        if self.spec.geometric {
            return self.backward(self.terminal_values(payoff), |_, _, inc, cont| {
                let s = gkw_step(&q, inc, d, cont);
                let pred: f64 = q.iter().zip(&s.dl).map(|(a, l)| a * l * l).sum();
                Ok(s.mean + 0.5 * alpha * pred)
            });
        }
        // Constant increments: the residual map v ↦ ΔL is one fixed k × k
        // matrix, obtained by projecting the unit vectors.
        let inc = self.increments(0, &vec![0; self.spec.factors]);
        let mut residual = vec![0.0; k * k];
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let s = gkw_step(&q, &inc, d, &e);
            for i in 0..k {
                residual[i * k + j] = s.dl[i];
            }
        }
        let mut dl = vec![0.0; k];
        self.backward(self.terminal_values(payoff), |_, _, _, cont| {
            let mean: f64 = q.iter().zip(cont).map(|(a, b)| a * b).sum();
            for (i, l) in dl.iter_mut().enumerate() {
                *l = residual[i * k..(i + 1) * k].iter().zip(cont).map(|(a, b)| a * b).sum();
            }
            let pred: f64 = q.iter().zip(&dl).map(|(a, l)| a * l * l).sum();
            Ok(mean + 0.5 * alpha * pred)
        })
    }

    /// Root value of the exact indifference recursion.
    pub fn exact_root(&self, payoff: impl Fn(&[f64], &[f64]) -> f64, alpha: f64) -> Result<f64> {
        let q = self.qe_kernel()?;
        let d = self.assets();
        self.backward(self.terminal_values(payoff), |t, z, inc, cont| {
            one_step_primal(&q, inc, d, cont, alpha, None)
                .map(|s| s.value)
                .map_err(|e| e.at_node(self.index(t, z)))
        })
    }

    /// Expand into a (non-recombining) event tree.
    pub fn to_tree(&self) -> Result<EventTree> {
        let k = self.branching();
        let n = self.steps();
        let total: usize = (0..=n as u32).map(|t| k.saturating_pow(t)).fold(0usize, |a, b| a.saturating_add(b));
        if total > 2_000_000 {
            return Err(Error::InvalidArgument(format!("lattice expands to {} nodes; too many for an explicit tree", total)));
        }
        let d = self.assets();
        let mut nodes = Vec::with_capacity(total);
        let mut states: Vec<Vec<usize>> = Vec::with_capacity(total);
        let mut prices = Vec::with_capacity(total * d);
        let mut aux = Vec::with_capacity(total * self.aux_dim());
        nodes.push(Node {
            time: 0,
            parent: None,
            first_child: 0,
            child_count: 0,
            prob: 1.0,
        });
        states.push(vec![0; self.spec.factors]);
        let mut id = 0;
        while id < nodes.len() {
            let t = nodes[id].time;
            let z = states[id].clone();
            prices.extend(self.price(t, &z));
            aux.extend(self.aux(t, &z));
            if t < n {
                nodes[id].first_child = nodes.len();
                nodes[id].child_count = k;
                for mv in &self.spec.moves {
                    nodes.push(Node {
                        time: t + 1,
                        parent: Some(id),
                        first_child: 0,
                        child_count: 0,
                        prob: mv.p,
                    });
                    states.push(self.child(&z, mv));
                }
            }
            id += 1;
        }
        Ok(EventTree::assemble(n, d, self.aux_dim(), nodes, prices, aux))
    }
}
