//! Dense complex tensors, pairwise contraction and greedy contraction planning.
//!
//! Tensors are stored row-major. A [`Network`] attaches integer labels to the
//! legs of its tensors: a label shared by two tensors is summed over, a label
//! carried by a single tensor stays open. Plans only depend on the label
//! structure, so a plan computed once can be replayed on networks whose
//! entries change (e.g. every energy evaluation of a fixed causal cone).

use std::collections::{BTreeMap, HashMap};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("zero-sized leg in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn scalar(v: C64) -> Self {
        Self { shape: Vec::new(), data: vec![v] }
    }

    /// Builds a tensor from a row-major matrix, splitting rows and columns
    /// into the given leg dimensions.
    pub fn from_matrix(rows: &[usize], cols: &[usize], data: Vec<C64>) -> Result<Self> {
        let shape = rows.iter().chain(cols).copied().collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn as_scalar(&self) -> Option<C64> {
        (self.shape.is_empty()).then(|| self.data[0])
    }

    pub fn conj(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, a: C64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    /// Axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rank(), "permutation rank mismatch");
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let rank = self.rank();
        let mut strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[offset]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                offset += src_strides[ax];
                if idx[ax] < shape[ax] {
                    break;
                }
                offset -= src_strides[ax] * shape[ax];
                idx[ax] = 0;
            }
        }
        Tensor { shape, data }
    }

    /// Checks `U^dagger U = 1` for the matrix whose rows are the first
    /// `out_legs` legs and whose columns are the remaining legs.
    pub fn is_unitary(&self, out_legs: usize, tol: f64) -> bool {
        let rows: usize = self.shape[..out_legs].iter().product();
        let cols: usize = self.shape[out_legs..].iter().product();
        for a in 0..cols {
            for b in 0..cols {
                let mut s = C64::new(0.0, 0.0);
                for r in 0..rows {
                    s += self.data[r * cols + a].conj() * self.data[r * cols + b];
                }
                let want = if a == b { 1.0 } else { 0.0 };
                if (s - want).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Row-major `(m x k) * (k x n)`.
pub(crate) fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip.re == 0.0 && aip.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// Contracts `a` and `b` over the given `(axis_of_a, axis_of_b)` pairs.
///
/// The result carries the free axes of `a` followed by the free axes of `b`,
/// each in their original order.
pub fn contract_pair(a: &Tensor, b: &Tensor, shared: &[(usize, usize)]) -> Result<Tensor> {
    for &(ia, ib) in shared {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(Error::Dimension(format!("axis pair ({ia}, {ib}) out of range")));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::Dimension(format!(
                "axis {ia} of lhs has dim {} but axis {ib} of rhs has dim {}",
                a.shape[ia], b.shape[ib]
            )));
        }
    }
    let sa: Vec<usize> = shared.iter().map(|p| p.0).collect();
    let sb: Vec<usize> = shared.iter().map(|p| p.1).collect();
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !sa.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !sb.contains(i)).collect();

    let perm_a: Vec<usize> = free_a.iter().chain(&sa).copied().collect();
    let perm_b: Vec<usize> = sb.iter().chain(&free_b).copied().collect();
    let at = a.permute(&perm_a);
    let bt = b.permute(&perm_b);
    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = sa.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let data = matmul(&at.data, &bt.data, m, k, n);
    let shape = free_a.iter().map(|&i| a.shape[i]).chain(free_b.iter().map(|&i| b.shape[i])).collect();
    Ok(Tensor { shape, data })
}

pub type Label = usize;

/// One pairwise contraction of a plan. Inputs are numbered `0..n`, the
/// result of step `s` gets id `n + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub lhs: usize,
    pub rhs: usize,
    pub shared: Vec<Label>,
    pub out_labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionPlan {
    pub num_inputs: usize,
    pub steps: Vec<PlanStep>,
    /// Labels of the final tensor, in the order the plan produces them.
    pub output_labels: Vec<Label>,
    /// Largest tensor (number of entries) produced along the way.
    pub peak_size: usize,
    /// Complex multiply-adds spent on pairwise products.
    pub cost: f64,
}

impl ContractionPlan {
    pub fn output_id(&self) -> usize {
        if self.steps.is_empty() {
            0
        } else {
            self.num_inputs + self.steps.len() - 1
        }
    }
}

/// Greedy plan over a label structure: repeatedly contract the connected pair
/// whose result is smallest. Disconnected components are joined by outer
/// products once nothing shares a label any more.
pub fn greedy_plan(labels: &[Vec<Label>], dims: &HashMap<Label, usize>) -> Result<ContractionPlan> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty network".into()));
    }
    let mut count: HashMap<Label, usize> = HashMap::new();
    for ls in labels {
        for l in ls {
            if !dims.contains_key(l) {
                return Err(Error::InvalidInput(format!("label {l} has no dimension")));
            }
            *count.entry(*l).or_default() += 1;
        }
    }
    if let Some((l, c)) = count.iter().find(|(_, &c)| c > 2) {
        return Err(Error::InvalidInput(format!("label {l} appears {c} times")));
    }

    let size_of = |ls: &[Label]| -> usize { ls.iter().map(|l| dims[l]).product() };
    let mut active: BTreeMap<usize, Vec<Label>> = labels.iter().cloned().enumerate().collect();
    let mut owners: HashMap<Label, Vec<usize>> = HashMap::new();
    for (i, ls) in labels.iter().enumerate() {
        for &l in ls {
            owners.entry(l).or_default().push(i);
        }
    }
    let mut peak = labels.iter().map(|ls| size_of(ls)).max().unwrap_or(1);
    let mut steps = Vec::new();
    let mut cost = 0.0;
    let mut next_id = n;

    while active.len() > 1 {
        // (result size, size change, lhs, rhs)
        let mut best: Option<(usize, i64, usize, usize)> = None;
        for (&a, la) in &active {
            let mut partners: Vec<usize> = la
                .iter()
                .flat_map(|l| owners[l].iter().copied())
                .filter(|&b| b > a && active.contains_key(&b))
                .collect();
            partners.sort_unstable();
            partners.dedup();
            for b in partners {
                let lb = &active[&b];
                let shared: usize = la.iter().filter(|l| lb.contains(l)).map(|l| dims[l]).product();
                let sa = size_of(la);
                let sb = size_of(lb);
                let out = sa / shared * (sb / shared);
                let delta = out as i64 - sa as i64 - sb as i64;
                let key = (out, delta, a, b);
                if best.map_or(true, |bk| key < bk) {
                    best = Some(key);
                }
            }
        }
        let (a, b) = match best {
            Some((_, _, a, b)) => (a, b),
            None => {
                // nothing connected: outer product of the two smallest
                let mut ids: Vec<(usize, usize)> =
                    active.iter().map(|(&i, ls)| (size_of(ls), i)).collect();
                ids.sort_unstable();
                let (x, y) = (ids[0].1, ids[1].1);
                (x.min(y), x.max(y))
            }
        };
        let la = active.remove(&a).unwrap();
        let lb = active.remove(&b).unwrap();
        let shared: Vec<Label> = la.iter().filter(|l| lb.contains(l)).copied().collect();
        let out_labels: Vec<Label> = la
            .iter()
            .filter(|l| !shared.contains(l))
            .chain(lb.iter().filter(|l| !shared.contains(l)))
            .copied()
            .collect();
        let out_size = size_of(&out_labels);
        cost += (out_size * size_of(&shared)) as f64;
        peak = peak.max(out_size);
        for l in &out_labels {
            let o = owners.get_mut(l).unwrap();
            for x in o.iter_mut() {
                if *x == a || *x == b {
                    *x = next_id;
                }
            }
        }
        active.insert(next_id, out_labels.clone());
        steps.push(PlanStep { lhs: a, rhs: b, shared, out_labels });
        next_id += 1;
    }
    let output_labels = active.into_values().next().unwrap();
    Ok(ContractionPlan { num_inputs: n, steps, output_labels, peak_size: peak, cost })
}

/// Contracts every label the two labelled tensors have in common.
pub fn contract_labeled(
    a: &Tensor,
    la: &[Label],
    b: &Tensor,
    lb: &[Label],
) -> Result<(Tensor, Vec<Label>)> {
    let pairs: Vec<(usize, usize)> = la
        .iter()
        .enumerate()
        .filter_map(|(i, l)| lb.iter().position(|m| m == l).map(|j| (i, j)))
        .collect();
    let t = contract_pair(a, b, &pairs)?;
    let labels = la
        .iter()
        .filter(|l| !lb.contains(l))
        .chain(lb.iter().filter(|l| !la.contains(l)))
        .copied()
        .collect();
    Ok((t, labels))
}

/// Reorders the legs of a labelled tensor to `target`.
pub fn permute_to(t: &Tensor, labels: &[Label], target: &[Label]) -> Result<Tensor> {
    if labels.len() != target.len() {
        return Err(Error::Dimension(format!("cannot permute {labels:?} to {target:?}")));
    }
    let perm = target
        .iter()
        .map(|l| {
            labels
                .iter()
                .position(|m| m == l)
                .ok_or_else(|| Error::Dimension(format!("label {l} not among {labels:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(t.permute(&perm))
}

/// A collection of tensors with labelled legs.
#[derive(Debug, Clone, Default)]
pub struct Network {
    tensors: Vec<Tensor>,
    labels: Vec<Vec<Label>>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Tensor, labels: Vec<Label>) -> Result<usize> {
        if t.rank() != labels.len() {
            return Err(Error::Dimension(format!(
                "tensor of rank {} given {} labels",
                t.rank(),
                labels.len()
            )));
        }
        self.tensors.push(t);
        self.labels.push(labels);
        Ok(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn set_tensor(&mut self, i: usize, t: Tensor) {
        assert_eq!(t.shape(), self.tensors[i].shape(), "replacement must keep the shape");
        self.tensors[i] = t;
    }

    pub fn labels(&self) -> &[Vec<Label>] {
        &self.labels
    }

    fn dims(&self) -> Result<HashMap<Label, usize>> {
        let mut dims = HashMap::new();
        for (t, ls) in self.tensors.iter().zip(&self.labels) {
            for (&l, &d) in ls.iter().zip(t.shape()) {
                if let Some(&old) = dims.get(&l) {
                    if old != d {
                        return Err(Error::Dimension(format!(
                            "label {l} has dims {old} and {d}"
                        )));
                    }
                }
                dims.insert(l, d);
            }
        }
        Ok(dims)
    }

    pub fn plan_greedy(&self) -> Result<ContractionPlan> {
        greedy_plan(&self.labels, &self.dims()?)
    }

    fn check_plan(&self, plan: &ContractionPlan) -> Result<()> {
        if plan.num_inputs != self.len() {
            return Err(Error::InvalidInput(format!(
                "plan expects {} tensors, network has {}",
                plan.num_inputs,
                self.len()
            )));
        }
        Ok(())
    }

    /// Executes `plan`, returning the final tensor with legs ordered as `order`.
    pub fn contract(&self, plan: &ContractionPlan, order: &[Label]) -> Result<Tensor> {
        self.check_plan(plan)?;
        if plan.steps.is_empty() {
            return permute_to(&self.tensors[0], &self.labels[0], order);
        }
        let n = self.len();
        let mut arena: Vec<Option<Tensor>> = vec![None; n + plan.steps.len()];
        let fetch = |arena: &mut Vec<Option<Tensor>>, id: usize| -> Tensor {
            if id < n {
                self.tensors[id].clone()
            } else {
                arena[id].take().expect("intermediate consumed twice")
            }
        };
        let mut labels: Vec<Vec<Label>> = self.labels.clone();
        labels.resize(n + plan.steps.len(), Vec::new());
        for (s, step) in plan.steps.iter().enumerate() {
            let a = fetch(&mut arena, step.lhs);
            let b = fetch(&mut arena, step.rhs);
            let (t, ls) = contract_labeled(&a, &labels[step.lhs], &b, &labels[step.rhs])?;
            labels[n + s] = ls;
            arena[n + s] = Some(t);
        }
        let out = plan.output_id();
        permute_to(arena[out].as_ref().unwrap(), &labels[out], order)
    }

    /// Executes `plan` and back-propagates `seed` (the derivative of a scalar
    /// objective with respect to each output entry, legs ordered as `order`).
    ///
    /// Returns the output and, for every input tensor, the holomorphic
    /// derivative of the objective with respect to its entries.
    pub fn contract_with_grad(
        &self,
        plan: &ContractionPlan,
        order: &[Label],
        seed: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_plan(plan)?;
        let n = self.len();
        let total = n + plan.steps.len();
        let mut values: Vec<Tensor> = self.tensors.clone();
        let mut labels: Vec<Vec<Label>> = self.labels.clone();
        for step in &plan.steps {
            let (t, ls) =
                contract_labeled(&values[step.lhs], &labels[step.lhs], &values[step.rhs], &labels[step.rhs])?;
            values.push(t);
            labels.push(ls);
        }
        let out = plan.output_id();
        let output = permute_to(&values[out], &labels[out], order)?;

        let mut grads: Vec<Option<Tensor>> = vec![None; total];
        grads[out] = Some(permute_to(seed, order, &labels[out])?);
        for (s, step) in plan.steps.iter().enumerate().rev() {
            let id = n + s;
            let g = grads[id].take().expect("gradient of an unused node");
            let (ga, lga) = contract_labeled(&g, &labels[id], &values[step.rhs], &labels[step.rhs])?;
            grads[step.lhs] = Some(permute_to(&ga, &lga, &labels[step.lhs])?);
            let (gb, lgb) = contract_labeled(&g, &labels[id], &values[step.lhs], &labels[step.lhs])?;
            grads[step.rhs] = Some(permute_to(&gb, &lgb, &labels[step.rhs])?);
        }
        let input_grads = grads
            .into_iter()
            .take(n)
            .map(|g| g.expect("input not consumed by plan"))
            .collect();
        Ok((output, input_grads))
    }
}
