//! Lowering pure diagrams to tensor networks: light-cone dimension
//! inference, tensor extraction, contraction planning, and execution.

use crate::diagram::{DiagramBox, WireKind};
use crate::error::{Error, Result};
use crate::generators::{enumerate_states, Diagram, Generator};
use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};

/// Per-wire dimension (cap): occupation values run over `0..cap`.
pub type WireDims = Vec<u64>;

#[derive(Clone, Debug)]
pub struct InferOptions {
    /// Cap assigned to open `mode`/`qmode` inputs (values `0..cap`).
    pub default_input_dim: u64,
    /// Raises every Fock wire to at least this dimension.
    pub min_fock_dim: Option<u64>,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            default_input_dim: 2,
            min_fock_dim: None,
        }
    }
}

/// A light-cone: the set of photon sources that can reach a wire, with the
/// photons each contributes. The bound is the sum; reconvergent paths do not
/// double-count a source.
type Cone = BTreeMap<u32, u64>;

fn cone_bound(c: &Cone) -> u64 {
    c.values().sum()
}

/// `None` is an unbounded cone.
type MaybeCone = Option<Cone>;

fn union(a: &MaybeCone, b: &MaybeCone) -> MaybeCone {
    match (a, b) {
        (Some(x), Some(y)) => {
            let mut out = x.clone();
            for (k, v) in y {
                out.insert(*k, *v);
            }
            Some(out)
        }
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum OpenInputRule {
    /// Open Fock inputs are a fresh source carrying `cap - 1` photons.
    Default(u64),
    /// Open Fock inputs are unbounded.
    Infinite,
    /// Not used for open inputs; bounds are supplied explicitly.
    Explicit,
}

/// Forward light-cone propagation. Returns one cone per wire.
///
/// The backward pass reuses this on the daggered diagram: `Select` becomes
/// `Create`, splits become merges, and open outputs become open inputs.
fn propagate_cones(
    d: &Diagram,
    rule: OpenInputRule,
    explicit_inputs: Option<&[MaybeCone]>,
    counter: &mut u32,
) -> Result<Vec<MaybeCone>> {
    let mut cones: Vec<MaybeCone> = vec![Some(Cone::new()); d.wire_count()];
    for (i, &w) in d.dom_wires().iter().enumerate() {
        if !matches!(d.wire_kind(w), WireKind::Mode | WireKind::Qmode) {
            continue;
        }
        cones[w] = match rule {
            OpenInputRule::Default(cap) => {
                let id = *counter;
                *counter += 1;
                Some(Cone::from([(id, cap.saturating_sub(1))]))
            }
            OpenInputRule::Infinite => None,
            OpenInputRule::Explicit => explicit_inputs
                .expect("explicit input cones supplied")[i]
                .clone(),
        };
    }

    for node in d.nodes() {
        let fock_out: Vec<usize> = node
            .outputs
            .iter()
            .copied()
            .filter(|&w| matches!(d.wire_kind(w), WireKind::Mode | WireKind::Qmode))
            .collect();
        if fock_out.is_empty() {
            continue;
        }
        let in_cones: Vec<MaybeCone> = node.inputs.iter().map(|&w| cones[w].clone()).collect();
        let fock_in: Vec<&MaybeCone> = node
            .inputs
            .iter()
            .zip(&in_cones)
            .filter(|(&w, _)| matches!(d.wire_kind(w), WireKind::Mode | WireKind::Qmode))
            .map(|(_, c)| c)
            .collect();
        let union_in = fock_in
            .iter()
            .fold(Some(Cone::new()), |acc, c| union(&acc, c));

        match &node.gen {
            Generator::Create { occupations, .. } => {
                let id = *counter;
                *counter += 1;
                let total: u64 = occupations.iter().sum();
                for &w in &fock_out {
                    cones[w] = Some(Cone::from([(id, total)]));
                }
            }
            Generator::CreatePhoton { select: false, .. }
            | Generator::DualRail { decode: false, .. }
            | Generator::DualRailInternal { decode: false, .. } => {
                let id = *counter;
                *counter += 1;
                for &w in &fock_out {
                    cones[w] = Some(Cone::from([(id, 1)]));
                }
            }
            Generator::WSplit { .. } => {
                for &w in &fock_out {
                    cones[w] = fock_in[0].clone();
                }
            }
            Generator::WMerge { .. } | Generator::LoGate(_) => {
                for &w in &fock_out {
                    cones[w] = union_in.clone();
                }
            }
            Generator::NumOp => {
                for &w in &fock_out {
                    cones[w] = fock_in[0].clone();
                }
            }
            Generator::Cast { from, .. } => {
                let cone = if from.fixed_dim().is_some() {
                    // A bit or qubit cast into a Fock wire carries at most 1.
                    let id = *counter;
                    *counter += 1;
                    Some(Cone::from([(id, 1)]))
                } else {
                    fock_in[0].clone()
                };
                for &w in &fock_out {
                    cones[w] = cone.clone();
                }
            }
            Generator::ZSpider { .. } => {
                // All legs carry the same value: take the tightest input cone.
                let best = fock_in
                    .iter()
                    .filter_map(|c| c.as_ref())
                    .min_by_key(|c| cone_bound(c))
                    .cloned();
                let cone = if fock_in.is_empty() { None } else { best.map(Some).unwrap_or(None) };
                for &w in &fock_out {
                    cones[w] = cone.clone();
                }
            }
            Generator::Classical(f) => {
                if f.transposed {
                    // Preimages cannot be bounded without inverting the map.
                    for &w in &fock_out {
                        cones[w] = None;
                    }
                } else {
                    // Enumerate the function under the input bounds to bound
                    // each output; bit inputs range over {0, 1}.
                    let caps: Option<Vec<u64>> = node
                        .inputs
                        .iter()
                        .zip(&in_cones)
                        .map(|(&w, c)| match d.wire_kind(w).fixed_dim() {
                            Some(fd) => Some(fd),
                            None => c.as_ref().map(|c| cone_bound(c) + 1),
                        })
                        .collect();
                    match caps {
                        None => {
                            for &w in &fock_out {
                                cones[w] = None;
                            }
                        }
                        Some(caps) => {
                            let cod = node.gen.cod();
                            let mut maxima = vec![0u64; cod.len()];
                            for input in enumerate_states(&caps) {
                                if let Some(out) = (f.func)(&input) {
                                    for (m, v) in maxima.iter_mut().zip(out.iter()) {
                                        *m = (*m).max(*v);
                                    }
                                }
                            }
                            for (&w, &m) in node.outputs.iter().zip(maxima.iter()) {
                                if matches!(d.wire_kind(w), WireKind::Mode | WireKind::Qmode) {
                                    let id = *counter;
                                    *counter += 1;
                                    cones[w] = Some(Cone::from([(id, m)]));
                                }
                            }
                        }
                    }
                }
            }
            Generator::BitCtrl { body, adjoint } => {
                // Union over the identity branch and the body branch; the
                // adjoint form runs the body backwards and skips its bit
                // output.
                let (dir, q_in_offset, q_out_offset): (Diagram, usize, usize) = if *adjoint {
                    (body.dagger()?, 0, 1)
                } else {
                    ((**body).clone(), 1, 0)
                };
                let body_in: Vec<MaybeCone> = in_cones[q_in_offset..].to_vec();
                let body_cones =
                    propagate_cones(&dir, OpenInputRule::Explicit, Some(&body_in), counter)?;
                for (k, &w) in node.outputs.iter().enumerate() {
                    if k < q_out_offset
                        || !matches!(d.wire_kind(w), WireKind::Mode | WireKind::Qmode)
                    {
                        continue;
                    }
                    let pass = &in_cones[q_in_offset + (k - q_out_offset)];
                    let via_body = &body_cones[dir.cod_wires()[k - q_out_offset]];
                    cones[w] = union(pass, via_body);
                }
            }
            Generator::XSpider { .. } | Generator::Hadamard => {
                // Two-level wires only; nothing to propagate.
            }
            Generator::Select { .. } | Generator::CreatePhoton { select: true, .. }
            | Generator::DualRail { decode: true, .. }
            | Generator::DualRailInternal { decode: true, .. } => {
                // Sinks (no Fock outputs) or qubit outputs.
            }
        }
    }
    Ok(cones)
}

/// Infers minimal Fock dimensions by a forward light-cone pass and a
/// backward pass on the daggered diagram; the final cap per wire is the
/// minimum of the two bounds plus one.
pub fn infer_dims_with(d: &Diagram, opts: &InferOptions) -> Result<WireDims> {
    let mut counter = 0;
    let fwd = propagate_cones(d, OpenInputRule::Default(opts.default_input_dim), None, &mut counter)?;
    let dag = d.dagger()?;
    let bwd = propagate_cones(&dag, OpenInputRule::Infinite, None, &mut counter)?;
    let mut dims = Vec::with_capacity(d.wire_count());
    for w in 0..d.wire_count() {
        let dim = match d.wire_kind(w).fixed_dim() {
            Some(fd) => fd,
            None => {
                let f = fwd[w].as_ref().map(cone_bound);
                let b = bwd[w].as_ref().map(cone_bound);
                let bound = match (f, b) {
                    (Some(x), Some(y)) => x.min(y),
                    (Some(x), None) => x,
                    (None, Some(y)) => y,
                    (None, None) => opts.default_input_dim.saturating_sub(1),
                };
                let mut dim = bound + 1;
                if let Some(min) = opts.min_fock_dim {
                    dim = dim.max(min);
                }
                dim
            }
        };
        dims.push(dim);
    }
    Ok(dims)
}

pub fn infer_dims(d: &Diagram) -> Result<WireDims> {
    infer_dims_with(d, &InferOptions::default())
}

/// Infers dims with the boundary wires pinned to the given dimensions.
pub fn infer_dims_with_boundary(
    d: &Diagram,
    in_dims: &[u64],
    out_dims: &[u64],
) -> Result<WireDims> {
    let mut counter = 0;
    let fwd_inputs: Vec<MaybeCone> = d
        .dom_wires()
        .iter()
        .zip(in_dims)
        .map(|(_, &dim)| {
            let id = counter;
            counter += 1;
            Some(Cone::from([(id, dim.saturating_sub(1))]))
        })
        .collect();
    let fwd = propagate_cones(d, OpenInputRule::Explicit, Some(&fwd_inputs), &mut counter)?;
    let dag = d.dagger()?;
    let bwd_inputs: Vec<MaybeCone> = dag
        .dom_wires()
        .iter()
        .zip(out_dims)
        .map(|(_, &dim)| {
            let id = counter;
            counter += 1;
            Some(Cone::from([(id, dim.saturating_sub(1))]))
        })
        .collect();
    let bwd = propagate_cones(&dag, OpenInputRule::Explicit, Some(&bwd_inputs), &mut counter)?;
    let mut dims = Vec::with_capacity(d.wire_count());
    for w in 0..d.wire_count() {
        let dim = match d.wire_kind(w).fixed_dim() {
            Some(fd) => fd,
            None => {
                let f = fwd[w].as_ref().map(cone_bound);
                let b = bwd[w].as_ref().map(cone_bound);
                match (f, b) {
                    (Some(x), Some(y)) => x.min(y) + 1,
                    (Some(x), None) => x + 1,
                    (None, Some(y)) => y + 1,
                    (None, None) => 2,
                }
            }
        };
        dims.push(dim);
    }
    // Pin the boundary exactly.
    for (&w, &dim) in d.dom_wires().iter().zip(in_dims) {
        dims[w] = dim;
    }
    for (&w, &dim) in d.cod_wires().iter().zip(out_dims) {
        dims[w] = dim;
    }
    Ok(dims)
}

/// One node of a tensor network: a dense tensor with ordered index labels.
#[derive(Clone, Debug)]
pub struct TnNode {
    pub tensor: ArrayD<Complex64>,
    pub labels: Vec<usize>,
}

/// Tensors with shared index labels; `open` lists the boundary indices in
/// dom-then-cod order.
#[derive(Clone, Debug)]
pub struct TensorNetwork {
    pub nodes: Vec<TnNode>,
    pub open: Vec<usize>,
    pub scalar: Complex64,
    label_dims: BTreeMap<usize, u64>,
}

impl TensorNetwork {
    pub fn label_dim(&self, label: usize) -> u64 {
        self.label_dims[&label]
    }

    pub fn label_dims(&self) -> &BTreeMap<usize, u64> {
        &self.label_dims
    }
}

/// Materializes one tensor per box by enumerating basis transitions under the
/// inferred caps; wire ids become index labels, diagram scalars multiply into
/// the network scalar, and boundary pass-through wires become identity nodes.
pub fn to_tensor_network(d: &Diagram, dims: &WireDims) -> Result<TensorNetwork> {
    let free = d.free_symbols();
    if !free.is_empty() {
        return Err(Error::SymbolicDiagram(free.into_iter().collect()));
    }
    let mut label_dims: BTreeMap<usize, u64> = BTreeMap::new();
    for w in 0..d.wire_count() {
        label_dims.insert(w, dims[w]);
    }
    let mut nodes = Vec::new();
    for node in d.nodes() {
        let in_dims: Vec<u64> = node.inputs.iter().map(|&w| dims[w]).collect();
        let out_caps: Vec<u64> = node.outputs.iter().map(|&w| dims[w]).collect();
        let shape: Vec<usize> = in_dims
            .iter()
            .chain(out_caps.iter())
            .map(|&x| x as usize)
            .collect();
        let mut tensor = ArrayD::zeros(IxDyn(&shape));
        for input in enumerate_states(&in_dims) {
            for tr in node.gen.transitions(&input, &in_dims, &out_caps)? {
                for (v, cap) in tr.out.iter().zip(&out_caps) {
                    if v >= cap {
                        return Err(Error::CapOverflow {
                            dim: *cap,
                            value: *v,
                        });
                    }
                }
                let mut idx: Vec<usize> = input.iter().map(|&v| v as usize).collect();
                idx.extend(tr.out.iter().map(|&v| v as usize));
                tensor[idx.as_slice()] += tr.amp;
            }
        }
        let labels: Vec<usize> = node
            .inputs
            .iter()
            .chain(node.outputs.iter())
            .copied()
            .collect();
        nodes.push(TnNode { tensor, labels });
    }

    // Boundary pass-through wires would appear twice in `open`; give each an
    // identity node so every label has exactly two endpoints or one plus open.
    let dom_set: BTreeSet<usize> = d.dom_wires().iter().copied().collect();
    let mut fresh = d.wire_count();
    let mut cod_labels: Vec<usize> = d.cod_wires().to_vec();
    for slot in cod_labels.iter_mut() {
        let w = *slot;
        if dom_set.contains(&w) {
            let dim = dims[w] as usize;
            let mut eye = ArrayD::zeros(IxDyn(&[dim, dim]));
            for k in 0..dim {
                eye[[k, k]] = Complex64::new(1.0, 0.0);
            }
            label_dims.insert(fresh, dims[w]);
            nodes.push(TnNode {
                tensor: eye,
                labels: vec![w, fresh],
            });
            *slot = fresh;
            fresh += 1;
        }
    }
    let mut open: Vec<usize> = d.dom_wires().to_vec();
    open.extend(cod_labels);
    Ok(TensorNetwork {
        nodes,
        open,
        scalar: d.scalar_product(),
        label_dims,
    })
}

/// One pairwise contraction in a plan.
#[derive(Clone, Debug)]
pub struct Merge {
    pub lhs: usize,
    pub rhs: usize,
    pub result: usize,
    /// Estimated scalar multiply-adds: the product of the dimensions of the
    /// union of both operands' indices.
    pub cost: u128,
    pub result_labels: Vec<usize>,
    pub result_dims: Vec<u64>,
}

/// A binary merge tree over node ids; original nodes are `0..n`, merge `k`
/// creates id `n + k`.
#[derive(Clone, Debug, Default)]
pub struct ContractionPath {
    pub merges: Vec<Merge>,
}

impl ContractionPath {
    pub fn total_cost(&self) -> u128 {
        self.merges.iter().map(|m| m.cost).sum()
    }

    pub fn peak_intermediate(&self) -> u128 {
        self.merges
            .iter()
            .map(|m| m.result_dims.iter().map(|&d| d as u128).product())
            .max()
            .unwrap_or(0)
    }
}

fn merge_result(
    a: &BTreeSet<usize>,
    b: &BTreeSet<usize>,
    tn: &TensorNetwork,
) -> (BTreeSet<usize>, u128, u128) {
    let shared: BTreeSet<usize> = a.intersection(b).copied().collect();
    let result: BTreeSet<usize> = a
        .union(b)
        .copied()
        .filter(|l| !shared.contains(l))
        .collect();
    let cost: u128 = a
        .union(b)
        .map(|&l| tn.label_dim(l) as u128)
        .product();
    let size: u128 = result.iter().map(|&l| tn.label_dim(l) as u128).product();
    (result, cost, size)
}

/// Greedy planner: repeatedly merges the pair minimizing
/// `size(result) - size(lhs) - size(rhs)`, tie-broken by smaller result size
/// and then by lower node-id pair. Deterministic.
pub fn plan_greedy(tn: &TensorNetwork) -> ContractionPath {
    let mut active: Vec<(usize, BTreeSet<usize>)> = tn
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (i, n.labels.iter().copied().collect()))
        .collect();
    let size_of = |labels: &BTreeSet<usize>| -> u128 {
        labels.iter().map(|&l| tn.label_dim(l) as u128).product()
    };
    let mut next_id = tn.nodes.len();
    let mut merges = Vec::new();
    while active.len() > 1 {
        let mut best: Option<(i128, u128, (usize, usize), usize, usize)> = None;
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let (result, _cost, size) = merge_result(&active[i].1, &active[j].1, tn);
                let _ = result;
                let metric =
                    size as i128 - size_of(&active[i].1) as i128 - size_of(&active[j].1) as i128;
                let ids = (
                    active[i].0.min(active[j].0),
                    active[i].0.max(active[j].0),
                );
                let key = (metric, size, ids, i, j);
                let better = match &best {
                    None => true,
                    Some((bm, bs, bids, _, _)) => {
                        (metric, size, ids) < (*bm, *bs, *bids)
                    }
                };
                if better {
                    best = Some(key);
                }
            }
        }
        let (_, _, _, i, j) = best.expect("at least one pair");
        let (lhs_id, lhs_labels) = active[i].clone();
        let (rhs_id, rhs_labels) = active[j].clone();
        let (result, cost, _) = merge_result(&lhs_labels, &rhs_labels, tn);
        let result_labels: Vec<usize> = result.iter().copied().collect();
        let result_dims: Vec<u64> = result_labels.iter().map(|&l| tn.label_dim(l)).collect();
        merges.push(Merge {
            lhs: lhs_id,
            rhs: rhs_id,
            result: next_id,
            cost,
            result_labels,
            result_dims,
        });
        active.remove(j);
        active.remove(i);
        active.push((next_id, result));
        next_id += 1;
    }
    ContractionPath { merges }
}

/// Exact minimum-cost contraction tree by dynamic programming over subsets;
/// cost is total scalar multiply-adds. Fails with `TooLarge` above
/// `max_nodes` (callers fall back to the greedy planner).
pub fn plan_optimal(tn: &TensorNetwork, max_nodes: usize) -> Result<ContractionPath> {
    let n = tn.nodes.len();
    if n > max_nodes {
        return Err(Error::TooLarge(n, max_nodes));
    }
    if n <= 1 {
        return Ok(ContractionPath::default());
    }
    // Label table with endpoint masks.
    let mut label_ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut dims: Vec<u64> = Vec::new();
    let mut endpoint_mask: Vec<u32> = Vec::new();
    for (i, node) in tn.nodes.iter().enumerate() {
        for &l in &node.labels {
            let id = *label_ids.entry(l).or_insert_with(|| {
                dims.push(tn.label_dim(l));
                endpoint_mask.push(0);
                dims.len() - 1
            });
            endpoint_mask[id] |= 1 << i;
        }
    }
    let nl = dims.len();
    // A label is alive in a subset's result iff exactly one of its endpoints
    // lies inside (open labels have a single endpoint).
    let alive = |mask: u32| -> Vec<bool> {
        (0..nl)
            .map(|l| (endpoint_mask[l] & mask).count_ones() == 1)
            .collect()
    };
    let size_of = |labels: &[bool]| -> u128 {
        labels
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(l, _)| dims[l] as u128)
            .product()
    };

    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best_cost: Vec<u128> = vec![u128::MAX; (full as usize) + 1];
    let mut best_split: Vec<u32> = vec![0; (full as usize) + 1];
    let mut alive_cache: Vec<Option<Vec<bool>>> = vec![None; (full as usize) + 1];
    let get_alive = |mask: u32, cache: &mut Vec<Option<Vec<bool>>>| -> Vec<bool> {
        if cache[mask as usize].is_none() {
            cache[mask as usize] = Some(alive(mask));
        }
        cache[mask as usize].clone().unwrap()
    };
    for i in 0..n {
        best_cost[1usize << i] = 0;
    }
    // Iterate masks in increasing order; all submasks are smaller numbers.
    for mask in 1..=full {
        if mask.count_ones() < 2 {
            continue;
        }
        let low = mask & mask.wrapping_neg();
        let mut s = (mask - 1) & mask;
        let mut best: Option<(u128, u32)> = None;
        while s > 0 {
            // Canonical: keep the lowest set bit on the left side.
            if s & low != 0 {
                let t = mask ^ s;
                if best_cost[s as usize] != u128::MAX && best_cost[t as usize] != u128::MAX {
                    let la = get_alive(s, &mut alive_cache);
                    let lb = get_alive(t, &mut alive_cache);
                    let merged: Vec<bool> =
                        la.iter().zip(&lb).map(|(&x, &y)| x || y).collect();
                    let merge_cost = size_of(&merged);
                    let total = best_cost[s as usize] + best_cost[t as usize] + merge_cost;
                    if best.map_or(true, |(c, _)| total < c) {
                        best = Some((total, s));
                    }
                }
            }
            s = (s - 1) & mask;
        }
        let (cost, split) = best.expect("every subset splits");
        best_cost[mask as usize] = cost;
        best_split[mask as usize] = split;
    }

    // Emit the tree in execution order.
    let mut merges = Vec::new();
    let mut next_id = n;
    let mut active_labels: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    fn emit(
        mask: u32,
        n: usize,
        best_split: &[u32],
        tn: &TensorNetwork,
        merges: &mut Vec<Merge>,
        next_id: &mut usize,
        active_labels: &mut BTreeMap<usize, BTreeSet<usize>>,
    ) -> usize {
        if mask.count_ones() == 1 {
            let i = mask.trailing_zeros() as usize;
            active_labels.insert(i, tn.nodes[i].labels.iter().copied().collect());
            return i;
        }
        let s = best_split[mask as usize];
        let t = mask ^ s;
        let a = emit(s, n, best_split, tn, merges, next_id, active_labels);
        let b = emit(t, n, best_split, tn, merges, next_id, active_labels);
        let la = active_labels[&a].clone();
        let lb = active_labels[&b].clone();
        let (result, cost, _) = merge_result(&la, &lb, tn);
        let id = *next_id;
        *next_id += 1;
        let result_labels: Vec<usize> = result.iter().copied().collect();
        let result_dims: Vec<u64> = result_labels.iter().map(|&l| tn.label_dim(l)).collect();
        merges.push(Merge {
            lhs: a,
            rhs: b,
            result: id,
            cost,
            result_labels,
            result_dims,
        });
        active_labels.insert(id, result);
        id
    }
    emit(
        full,
        n,
        &best_split,
        tn,
        &mut merges,
        &mut next_id,
        &mut active_labels,
    );
    Ok(ContractionPath { merges })
}

/// Contraction execution statistics.
#[derive(Clone, Copy, Debug, Default)]
pub struct ContractStats {
    /// Scalar multiply-adds actually performed.
    pub madds: u128,
}

fn tensordot(
    a: &ArrayD<Complex64>,
    a_labels: &[usize],
    b: &ArrayD<Complex64>,
    b_labels: &[usize],
    stats: &mut ContractStats,
) -> (ArrayD<Complex64>, Vec<usize>) {
    let shared: Vec<usize> = a_labels
        .iter()
        .copied()
        .filter(|l| b_labels.contains(l))
        .collect();
    let a_kept: Vec<usize> = a_labels
        .iter()
        .copied()
        .filter(|l| !shared.contains(l))
        .collect();
    let b_kept: Vec<usize> = b_labels
        .iter()
        .copied()
        .filter(|l| !shared.contains(l))
        .collect();

    let pos = |labels: &[usize], l: usize| labels.iter().position(|&x| x == l).unwrap();
    let a_perm: Vec<usize> = a_kept
        .iter()
        .chain(shared.iter())
        .map(|&l| pos(a_labels, l))
        .collect();
    let b_perm: Vec<usize> = shared
        .iter()
        .chain(b_kept.iter())
        .map(|&l| pos(b_labels, l))
        .collect();

    let a_view = a.view().permuted_axes(IxDyn(&a_perm));
    let b_view = b.view().permuted_axes(IxDyn(&b_perm));
    let dim_at = |view: &ndarray::ArrayViewD<Complex64>, k: usize| view.shape()[k] as usize;

    let ka: usize = (0..a_kept.len()).map(|k| dim_at(&a_view, k)).product();
    let ks: usize = (0..shared.len())
        .map(|k| dim_at(&a_view, a_kept.len() + k))
        .product();
    let kb: usize = (0..b_kept.len())
        .map(|k| dim_at(&b_view, shared.len() + k))
        .product();

    let a_vec: Vec<Complex64> = a_view.iter().copied().collect();
    let b_vec: Vec<Complex64> = b_view.iter().copied().collect();
    let a_mat = Array2::from_shape_vec((ka, ks), a_vec).expect("row-major collect");
    let b_mat = Array2::from_shape_vec((ks, kb), b_vec).expect("row-major collect");
    let prod = a_mat.dot(&b_mat);
    stats.madds += (ka as u128) * (ks as u128) * (kb as u128);

    let mut out_shape: Vec<usize> = (0..a_kept.len()).map(|k| dim_at(&a_view, k)).collect();
    out_shape.extend((0..b_kept.len()).map(|k| dim_at(&b_view, shared.len() + k)));
    let out = ArrayD::from_shape_vec(IxDyn(&out_shape), prod.into_iter().collect())
        .expect("shape matches");
    let mut labels = a_kept;
    labels.extend(b_kept);
    (out, labels)
}

/// Reorders a tensor's axes to match `target` labels.
fn reorder(
    t: ArrayD<Complex64>,
    labels: &[usize],
    target: &[usize],
) -> Result<ArrayD<Complex64>> {
    if labels.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "result has {} indices, boundary expects {}",
            labels.len(),
            target.len()
        )));
    }
    let mut perm = Vec::with_capacity(target.len());
    for l in target {
        let p = labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::ShapeMismatch(format!("missing boundary index {l}")))?;
        perm.push(p);
    }
    let view = t.view().permuted_axes(IxDyn(&perm));
    let shape: Vec<usize> = view.shape().to_vec();
    let data: Vec<Complex64> = view.iter().copied().collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("permuted shape"))
}

/// Executes the contraction along the merge tree; result indices are ordered
/// by `tn.open` and multiplied by the network scalar.
pub fn contract_with_stats(
    tn: &TensorNetwork,
    path: &ContractionPath,
) -> Result<(ArrayD<Complex64>, ContractStats)> {
    let mut stats = ContractStats::default();
    let mut pool: BTreeMap<usize, (ArrayD<Complex64>, Vec<usize>)> = tn
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (i, (n.tensor.clone(), n.labels.clone())))
        .collect();
    for m in &path.merges {
        let (ta, la) = pool
            .remove(&m.lhs)
            .ok_or_else(|| Error::ShapeMismatch(format!("merge input {} missing", m.lhs)))?;
        let (tb, lb) = pool
            .remove(&m.rhs)
            .ok_or_else(|| Error::ShapeMismatch(format!("merge input {} missing", m.rhs)))?;
        let (tr, lr) = tensordot(&ta, &la, &tb, &lb, &mut stats);
        pool.insert(m.result, (tr, lr));
    }
    let (tensor, labels) = match pool.len() {
        0 => (
            ArrayD::from_elem(IxDyn(&[]), Complex64::new(1.0, 0.0)),
            Vec::new(),
        ),
        1 => pool.into_iter().next().unwrap().1,
        k => {
            return Err(Error::ShapeMismatch(format!(
                "path leaves {k} disconnected results"
            )))
        }
    };
    let mut out = reorder(tensor, &labels, &tn.open)?;
    out.mapv_inplace(|v| v * tn.scalar);
    Ok((out, stats))
}

pub fn contract(tn: &TensorNetwork, path: &ContractionPath) -> Result<ArrayD<Complex64>> {
    contract_with_stats(tn, path).map(|(t, _)| t)
}

/// Planner selection.
#[derive(Clone, Debug)]
pub enum Planner {
    Greedy,
    Optimal { max_nodes: usize },
    /// Exact planning up to the bound, greedy above it.
    Auto { optimal_up_to: usize },
}

impl Default for Planner {
    fn default() -> Self {
        Planner::Auto { optimal_up_to: 12 }
    }
}

pub fn plan(tn: &TensorNetwork, planner: &Planner) -> Result<ContractionPath> {
    match planner {
        Planner::Greedy => Ok(plan_greedy(tn)),
        Planner::Optimal { max_nodes } => plan_optimal(tn, *max_nodes),
        Planner::Auto { optimal_up_to } => {
            if tn.nodes.len() <= *optimal_up_to {
                plan_optimal(tn, *optimal_up_to)
            } else {
                Ok(plan_greedy(tn))
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TnOptions {
    pub infer: InferOptions,
    pub planner: Planner,
}

/// A contracted pure diagram: the boundary tensor with axes ordered
/// dom-then-cod, plus the boundary dimensions.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub tensor: ArrayD<Complex64>,
    pub dom_dims: Vec<u64>,
    pub cod_dims: Vec<u64>,
}

/// Compiles and contracts a pure diagram.
pub fn eval_diagram_with(d: &Diagram, opts: &TnOptions) -> Result<Evaluated> {
    let dims = infer_dims_with(d, &opts.infer)?;
    let tn = to_tensor_network(d, &dims)?;
    let path = plan(&tn, &opts.planner)?;
    let tensor = contract(&tn, &path)?;
    Ok(Evaluated {
        tensor,
        dom_dims: d.dom_wires().iter().map(|&w| dims[w]).collect(),
        cod_dims: d.cod_wires().iter().map(|&w| dims[w]).collect(),
    })
}

pub fn eval_diagram(d: &Diagram) -> Result<Evaluated> {
    eval_diagram_with(d, &TnOptions::default())
}

/// Dense tensor of a pure diagram with pinned boundary dimensions, indexed
/// `[dom..., cod...]`. Used by bit-controlled bodies and test oracles.
pub fn dense_with_boundary_dims(
    d: &Diagram,
    in_dims: &[u64],
    out_dims: &[u64],
) -> Result<ArrayD<Complex64>> {
    let dims = infer_dims_with_boundary(d, in_dims, out_dims)?;
    let tn = to_tensor_network(d, &dims)?;
    let path = plan(&tn, &Planner::default())?;
    contract(&tn, &path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::Param;
    use crate::generators as g;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_qubit_is_a_single_identity_node() {
        let d = Diagram::id(crate::diagram::qubit());
        let dims = infer_dims(&d).unwrap();
        let tn = to_tensor_network(&d, &dims).unwrap();
        assert_eq!(tn.nodes.len(), 1);
        assert_eq!(tn.nodes[0].tensor.shape(), &[2, 2]);
        let ev = eval_diagram(&d).unwrap();
        assert!((ev.tensor[[0, 0]] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(ev.tensor[[0, 1]].norm() < 1e-12);
    }

    #[test]
    fn hom_amplitudes_via_contraction() {
        let d = g::create(&[1, 1]).then(&g::bs()).unwrap();
        let ev = eval_diagram(&d).unwrap();
        assert_eq!(ev.tensor.shape(), &[3, 3]);
        assert!(ev.tensor[[1, 1]].norm() < 1e-12);
        assert!((ev.tensor[[2, 0]].norm_sqr() - 0.5).abs() < 1e-12);
        assert!((ev.tensor[[0, 2]].norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn light_cone_dims_for_hom() {
        // A joint source can bunch: every wire sees both photons.
        let d = g::create(&[1, 1]).then(&g::bs()).unwrap();
        let dims = infer_dims(&d).unwrap();
        for w in 0..d.wire_count() {
            assert_eq!(dims[w], 3, "wire {w}");
        }
    }

    #[test]
    fn light_cone_dims_for_independent_photons() {
        let d = g::create(&[1]).tensor(&g::create(&[1]));
        let dims = infer_dims(&d).unwrap();
        for w in 0..d.wire_count() {
            assert_eq!(dims[w], 2, "wire {w}");
        }
    }

    #[test]
    fn creation_op_output_cap_adds_one() {
        // a† = (Create(1) @ id) >> W(2)†: output bound is input bound + 1.
        let adag = g::create(&[1])
            .tensor(&Diagram::id(crate::diagram::qmode()))
            .then(&g::w_merge(2))
            .unwrap();
        let opts = InferOptions {
            default_input_dim: 4,
            min_fock_dim: None,
        };
        let dims = infer_dims_with(&adag, &opts).unwrap();
        let out_wire = adag.cod_wires()[0];
        assert_eq!(dims[out_wire], 5);
    }

    #[test]
    fn select_tightens_backward() {
        // Create(2) >> Phase >> Select(2): internal wire capped by both sides.
        let d = g::create(&[2])
            .then(&g::phase(Param::lit(0.3)))
            .unwrap()
            .then(&g::select(&[2]))
            .unwrap();
        let dims = infer_dims(&d).unwrap();
        for w in 0..d.wire_count() {
            assert_eq!(dims[w], 3);
        }
        let ev = eval_diagram(&d).unwrap();
        // <2| e^{2 pi i 0.3 n} |2> = e^{2 pi i 0.6}
        let expected = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.6);
        assert!((ev.tensor[[]] - expected).norm() < 1e-12);
    }

    fn random_network(seed: u64, nodes: usize) -> TensorNetwork {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Chain plus random extra shared indices keeps everything connected.
        let mut label_dims = BTreeMap::new();
        let mut node_labels: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        let mut next = 0usize;
        for i in 0..nodes.saturating_sub(1) {
            let dim = rng.gen_range(2..=4);
            label_dims.insert(next, dim);
            node_labels[i].push(next);
            node_labels[i + 1].push(next);
            next += 1;
        }
        for _ in 0..nodes / 2 {
            let a = rng.gen_range(0..nodes);
            let b = rng.gen_range(0..nodes);
            if a == b {
                continue;
            }
            let dim = rng.gen_range(2..=3);
            label_dims.insert(next, dim);
            node_labels[a].push(next);
            node_labels[b].push(next);
            next += 1;
        }
        // A couple of open indices.
        for i in 0..2.min(nodes) {
            let dim = rng.gen_range(2..=3);
            label_dims.insert(next, dim);
            node_labels[i].push(next);
            next += 1;
        }
        let open: Vec<usize> = (0..2.min(nodes))
            .map(|i| *node_labels[i].last().unwrap())
            .collect();
        let nodes_built: Vec<TnNode> = node_labels
            .into_iter()
            .map(|labels| {
                let shape: Vec<usize> = labels.iter().map(|l| label_dims[l] as usize).collect();
                let tensor = ArrayD::from_shape_fn(IxDyn(&shape), |_| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                TnNode { tensor, labels }
            })
            .collect();
        TensorNetwork {
            nodes: nodes_built,
            open,
            scalar: c(1.0, 0.0),
            label_dims,
        }
    }

    #[test]
    fn optimal_cost_never_exceeds_greedy() {
        for seed in 0..50 {
            let tn = random_network(seed, 2 + (seed as usize % 9));
            let greedy = plan_greedy(&tn);
            let optimal = plan_optimal(&tn, 18).unwrap();
            assert!(
                optimal.total_cost() <= greedy.total_cost(),
                "seed {seed}: optimal {} > greedy {}",
                optimal.total_cost(),
                greedy.total_cost()
            );
        }
    }

    #[test]
    fn paths_agree_on_result() {
        for seed in 0..30 {
            let tn = random_network(seed + 100, 3 + (seed as usize % 7));
            let greedy = plan_greedy(&tn);
            let optimal = plan_optimal(&tn, 18).unwrap();
            let (a, _) = contract_with_stats(&tn, &greedy).unwrap();
            let (b, _) = contract_with_stats(&tn, &optimal).unwrap();
            let max = a.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-30);
            let dev = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0f64, f64::max);
            assert!(dev / max < 1e-12, "seed {seed}: deviation {dev}");
        }
    }

    #[test]
    fn measured_madds_equal_estimates() {
        for seed in 0..20 {
            let tn = random_network(seed + 300, 3 + (seed as usize % 6));
            for path in [plan_greedy(&tn), plan_optimal(&tn, 18).unwrap()] {
                let (_, stats) = contract_with_stats(&tn, &path).unwrap();
                assert_eq!(stats.madds, path.total_cost(), "seed {seed}");
            }
        }
    }

    #[test]
    fn matrix_chain_greedy_vs_optimal() {
        // (2x8)(8x8)(8x2): bracketing matters.
        let mut label_dims = BTreeMap::new();
        for (l, d) in [(0, 2u64), (1, 8), (2, 8), (3, 2)] {
            label_dims.insert(l, d);
        }
        let mk = |r: u64, c_: u64, labels: Vec<usize>| TnNode {
            tensor: ArrayD::from_elem(IxDyn(&[r as usize, c_ as usize]), c(1.0, 0.0)),
            labels,
        };
        let tn = TensorNetwork {
            nodes: vec![
                mk(2, 8, vec![0, 1]),
                mk(8, 8, vec![1, 2]),
                mk(8, 2, vec![2, 3]),
            ],
            open: vec![0, 3],
            scalar: c(1.0, 0.0),
            label_dims,
        };
        let optimal = plan_optimal(&tn, 18).unwrap();
        // Either end-first bracketing costs 2*8*8 + 2*8*2; middle-first costs more.
        assert_eq!(optimal.total_cost(), 2 * 8 * 8 + 2 * 8 * 2);
        let greedy = plan_greedy(&tn);
        assert!(greedy.total_cost() <= 8 * 8 * 2 + 2 * 8 * 2);
        assert!(optimal.total_cost() <= greedy.total_cost());
    }

    #[test]
    fn cap_monotonicity_embedding() {
        // Raising caps never changes amplitudes representable at smaller caps.
        let d = g::create(&[1, 1])
            .then(&g::bs())
            .unwrap()
            .then(&g::tbs(Param::lit(0.17)))
            .unwrap();
        let small = eval_diagram(&d).unwrap();
        let big = eval_diagram_with(
            &d,
            &TnOptions {
                infer: InferOptions {
                    default_input_dim: 2,
                    min_fock_dim: Some(5),
                },
                planner: Planner::default(),
            },
        )
        .unwrap();
        for i in 0..small.tensor.shape()[0] {
            for j in 0..small.tensor.shape()[1] {
                let dev = (small.tensor[[i, j]] - big.tensor[[i, j]]).norm();
                assert!(dev < 1e-12, "({i},{j}) differs by {dev}");
            }
        }
    }
}
