//! Signals on groups and homogeneous spaces, and the three equivariant linear
//! maps between them.
//!
//! All three operations reduce to one gather-matmul driven by a precomputed
//! [`GatherTable`]:
//!
//! * G-Conv, `out(y) = Σᵢ Σ_{g∈S} fᵢ(y·g⁻¹) h(g)`, table `idx[y][s] = y·S[s]⁻¹`;
//! * H-Corr, `out(g) = Σᵢ Σ_{x∈S} fᵢ(g·x) h(x)`, table `idx[g][s] = g·S[s]`;
//! * H-Conv, `out(y) = Σᵢ Σ_{g∈G} fᵢ(g·η) h(g⁻¹·y)`, where for each filter
//!   point `S[s]` the table lists the `|Stab|` points `g·η` with `g·S[s] = y`.
//!
//! Signals carry a leading batch dimension: data is `[B, rows, C]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{param_err, Error, Result};
use crate::group::{FiniteGroup, GroupName};
use crate::hspace::{HSpace, HSpaceKind};
use crate::tensor::{gemm, Tensor};

fn check_data(data: &Tensor, rows: usize, what: &str) -> Result<()> {
    if data.shape().len() != 3 || data.dim(1) != rows {
        return Err(param_err!("{what}: expected [B, {rows}, C] data, got {:?}", data.shape()));
    }
    if !data.is_finite() {
        return Err(Error::Numeric(format!("{what}: non-finite values")));
    }
    Ok(())
}

fn batched(data: Tensor) -> Result<Tensor> {
    match data.shape().len() {
        2 => {
            let (r, c) = (data.dim(0), data.dim(1));
            data.reshape(&[1, r, c])
        }
        _ => Ok(data),
    }
}

/// A function `f: G → ℝᶜ` (per batch entry).
#[derive(Clone, Debug)]
pub struct GroupSignal {
    group: Arc<FiniteGroup>,
    data: Tensor,
}

impl GroupSignal {
    /// `data` is `[|G|, C]` or `[B, |G|, C]`.
    pub fn new(group: Arc<FiniteGroup>, data: Tensor) -> Result<Self> {
        let data = batched(data)?;
        check_data(&data, group.order(), "group signal")?;
        Ok(GroupSignal { group, data })
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.data.dim(0)
    }

    pub fn channels(&self) -> usize {
        self.data.dim(2)
    }

    /// Row `y` of batch entry `b`.
    pub fn row(&self, b: usize, y: usize) -> &[f64] {
        let (n, c) = (self.data.dim(1), self.data.dim(2));
        &self.data.data()[(b * n + y) * c..(b * n + y + 1) * c]
    }
}

/// A function `f: X → ℝᶜ` on a homogeneous space (per batch entry).
#[derive(Clone, Debug)]
pub struct HSpaceSignal {
    hspace: Arc<HSpace>,
    data: Tensor,
}

impl HSpaceSignal {
    /// `data` is `[|X|, C]` or `[B, |X|, C]`.
    pub fn new(hspace: Arc<HSpace>, data: Tensor) -> Result<Self> {
        let data = batched(data)?;
        check_data(&data, hspace.len(), "homogeneous-space signal")?;
        Ok(HSpaceSignal { hspace, data })
    }

    pub fn hspace(&self) -> &Arc<HSpace> {
        &self.hspace
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.data.dim(0)
    }

    pub fn channels(&self) -> usize {
        self.data.dim(2)
    }

    pub fn row(&self, b: usize, x: usize) -> &[f64] {
        let (n, c) = (self.data.dim(1), self.data.dim(2));
        &self.data.data()[(b * n + x) * c..(b * n + x + 1) * c]
    }
}

/// A filter with a fixed support and weights `[C_out, C_in, |S|]`.
///
/// The support holds group element indices for G-Conv filters and point
/// indices for H-Conv / H-Corr filters.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedFilter {
    support: Vec<usize>,
    weights: Tensor,
    bias: Option<Vec<f64>>,
}

impl LocalizedFilter {
    pub fn new(support: Vec<usize>, weights: Tensor) -> Result<Self> {
        if weights.shape().len() != 3 || weights.dim(2) != support.len() {
            return Err(param_err!(
                "filter weights must be [C_out, C_in, {}], got {:?}",
                support.len(),
                weights.shape()
            ));
        }
        if support.is_empty() {
            return Err(param_err!("filter support is empty"));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(param_err!("filter support has repeated indices"));
        }
        Ok(LocalizedFilter { support, weights, bias: None })
    }

    /// Adds a per-output-channel bias (constant over the domain).
    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.out_channels() {
            return Err(param_err!("bias length {} != C_out {}", bias.len(), self.out_channels()));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dim(1)
    }

    /// Whether the support generates the whole group. Supports inside a
    /// proper subgroup can never see the whole input, however deep the stack.
    pub fn spans_group(&self, group: &FiniteGroup) -> Result<bool> {
        Ok(group.generated_closure(&self.support)?.len() == group.order())
    }
}

/// Filter that copies its input: support `{e}`, identity across channels.
pub fn delta_filter(channels: usize) -> Result<LocalizedFilter> {
    if channels == 0 {
        return Err(param_err!("delta filter needs at least one channel"));
    }
    let mut w = Tensor::zeros(&[channels, channels, 1]);
    for c in 0..channels {
        w.data_mut()[c * channels + c] = 1.0;
    }
    LocalizedFilter::new(vec![0], w)
}

/// Precomputed gather indices: output row `r` and support slot `s` read the
/// input rows `idx[(r·|S| + s)·mult .. +mult]` (summed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatherTable {
    out_rows: usize,
    in_rows: usize,
    support_len: usize,
    multiplicity: usize,
    idx: Vec<u32>,
}

impl GatherTable {
    /// G-Conv: `idx[y][s] = y · S[s]⁻¹`.
    pub fn gconv(group: &FiniteGroup, support: &[usize]) -> Result<Self> {
        check_support(support, group.order())?;
        let n = group.order();
        let mut idx = Vec::with_capacity(n * support.len());
        for y in 0..n {
            for &g in support {
                idx.push(group.mul(y, group.inv(g)) as u32);
            }
        }
        Ok(GatherTable { out_rows: n, in_rows: n, support_len: support.len(), multiplicity: 1, idx })
    }

    /// H-Corr: `idx[g][s] = g · S[s]` with `S ⊆ X`; output lives on `G`.
    pub fn hcorr(hspace: &HSpace, support: &[usize]) -> Result<Self> {
        check_support(support, hspace.len())?;
        let n = hspace.group().order();
        let mut idx = Vec::with_capacity(n * support.len());
        for g in 0..n {
            for &x in support {
                idx.push(hspace.act_unchecked(g, x) as u32);
            }
        }
        Ok(GatherTable {
            out_rows: n,
            in_rows: hspace.len(),
            support_len: support.len(),
            multiplicity: 1,
            idx,
        })
    }

    /// H-Conv: for output point `y` and filter point `S[s]`, the points `g·η`
    /// over all `g` with `g·S[s] = y`.
    pub fn hconv(hspace: &HSpace, support: &[usize]) -> Result<Self> {
        check_support(support, hspace.len())?;
        let nx = hspace.len();
        let mult = hspace.stabilizer_order();
        let s_len = support.len();
        let mut lists: Vec<Vec<u32>> = vec![Vec::with_capacity(mult); nx * s_len];
        for g in 0..hspace.group().order() {
            let p = hspace.act_unchecked(g, hspace.eta()) as u32;
            for (s, &x) in support.iter().enumerate() {
                let y = hspace.act_unchecked(g, x);
                lists[y * s_len + s].push(p);
            }
        }
        if lists.iter().any(|l| l.len() != mult) {
            return Err(Error::Consistency("H-Conv coset sizes disagree with |Stab|".into()));
        }
        Ok(GatherTable {
            out_rows: nx,
            in_rows: nx,
            support_len: s_len,
            multiplicity: mult,
            idx: lists.concat(),
        })
    }

    pub fn out_rows(&self) -> usize {
        self.out_rows
    }

    pub fn in_rows(&self) -> usize {
        self.in_rows
    }

    pub fn support_len(&self) -> usize {
        self.support_len
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    /// Input rows read by output row `r`, support slot `s`.
    pub fn sources(&self, r: usize, s: usize) -> &[u32] {
        let base = (r * self.support_len + s) * self.multiplicity;
        &self.idx[base..base + self.multiplicity]
    }

    fn gather(&self, x: &[f64], batch: usize, cin: usize) -> Vec<f64> {
        let (s_len, m) = (self.support_len, self.multiplicity);
        let mut a = vec![0.0; batch * self.out_rows * s_len * cin];
        for b in 0..batch {
            let xb = &x[b * self.in_rows * cin..(b + 1) * self.in_rows * cin];
            for r in 0..self.out_rows {
                for s in 0..s_len {
                    let dst_at = ((b * self.out_rows + r) * s_len + s) * cin;
                    let dst = &mut a[dst_at..dst_at + cin];
                    for &src in &self.idx[(r * s_len + s) * m..(r * s_len + s + 1) * m] {
                        let row = &xb[src as usize * cin..(src as usize + 1) * cin];
                        for (d, v) in dst.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
        }
        a
    }

    fn scatter(&self, ga: &[f64], batch: usize, cin: usize) -> Vec<f64> {
        let (s_len, m) = (self.support_len, self.multiplicity);
        let mut gx = vec![0.0; batch * self.in_rows * cin];
        for b in 0..batch {
            let gxb = &mut gx[b * self.in_rows * cin..(b + 1) * self.in_rows * cin];
            for r in 0..self.out_rows {
                for s in 0..s_len {
                    let src_at = ((b * self.out_rows + r) * s_len + s) * cin;
                    let src = &ga[src_at..src_at + cin];
                    for &dst in &self.idx[(r * s_len + s) * m..(r * s_len + s + 1) * m] {
                        let row = &mut gxb[dst as usize * cin..(dst as usize + 1) * cin];
                        for (d, v) in row.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
        gx
    }
}

fn check_support(support: &[usize], n: usize) -> Result<()> {
    if support.is_empty() {
        return Err(param_err!("empty support"));
    }
    if let Some(&bad) = support.iter().find(|&&s| s >= n) {
        return Err(param_err!("support index {bad} out of range (domain size {n})"));
    }
    Ok(())
}

/// Weights `[C_out, C_in, S]` rearranged as the `[S·C_in, C_out]` GEMM operand.
fn weight_matrix(w: &Tensor) -> Vec<f64> {
    let (co, ci, s) = (w.dim(0), w.dim(1), w.dim(2));
    let mut m = vec![0.0; s * ci * co];
    for o in 0..co {
        for i in 0..ci {
            for k in 0..s {
                m[(k * ci + i) * co + o] = w.data()[(o * ci + i) * s + k];
            }
        }
    }
    m
}

/// Forward gather-matmul. `x` is `[B, in_rows, C_in]`; returns `[B, out_rows, C_out]`.
pub fn gather_forward(table: &GatherTable, x: &Tensor, weights: &Tensor, bias: Option<&[f64]>) -> Result<Tensor> {
    let (batch, cin) = check_gather_shapes(table, x, weights)?;
    let cout = weights.dim(0);
    let k = table.support_len * cin;
    let a = table.gather(x.data(), batch, cin);
    let wm = weight_matrix(weights);
    let rows = batch * table.out_rows;
    let mut out = vec![0.0; rows * cout];
    gemm(rows, k, cout, &a, false, &wm, false, &mut out, false);
    if let Some(bias) = bias {
        for r in 0..rows {
            for (o, bv) in bias.iter().enumerate() {
                out[r * cout + o] += bv;
            }
        }
    }
    Tensor::from_vec(&[batch, table.out_rows, cout], out)
}

/// Gradients of [`gather_forward`] with respect to input, weights and bias.
pub struct GatherGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Reverse pass: the weight gradient is a gather-reduce over the same table,
/// the input gradient scatters through the transposed table.
pub fn gather_backward(table: &GatherTable, x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<GatherGrads> {
    let (batch, cin) = check_gather_shapes(table, x, weights)?;
    let (cout, s_len) = (weights.dim(0), table.support_len);
    let k = s_len * cin;
    let rows = batch * table.out_rows;
    if grad_out.shape() != [batch, table.out_rows, cout] {
        return Err(param_err!("upstream gradient has shape {:?}", grad_out.shape()));
    }
    let a = table.gather(x.data(), batch, cin);
    let mut gwm = vec![0.0; k * cout];
    gemm(k, rows, cout, &a, true, grad_out.data(), false, &mut gwm, false);
    let mut gw = Tensor::zeros(weights.shape());
    for o in 0..cout {
        for i in 0..cin {
            for s in 0..s_len {
                gw.data_mut()[(o * cin + i) * s_len + s] = gwm[(s * cin + i) * cout + o];
            }
        }
    }
    let wm = weight_matrix(weights);
    let mut ga = vec![0.0; rows * k];
    gemm(rows, cout, k, grad_out.data(), false, &wm, true, &mut ga, false);
    let gx = table.scatter(&ga, batch, cin);
    let mut gb = vec![0.0; cout];
    for r in 0..rows {
        for (o, g) in gb.iter_mut().enumerate() {
            *g += grad_out.data()[r * cout + o];
        }
    }
    Ok(GatherGrads { input: Tensor::from_vec(x.shape(), gx)?, weights: gw, bias: gb })
}

fn check_gather_shapes(table: &GatherTable, x: &Tensor, w: &Tensor) -> Result<(usize, usize)> {
    if x.shape().len() != 3 || x.dim(1) != table.in_rows {
        return Err(param_err!("input must be [B, {}, C], got {:?}", table.in_rows, x.shape()));
    }
    if w.shape().len() != 3 || w.dim(2) != table.support_len {
        return Err(param_err!("weights must be [C_out, C_in, {}], got {:?}", table.support_len, w.shape()));
    }
    if w.dim(1) != x.dim(2) {
        return Err(param_err!("channel mismatch: filter expects {}, signal has {}", w.dim(1), x.dim(2)));
    }
    Ok((x.dim(0), x.dim(2)))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum TableKey {
    GConv(GroupName, Vec<usize>),
    HCorr(GroupName, HSpaceKind, Vec<usize>),
    HConv(GroupName, HSpaceKind, Vec<usize>),
}

fn cached(key: TableKey, build: impl FnOnce() -> Result<GatherTable>) -> Result<Arc<GatherTable>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<GatherTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let t = Arc::new(build()?);
    cache.lock().expect("table cache poisoned").insert(key, t.clone());
    Ok(t)
}

/// Cached G-Conv table for `(group, support)`.
pub fn gconv_table(group: &FiniteGroup, support: &[usize]) -> Result<Arc<GatherTable>> {
    cached(TableKey::GConv(group.name(), support.to_vec()), || GatherTable::gconv(group, support))
}

/// Cached H-Corr table for `(space, support)`.
pub fn hcorr_table(hspace: &HSpace, support: &[usize]) -> Result<Arc<GatherTable>> {
    let key = TableKey::HCorr(hspace.group().name(), hspace.kind(), support.to_vec());
    cached(key, || GatherTable::hcorr(hspace, support))
}

/// Cached H-Conv table for `(space, support)`.
pub fn hconv_table(hspace: &HSpace, support: &[usize]) -> Result<Arc<GatherTable>> {
    let key = TableKey::HConv(hspace.group().name(), hspace.kind(), support.to_vec());
    cached(key, || GatherTable::hconv(hspace, support))
}

/// Group convolution with a localized filter on `G`. Linear; apply
/// [`relu`] separately.
pub fn gconv(f: &GroupSignal, h: &LocalizedFilter) -> Result<GroupSignal> {
    let table = gconv_table(f.group(), h.support())?;
    let out = gather_forward(&table, f.data(), h.weights(), h.bias())?;
    GroupSignal::new(f.group().clone(), out)
}

/// Homogeneous-space convolution; filter support is a set of points of `X`.
pub fn hconv(f: &HSpaceSignal, h: &LocalizedFilter) -> Result<HSpaceSignal> {
    let table = hconv_table(f.hspace(), h.support())?;
    let out = gather_forward(&table, f.data(), h.weights(), h.bias())?;
    HSpaceSignal::new(f.hspace().clone(), out)
}

/// Homogeneous-space correlation; lifts a signal on `X` to the group.
pub fn hcorr(f: &HSpaceSignal, h: &LocalizedFilter) -> Result<GroupSignal> {
    let table = hcorr_table(f.hspace(), h.support())?;
    let out = gather_forward(&table, f.data(), h.weights(), h.bias())?;
    GroupSignal::new(f.hspace().group().clone(), out)
}

/// Permutes rows: `out[b][r] = x[b][perm[r]]`.
pub fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let (batch, n, c) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for (r, &src) in perm.iter().enumerate() {
            let d = (b * n + r) * c;
            let s = (b * n + src) * c;
            out[d..d + c].copy_from_slice(&x.data()[s..s + c]);
        }
    }
    Tensor::from_vec(x.shape(), out).expect("permutation preserves shape")
}

/// `(T_k f)(y) = f(k⁻¹·y)`.
pub fn apply_action(k: usize, f: &GroupSignal) -> Result<GroupSignal> {
    let g = f.group();
    if k >= g.order() {
        return Err(param_err!("element {k} out of range"));
    }
    let kinv = g.inv(k);
    let perm: Vec<usize> = (0..g.order()).map(|y| g.mul(kinv, y)).collect();
    Ok(GroupSignal { group: g.clone(), data: permute_rows(f.data(), &perm) })
}

/// `(T_k f)(x) = f(k⁻¹·x)`.
pub fn apply_action_hspace(k: usize, f: &HSpaceSignal) -> Result<HSpaceSignal> {
    let hs = f.hspace();
    if k >= hs.group().order() {
        return Err(param_err!("element {k} out of range"));
    }
    let kinv = hs.group().inv(k);
    let perm: Vec<usize> = (0..hs.len()).map(|x| hs.act_unchecked(kinv, x)).collect();
    Ok(HSpaceSignal { hspace: hs.clone(), data: permute_rows(f.data(), &perm) })
}

/// Mean over the domain; returns `[B, C]`.
pub fn global_pool(data: &Tensor) -> Tensor {
    let (batch, n, c) = (data.dim(0), data.dim(1), data.dim(2));
    let mut out = vec![0.0; batch * c];
    for b in 0..batch {
        for r in 0..n {
            let row = &data.data()[(b * n + r) * c..(b * n + r + 1) * c];
            for (o, v) in out[b * c..(b + 1) * c].iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    let inv = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Tensor::from_vec(&[batch, c], out).expect("pool shape")
}

/// Elementwise `max(0, ·)`.
pub fn relu(data: &Tensor) -> Tensor {
    let v = data.data().iter().map(|&x| x.max(0.0)).collect();
    Tensor::from_vec(data.shape(), v).expect("relu shape")
}

/// Output positions that depend on input after `layers` stacked G-Convs
/// with support `S`, as seen from output `y`: `y · (S⁻¹)^layers`.
pub fn receptive_field(group: &FiniteGroup, support: &[usize], layers: usize, y: usize) -> Vec<usize> {
    let inv: Vec<usize> = support.iter().map(|&g| group.inv(g)).collect();
    let mut field = vec![y];
    for _ in 0..layers {
        field = group.product_set(&field, &inv);
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::build_group;
    use crate::hspace::build_hspace;

    fn cyc4() -> Arc<FiniteGroup> {
        Arc::new(build_group(GroupName::Cyclic(4)).unwrap())
    }

    #[test]
    fn cyclic_identity_weight_copies_input() {
        let g = cyc4();
        let f = GroupSignal::new(g.clone(), Tensor::from_vec(&[4, 1], vec![1., 2., 3., 4.]).unwrap()).unwrap();
        let h = LocalizedFilter::new(vec![0, 1, 2, 3], Tensor::from_vec(&[1, 1, 4], vec![1., 0., 0., 0.]).unwrap())
            .unwrap();
        let out = gconv(&f, &h).unwrap();
        assert_eq!(out.data().data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn cyclic_shift_weight() {
        // weight on element 1: out(y) = f(y - 1)
        let g = cyc4();
        let f = GroupSignal::new(g, Tensor::from_vec(&[4, 1], vec![1., 2., 3., 4.]).unwrap()).unwrap();
        let h = LocalizedFilter::new(vec![1], Tensor::from_vec(&[1, 1, 1], vec![1.]).unwrap()).unwrap();
        assert_eq!(gconv(&f, &h).unwrap().data().data(), &[4., 1., 2., 3.]);
    }

    #[test]
    fn delta_filter_is_identity() {
        let g = Arc::new(build_group(GroupName::Icosahedral).unwrap());
        let data: Vec<f64> = (0..60 * 3).map(|i| (i as f64).sin()).collect();
        let f = GroupSignal::new(g, Tensor::from_vec(&[60, 3], data).unwrap()).unwrap();
        let d = delta_filter(3).unwrap();
        let mut out = f.clone();
        for _ in 0..3 {
            out = gconv(&out, &d).unwrap();
        }
        assert_eq!(out.data(), f.data());
        assert_eq!(global_pool(out.data()), global_pool(f.data()));
    }

    #[test]
    fn filter_validation() {
        assert!(LocalizedFilter::new(vec![0, 0], Tensor::zeros(&[1, 1, 2])).is_err());
        assert!(LocalizedFilter::new(vec![0, 1], Tensor::zeros(&[1, 1, 3])).is_err());
        assert!(delta_filter(0).is_err());
        let g = cyc4();
        let f = GroupSignal::new(g, Tensor::zeros(&[4, 2])).unwrap();
        let h = LocalizedFilter::new(vec![0], Tensor::zeros(&[1, 3, 1])).unwrap();
        assert!(matches!(gconv(&f, &h), Err(Error::Parameter(_))));
    }

    #[test]
    fn non_finite_signal_rejected() {
        let g = cyc4();
        let mut t = Tensor::zeros(&[4, 1]);
        t.data_mut()[2] = f64::NAN;
        assert!(GroupSignal::new(g, t).is_err());
    }

    #[test]
    fn hcorr_constant_input_gives_constant_output() {
        let g = Arc::new(build_group(GroupName::Icosahedral).unwrap());
        let h12 = Arc::new(build_hspace(g, HSpaceKind::Vertices12).unwrap());
        let f = HSpaceSignal::new(h12, Tensor::full(&[12, 2], 0.7)).unwrap();
        let w = Tensor::from_vec(&[1, 2, 3], vec![0.1, -0.4, 0.3, 0.9, 0.2, -0.5]).unwrap();
        let out = hcorr(&f, &LocalizedFilter::new(vec![0, 4, 9], w).unwrap()).unwrap();
        let first = out.data().data()[0];
        assert!(out.data().data().iter().all(|v| (v - first).abs() < 1e-14));
    }

    #[test]
    fn hconv_zero_filter() {
        let g = Arc::new(build_group(GroupName::Icosahedral).unwrap());
        let h20 = Arc::new(build_hspace(g, HSpaceKind::Faces20).unwrap());
        let f = HSpaceSignal::new(h20, Tensor::full(&[20, 2], 1.3)).unwrap();
        let out = hconv(&f, &LocalizedFilter::new(vec![0, 1], Tensor::zeros(&[3, 2, 2])).unwrap()).unwrap();
        assert!(out.data().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_and_pool() {
        let t = Tensor::from_vec(&[1, 2, 1], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 2.0]);
        assert_eq!(global_pool(&Tensor::full(&[2, 5, 3], 4.0)).data(), &[4.0; 6]);
    }

    #[test]
    fn polar_rotation_shifts_pole_cells() {
        let g = Arc::new(build_group(GroupName::Icosahedral).unwrap());
        // 72° about +z
        let a = (0..60)
            .find(|&i| {
                let e = g.element(i);
                (e.angle() - 72f64.to_radians()).abs() < 1e-9 && e.axis().unwrap().z > 1.0 - 1e-12
            })
            .unwrap();
        let mut cycle = vec![0];
        for _ in 0..4 {
            cycle.push(g.mul(a, *cycle.last().unwrap()));
        }
        let data: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let f = GroupSignal::new(g.clone(), Tensor::from_vec(&[60, 1], data).unwrap()).unwrap();
        let t = apply_action(a, &f).unwrap();
        for m in 0..5 {
            assert_eq!(t.row(0, cycle[(m + 1) % 5])[0], f.row(0, cycle[m])[0]);
        }
    }
}
