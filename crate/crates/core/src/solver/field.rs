//! Space-time grid functions with multilinear interpolation.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::anisotropy::ChainDims;
use crate::error::{Error, Result};
use crate::report::fmt17;
use crate::MAX_ND;

const MAGIC: &[u8; 8] = b"SLFIELD1";

/// Uniform axis `lo + k * step`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::config("grid.points", "need at least 2 points per axis"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config("grid", format!("empty axis [{lo}, {hi}]")));
        }
        Ok(Self { lo, step: (hi - lo) / (count - 1) as f64, count })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * (self.count - 1) as f64
    }

    pub fn at(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.hi()
        } else {
            self.lo + self.step * k as f64
        }
    }

    /// Cell index and local coordinate, extended linearly past either end.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let r = (x - self.lo) / self.step;
        let c = (r.floor().max(0.0) as usize).min(self.count - 2);
        let w = r - c as f64;
        (c, w, !(-1e-12..=1.0 + 1e-12).contains(&w))
    }
}

/// Scalar field on `times x axes[0] x ... x axes[nd-1]`.
///
/// Values are stored time-major, with the last coordinate varying fastest.
/// Outside the box the multilinear interpolant of the boundary cell is
/// extended; every such query increments [`SampledField::extrapolations`].
#[derive(Debug)]
pub struct SampledField {
    pub dims: ChainDims,
    pub times: Vec<f64>,
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    extrapolations: AtomicUsize,
}

impl Clone for SampledField {
    fn clone(&self) -> Self {
        Self {
            dims: self.dims,
            times: self.times.clone(),
            axes: self.axes.clone(),
            values: self.values.clone(),
            extrapolations: AtomicUsize::new(self.extrapolations.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for SampledField {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.times == other.times && self.axes == other.axes && self.values == other.values
    }
}

impl SampledField {
    /// Zero field on the given grid.
    pub fn zeros(dims: ChainDims, times: Vec<f64>, axes: Vec<Axis>) -> Result<Self> {
        if axes.len() != dims.nd() {
            return Err(Error::Shape { expected: dims.nd(), got: axes.len() });
        }
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("grid.times", "time grid must be nonempty and strictly increasing"));
        }
        let len = times.len() * axes.iter().map(|a| a.count).product::<usize>();
        Ok(Self { dims, times, axes, values: vec![0.0; len], extrapolations: AtomicUsize::new(0) })
    }

    /// Field sampled from `f(t, x)`.
    pub fn from_fn(dims: ChainDims, times: Vec<f64>, axes: Vec<Axis>, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        let mut out = Self::zeros(dims, times, axes)?;
        let sl = out.space_len();
        let mut x = vec![0.0; out.axes.len()];
        for ti in 0..out.times.len() {
            for k in 0..sl {
                out.node_into(k, &mut x);
                out.values[ti * sl + k] = f(out.times[ti], &x);
            }
        }
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("sampled field has non-finite values".into()));
        }
        Ok(out)
    }

    pub fn space_len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Coordinates of spatial node `k`.
    pub fn node_into(&self, mut k: usize, out: &mut [f64]) {
        for j in (0..self.axes.len()).rev() {
            let a = &self.axes[j];
            out[j] = a.at(k % a.count);
            k /= a.count;
        }
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        self.node_into(k, &mut x);
        x
    }

    pub fn slice(&self, ti: usize) -> &[f64] {
        let sl = self.space_len();
        &self.values[ti * sl..(ti + 1) * sl]
    }

    pub fn slice_mut(&mut self, ti: usize) -> &mut [f64] {
        let sl = self.space_len();
        &mut self.values[ti * sl..(ti + 1) * sl]
    }

    /// Number of queries answered by extension outside the box.
    pub fn extrapolations(&self) -> usize {
        self.extrapolations.load(Ordering::Relaxed)
    }

    pub fn reset_extrapolations(&self) {
        self.extrapolations.store(0, Ordering::Relaxed);
    }

    /// Multilinear interpolation on time slice `ti`.
    pub fn interp_slice(&self, ti: usize, x: &[f64]) -> f64 {
        let nd = self.axes.len();
        let vals = self.slice(ti);
        let mut cell = [0usize; MAX_ND];
        let mut w = [0.0; MAX_ND];
        let mut outside = false;
        for j in 0..nd {
            let (c, wj, o) = self.axes[j].locate(x[j]);
            cell[j] = c;
            w[j] = wj;
            outside |= o;
        }
        if outside {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << nd) {
            let mut idx = 0;
            let mut wt = 1.0;
            for j in 0..nd {
                let bit = (corner >> (nd - 1 - j)) & 1;
                idx = idx * self.axes[j].count + cell[j] + bit;
                wt *= if bit == 1 { w[j] } else { 1.0 - w[j] };
            }
            acc += wt * vals[idx];
        }
        acc
    }

    /// Time bracket `(i, weight)` for `t`, clamped to the time grid.
    fn time_bracket(&self, t: f64) -> (usize, f64) {
        let nt = self.times.len();
        if nt == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[nt - 1] {
            return (nt - 2, 1.0);
        }
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(nt - 2);
        (i, (t - self.times[i]) / (self.times[i + 1] - self.times[i]))
    }

    /// Multilinear in space, linear in time.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let (i, w) = self.time_bracket(t);
        if self.times.len() == 1 || w == 0.0 {
            return self.interp_slice(i, x);
        }
        if w == 1.0 {
            return self.interp_slice(i + 1, x);
        }
        (1.0 - w) * self.interp_slice(i, x) + w * self.interp_slice(i + 1, x)
    }

    /// Central finite difference along `coords` (order 0, 1 or 2) with the grid steps.
    pub fn derivative(&self, t: f64, x: &[f64], coords: &[usize]) -> Result<f64> {
        let nd = self.axes.len();
        if coords.iter().any(|&c| c >= nd) {
            return Err(Error::Shape { expected: nd, got: coords.iter().max().unwrap() + 1 });
        }
        let mut y = [0.0; MAX_ND];
        y[..nd].copy_from_slice(x);
        Ok(match *coords {
            [] => self.eval(t, x),
            [a] => {
                let h = self.axes[a].step;
                y[a] = x[a] + h;
                let p = self.eval(t, &y[..nd]);
                y[a] = x[a] - h;
                let m = self.eval(t, &y[..nd]);
                (p - m) / (2.0 * h)
            }
            [a, b] if a == b => {
                let h = self.axes[a].step;
                let c = self.eval(t, x);
                y[a] = x[a] + h;
                let p = self.eval(t, &y[..nd]);
                y[a] = x[a] - h;
                let m = self.eval(t, &y[..nd]);
                (p - 2.0 * c + m) / (h * h)
            }
            [a, b] => {
                let (ha, hb) = (self.axes[a].step, self.axes[b].step);
                let mut acc = 0.0;
                for (sa, sb, sg) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    y[a] = x[a] + sa * ha;
                    y[b] = x[b] + sb * hb;
                    acc += sg * self.eval(t, &y[..nd]);
                }
                acc / (4.0 * ha * hb)
            }
            _ => return Err(Error::Unsupported(format!("field derivative of order {}", coords.len()))),
        })
    }

    /// `x` lies at least `margin` grid steps inside the box in every coordinate.
    pub fn in_interior(&self, x: &[f64], margin: f64) -> bool {
        self.axes.iter().zip(x).all(|(a, &v)| v >= a.lo + margin * a.step && v <= a.hi() - margin * a.step)
    }

    /// Spatial node indices at least `margin` nodes away from the boundary.
    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.axes.len()];
        (0..self.space_len())
            .filter(|&k| {
                let mut r = k;
                for j in (0..self.axes.len()).rev() {
                    idx[j] = r % self.axes[j].count;
                    r /= self.axes[j].count;
                }
                idx.iter().zip(&self.axes).all(|(&i, a)| i >= margin && i + margin < a.count)
            })
            .collect()
    }

    fn coord_names(&self) -> Vec<String> {
        let d = self.dims.d;
        (0..self.axes.len())
            .map(|k| if d == 1 { format!("x{}", k + 1) } else { format!("x{}_{}", k / d + 1, k % d + 1) })
            .collect()
    }

    /// CSV with columns `t, x1..x_nd, u`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.coord_names());
        header.push("u".into());
        writeln!(w, "{}", header.join(","))?;
        let sl = self.space_len();
        let mut x = vec![0.0; self.axes.len()];
        for (ti, &t) in self.times.iter().enumerate() {
            for k in 0..sl {
                self.node_into(k, &mut x);
                let mut row = vec![fmt17(t)];
                row.extend(x.iter().map(|v| fmt17(*v)));
                row.push(fmt17(self.values[ti * sl + k]));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    /// Compact little-endian binary form.
    ///
    /// Header: magic, `n`, `d` (u64), `gamma`, `T` (f64), time count and
    /// times, then per axis `count` (u64), `lo`, `step` (f64). Payload:
    /// values in storage order.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.dims.n as u64, self.dims.d as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.dims.gamma, self.dims.horizon] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for a in &self.axes {
            w.write_all(&(a.count as u64).to_le_bytes())?;
            w.write_all(&a.lo.to_le_bytes())?;
            w.write_all(&a.step.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Numerical("not a sampled-field file".into()));
        }
        let mut u64_at = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let n = u64_at()? as usize;
        let d = u64_at()? as usize;
        let gamma = f64::from_bits(u64_at()?);
        let horizon = f64::from_bits(u64_at()?);
        let dims = ChainDims::new(n, d, gamma, horizon)?;
        let nt = u64_at()? as usize;
        if nt > 1 << 24 {
            return Err(Error::Numerical("time count in header is implausible".into()));
        }
        let times = (0..nt).map(|_| u64_at().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        let mut axes = Vec::with_capacity(dims.nd());
        for _ in 0..dims.nd() {
            let count = u64_at()? as usize;
            let lo = f64::from_bits(u64_at()?);
            let step = f64::from_bits(u64_at()?);
            if !(2..=1 << 16).contains(&count) || !(step > 0.0) {
                return Err(Error::Numerical("axis in header is invalid".into()));
            }
            axes.push(Axis { lo, step, count });
        }
        let mut field = Self::zeros(dims, times, axes)?;
        for v in field.values.iter_mut() {
            *v = f64::from_bits(u64_at()?);
        }
        Ok(field)
    }
}
