//! Trajectory bookkeeping: block-Hankel matrices, persistency of excitation,
//! the past/future partition and the sliding initial-condition window.
//!
//! Signals are packed sample-major: `col(s_1, ..., s_T)` with each `s_t`
//! itself a `q`-vector, so sample `t` (0-based) occupies `signal[q·t .. q·t + q]`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::matquad::{rank_with_tolerance, DEFAULT_RTOL};

/// Recorded input/output sequences of an `m`-input, `p`-output system.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    m: usize,
    p: usize,
    u: Vec<f64>,
    y: Vec<f64>,
}

impl TrajectoryData {
    pub fn new(m: usize, p: usize, u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(invalid("input and output dimensions must be positive"));
        }
        if !u.len().is_multiple_of(m) {
            return Err(invalid(format!("input length {} is not a multiple of m = {m}", u.len())));
        }
        let t = u.len() / m;
        if y.len() != p * t {
            return Err(invalid(format!("output length {} does not match p·T = {}", y.len(), p * t)));
        }
        if !u.iter().chain(y.iter()).all(|x| x.is_finite()) {
            return Err(invalid("trajectory contains non-finite samples"));
        }
        Ok(Self { m, p, u, y })
    }

    /// An empty recording to be filled with [`TrajectoryData::push`].
    pub fn empty(m: usize, p: usize) -> Self {
        Self { m, p, u: Vec::new(), y: Vec::new() }
    }

    pub fn push(&mut self, u_t: &[f64], y_t: &[f64]) -> Result<()> {
        if u_t.len() != self.m || y_t.len() != self.p {
            return Err(invalid(format!(
                "sample dimensions ({}, {}) differ from (m, p) = ({}, {})",
                u_t.len(),
                y_t.len(),
                self.m,
                self.p
            )));
        }
        if !u_t.iter().chain(y_t).all(|x| x.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        self.u.extend_from_slice(u_t);
        self.y.extend_from_slice(y_t);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn p(&self) -> usize {
        self.p
    }
    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.u.len() / self.m
    }
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn input(&self, t: usize) -> &[f64] {
        &self.u[self.m * t..self.m * (t + 1)]
    }
    pub fn output(&self, t: usize) -> &[f64] {
        &self.y[self.p * t..self.p * (t + 1)]
    }

    /// Samples `start .. start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(invalid(format!("slice {start}+{len} exceeds length {}", self.len())));
        }
        Ok(Self {
            m: self.m,
            p: self.p,
            u: self.u[self.m * start..self.m * (start + len)].to_vec(),
            y: self.y[self.p * start..self.p * (start + len)].to_vec(),
        })
    }

    /// CSV with header `t,u1..um,y1..yp`, one row per sample, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.m).map(|i| format!("u{i}")));
        header.extend((1..=self.p).map(|i| format!("y{i}")));
        wr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.input(t).iter().chain(self.output(t)).map(|v| format!("{v:.16e}")));
            wr.write_record(&row)?;
        }
        wr.flush()
    }

    /// Parses the format written by [`TrajectoryData::write_csv`]; `m` and `p`
    /// are taken from the `u*`/`y*` header columns.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(|e| invalid(format!("CSV header: {e}")))?.clone();
        if header.get(0) != Some("t") {
            return Err(invalid("CSV header must start with `t`"));
        }
        let m = header.iter().filter(|h| h.starts_with('u')).count();
        let p = header.iter().filter(|h| h.starts_with('y')).count();
        if m + p + 1 != header.len() {
            return Err(invalid("CSV header must be `t,u1..um,y1..yp`"));
        }
        let mut data = Self::empty(m, p);
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| invalid(format!("CSV row {}: {e}", line + 2)))?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| invalid(format!("CSV row {}: {e}", line + 2)))?;
            if vals.len() != m + p {
                return Err(invalid(format!("CSV row {} has {} values, expected {}", line + 2, vals.len(), m + p)));
            }
            data.push(&vals[..m], &vals[m..])?;
        }
        Ok(data)
    }
}

/// The `q·depth × (T − depth + 1)` block-Hankel matrix of a `q`-dimensional signal.
pub fn build_hankel(signal: &[f64], q: usize, depth: usize) -> Result<DMatrix<f64>> {
    if q == 0 || depth == 0 {
        return Err(invalid("sample dimension and depth must be positive"));
    }
    if !signal.len().is_multiple_of(q) {
        return Err(invalid(format!("signal length {} is not a multiple of q = {q}", signal.len())));
    }
    let t = signal.len() / q;
    if t < depth {
        return Err(invalid(format!("signal has {t} samples, fewer than depth {depth}")));
    }
    let cols = t - depth + 1;
    Ok(DMatrix::from_fn(q * depth, cols, |i, j| signal[q * j + i]))
}

/// Whether the depth-`depth` Hankel matrix of `signal` has full row rank.
pub fn is_persistently_exciting(signal: &[f64], q: usize, depth: usize) -> Result<bool> {
    let h = build_hankel(signal, q, depth)?;
    Ok(rank_with_tolerance(&h, DEFAULT_RTOL)? == q * depth)
}

/// Data length recommended for `T_ini + N` windows of an order-`n` plant.
pub fn recommended_length(m: usize, t_ini: usize, horizon: usize, order: usize) -> usize {
    (m + 1) * (t_ini + horizon + order) - 1
}

/// Past/future partition of the input and output Hankel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlocks {
    t_ini: usize,
    horizon: usize,
    m: usize,
    p: usize,
    up: DMatrix<f64>,
    yp: DMatrix<f64>,
    uf: DMatrix<f64>,
    yf: DMatrix<f64>,
}

/// Splits depth-`(t_ini + horizon)` Hankel matrices of `data` into `U_P, U_f, Y_P, Y_f`.
///
/// With an order hint, data shorter than [`recommended_length`] is accepted
/// but logged.
pub fn partition(data: &TrajectoryData, t_ini: usize, horizon: usize, order_hint: Option<usize>) -> Result<HankelBlocks> {
    if t_ini == 0 || horizon == 0 {
        return Err(invalid("T_ini and N must be positive"));
    }
    let depth = t_ini + horizon;
    if data.len() < depth {
        return Err(invalid(format!("T = {} is shorter than T_ini + N = {depth}", data.len())));
    }
    if let Some(order) = order_hint {
        let need = recommended_length(data.m(), t_ini, horizon, order);
        if data.len() < need {
            log::warn!("T = {} is below the recommended (m+1)(T_ini+N+n)-1 = {need}", data.len());
        }
    }
    let (m, p) = (data.m(), data.p());
    let hu = build_hankel(data.u(), m, depth)?;
    let hy = build_hankel(data.y(), p, depth)?;
    Ok(HankelBlocks {
        t_ini,
        horizon,
        m,
        p,
        up: hu.rows(0, m * t_ini).clone_owned(),
        uf: hu.rows(m * t_ini, m * horizon).clone_owned(),
        yp: hy.rows(0, p * t_ini).clone_owned(),
        yf: hy.rows(p * t_ini, p * horizon).clone_owned(),
    })
}

impl HankelBlocks {
    /// Builds blocks from explicit matrices (e.g. after column resampling).
    pub fn from_parts(
        t_ini: usize,
        horizon: usize,
        up: DMatrix<f64>,
        yp: DMatrix<f64>,
        uf: DMatrix<f64>,
        yf: DMatrix<f64>,
    ) -> Result<Self> {
        if t_ini == 0 || horizon == 0 || !up.nrows().is_multiple_of(t_ini) || !yp.nrows().is_multiple_of(t_ini) {
            return Err(invalid("block row counts must be multiples of T_ini"));
        }
        let m = up.nrows() / t_ini;
        let p = yp.nrows() / t_ini;
        if m == 0 || p == 0 || uf.nrows() != m * horizon || yf.nrows() != p * horizon {
            return Err(invalid("future block row counts must be m·N and p·N"));
        }
        let cols = up.ncols();
        if cols == 0 || yp.ncols() != cols || uf.ncols() != cols || yf.ncols() != cols {
            return Err(invalid("all blocks must share a positive column count"));
        }
        Ok(Self { t_ini, horizon, m, p, up, yp, uf, yf })
    }

    pub fn t_ini(&self) -> usize {
        self.t_ini
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn p(&self) -> usize {
        self.p
    }
    /// Column count `T − T_ini − N + 1`, the dimension of `g`.
    pub fn cols(&self) -> usize {
        self.up.ncols()
    }
    pub fn up(&self) -> &DMatrix<f64> {
        &self.up
    }
    pub fn yp(&self) -> &DMatrix<f64> {
        &self.yp
    }
    pub fn uf(&self) -> &DMatrix<f64> {
        &self.uf
    }
    pub fn yf(&self) -> &DMatrix<f64> {
        &self.yf
    }

    /// `col(U_P, Y_P)`.
    pub fn past(&self) -> DMatrix<f64> {
        stack(&[&self.up, &self.yp])
    }

    /// `col(U_P, Y_P, U_f)`, whose columns are the regressors `φ`.
    pub fn regressor(&self) -> DMatrix<f64> {
        stack(&[&self.up, &self.yp, &self.uf])
    }

    /// Dimension of `φ = col(u_ini, y_ini, u)`.
    pub fn regressor_dim(&self) -> usize {
        (self.m + self.p) * self.t_ini + self.m * self.horizon
    }

    /// Applies the same column permutation to all four blocks.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let cols = self.cols();
        let mut seen = vec![false; cols];
        if perm.len() != cols || perm.iter().any(|&i| i >= cols || std::mem::replace(&mut seen[i], true)) {
            return Err(invalid("not a permutation of the block columns"));
        }
        let pick = |mat: &DMatrix<f64>| DMatrix::from_fn(mat.nrows(), cols, |i, j| mat[(i, perm[j])]);
        Ok(Self {
            t_ini: self.t_ini,
            horizon: self.horizon,
            m: self.m,
            p: self.p,
            up: pick(&self.up),
            yp: pick(&self.yp),
            uf: pick(&self.uf),
            yf: pick(&self.yf),
        })
    }
}

pub(crate) fn stack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.nrows()).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// The most recent `T_ini` input/output samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct InitWindow {
    t_ini: usize,
    m: usize,
    p: usize,
    u: Vec<f64>,
    y: Vec<f64>,
}

impl InitWindow {
    pub fn zeros(m: usize, p: usize, t_ini: usize) -> Self {
        Self { t_ini, m, p, u: vec![0.0; m * t_ini], y: vec![0.0; p * t_ini] }
    }

    pub fn new(m: usize, p: usize, t_ini: usize, u_ini: Vec<f64>, y_ini: Vec<f64>) -> Result<Self> {
        if m == 0 || p == 0 || t_ini == 0 {
            return Err(invalid("window dimensions must be positive"));
        }
        if u_ini.len() != m * t_ini || y_ini.len() != p * t_ini {
            return Err(invalid(format!(
                "window lengths ({}, {}) differ from (m·T_ini, p·T_ini) = ({}, {})",
                u_ini.len(),
                y_ini.len(),
                m * t_ini,
                p * t_ini
            )));
        }
        Ok(Self { t_ini, m, p, u: u_ini, y: y_ini })
    }

    /// The `t_ini` samples of `data` ending just before sample `end`.
    pub fn from_data(data: &TrajectoryData, t_ini: usize, end: usize) -> Result<Self> {
        if end < t_ini || end > data.len() {
            return Err(invalid(format!("window ending at {end} needs {t_ini} earlier samples")));
        }
        let s = data.slice(end - t_ini, t_ini)?;
        Self::new(data.m(), data.p(), t_ini, s.u, s.y)
    }

    pub fn t_ini(&self) -> usize {
        self.t_ini
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn u_ini(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u)
    }
    pub fn y_ini(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }
    /// `col(u_ini, y_ini)`.
    pub fn past(&self) -> DVector<f64> {
        DVector::from_iterator(self.u.len() + self.y.len(), self.u.iter().chain(self.y.iter()).cloned())
    }

    /// Drops the oldest sample and appends `(u_t, y_t)`.
    pub fn push(&mut self, u_t: &[f64], y_t: &[f64]) -> Result<()> {
        if u_t.len() != self.m || y_t.len() != self.p {
            return Err(invalid(format!(
                "sample dimensions ({}, {}) differ from (m, p) = ({}, {})",
                u_t.len(),
                y_t.len(),
                self.m,
                self.p
            )));
        }
        if !u_t.iter().chain(y_t).all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("non-finite window sample".into()));
        }
        self.u.rotate_left(self.m);
        let n = self.u.len();
        self.u[n - self.m..].copy_from_slice(u_t);
        self.y.rotate_left(self.p);
        let n = self.y.len();
        self.y[n - self.p..].copy_from_slice(y_t);
        Ok(())
    }
}

/// Functional form of [`InitWindow::push`].
pub fn window_push(w: &InitWindow, u_t: &[f64], y_t: &[f64]) -> Result<InitWindow> {
    let mut next = w.clone();
    next.push(u_t, y_t)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hankel_examples() {
        let h = build_hankel(&[1.0, 2.0, 3.0, 4.0], 1, 2).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]));
        let h = build_hankel(&[1.0, 2.0, 3.0], 1, 3).unwrap();
        assert_eq!(h, DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        // samples (1,3) and (2,4)
        let h = build_hankel(&[1.0, 3.0, 2.0, 4.0], 2, 1).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(build_hankel(&[1.0, 2.0], 1, 3).is_err());
    }

    #[test]
    fn persistency_examples() {
        assert!(!is_persistently_exciting(&[1.0; 4], 1, 2).unwrap());
        assert!(!is_persistently_exciting(&[1.0, 2.0, 4.0, 8.0, 16.0], 1, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let noise: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(is_persistently_exciting(&noise, 1, 5).unwrap());
    }

    #[test]
    fn partition_small() {
        let data = TrajectoryData::new(1, 1, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        let b = partition(&data, 1, 1, None).unwrap();
        assert_eq!(b.up(), &DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]));
        assert_eq!(b.uf(), &DMatrix::from_row_slice(1, 3, &[2.0, 3.0, 4.0]));
        assert!(partition(&data, 3, 2, None).is_err());
    }

    #[test]
    fn partition_converter_shapes() {
        let data = TrajectoryData::new(2, 3, vec![0.5; 1000], vec![0.25; 1500]).unwrap();
        let b = partition(&data, 40, 30, None).unwrap();
        assert_eq!(b.cols(), 431);
        assert_eq!(b.up().nrows(), 80);
        assert_eq!(b.yp().nrows(), 120);
        assert_eq!(b.uf().nrows(), 60);
        assert_eq!(b.yf().nrows(), 90);
        assert_eq!(b.regressor_dim(), 260);
    }

    #[test]
    fn window_fifo() {
        let w = InitWindow::new(1, 1, 2, vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        let w = window_push(&w, &[3.0], &[1.0]).unwrap();
        assert_eq!(w.u_ini().as_slice(), &[2.0, 3.0]);
        assert_eq!(w.y_ini().as_slice(), &[0.0, 1.0]);
        let w1 = InitWindow::new(1, 1, 1, vec![5.0], vec![6.0]).unwrap();
        let w1 = window_push(&w1, &[7.0], &[8.0]).unwrap();
        assert_eq!((w1.u_ini()[0], w1.y_ini()[0]), (7.0, 8.0));
        let mut w = InitWindow::zeros(2, 1, 3);
        for k in 0..3 {
            w.push(&[k as f64, -(k as f64)], &[10.0 + k as f64]).unwrap();
        }
        assert_eq!(w.u_ini().as_slice(), &[0.0, -0.0, 1.0, -1.0, 2.0, -2.0]);
        assert_eq!(w.y_ini().as_slice(), &[10.0, 11.0, 12.0]);
        assert!(w.push(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let data = TrajectoryData::new(2, 1, vec![0.1, -0.2, 1.0 / 3.0, 4.0], vec![1e-7, 2.5]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u1,u2,y1\n"));
        assert_eq!(TrajectoryData::read_csv(buf.as_slice()).unwrap(), data);
        let empty = TrajectoryData::empty(1, 2);
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,u1,y1,y2\n");
    }
}
