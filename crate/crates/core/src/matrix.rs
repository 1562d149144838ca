//! Small dense matrices: symmetric K×K block matrices and a Cholesky solver.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Scalar;

/// Symmetric `k × k` matrix stored densely. Writes go to both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<V> {
    k: usize,
    data: Vec<V>,
}

impl<V: Copy> SymMatrix<V> {
    pub fn filled(k: usize, value: V) -> Self {
        Self {
            k,
            data: vec![value; k * k],
        }
    }

    /// Builds from `f(a, b)` evaluated on the upper triangle `a <= b`.
    pub fn from_upper(k: usize, mut f: impl FnMut(usize, usize) -> V) -> Self
    where
        V: Default,
    {
        let mut m = Self::filled(k, V::default());
        for a in 0..k {
            for b in a..k {
                m.set(a, b, f(a, b));
            }
        }
        m
    }

    /// Builds from nested rows, rejecting non-square or asymmetric input.
    pub fn from_rows(rows: Vec<Vec<V>>) -> Result<Self, String>
    where
        V: PartialEq,
    {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(format!("matrix is not {k}x{k}"));
        }
        let data: Vec<V> = rows.into_iter().flatten().collect();
        for a in 0..k {
            for b in (a + 1)..k {
                if data[a * k + b] != data[b * k + a] {
                    return Err(format!("matrix is not symmetric at ({a}, {b})"));
                }
            }
        }
        Ok(Self { k, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> V {
        self.data[a * self.k + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, value: V) {
        self.data[a * self.k + b] = value;
        self.data[b * self.k + a] = value;
    }

    pub fn rows(&self) -> Vec<Vec<V>> {
        self.data.chunks(self.k.max(1)).take(self.k).map(<[V]>::to_vec).collect()
    }

    /// Upper-triangle entries `(a, b, value)` with `a <= b`, row-major.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, V)> + '_ {
        (0..self.k).flat_map(move |a| (a..self.k).map(move |b| (a, b, self.get(a, b))))
    }

    /// Relabels rows/columns: entry `(new[a], new[b])` takes old `(a, b)`.
    pub fn permuted(&self, new_label: &[usize]) -> Self {
        let mut out = self.clone();
        for a in 0..self.k {
            for b in 0..self.k {
                out.data[new_label[a] * self.k + new_label[b]] = self.get(a, b);
            }
        }
        out
    }

    pub fn map<W: Copy>(&self, f: impl Fn(V) -> W) -> SymMatrix<W> {
        SymMatrix {
            k: self.k,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Index of `(a, b)`, `a <= b`, in the row-major upper triangle of a `k × k` matrix.
#[inline]
pub fn upper_index(k: usize, a: usize, b: usize) -> usize {
    debug_assert!(a <= b && b < k);
    a * (2 * k - a + 1) / 2 + (b - a)
}

impl<V: Copy + Serialize> Serialize for SymMatrix<V> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de, V: Copy + PartialEq + Deserialize<'de>> Deserialize<'de> for SymMatrix<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<V>>::deserialize(d)?;
        SymMatrix::from_rows(rows).map_err(D::Error::custom)
    }
}

/// Solves `m x = rhs` for symmetric positive-definite `m` (row-major, `n × n`).
///
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky_solve<T: Scalar>(m: &[T], rhs: &[T]) -> Option<Vec<T>> {
    let n = rhs.len();
    debug_assert_eq!(m.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    Some(y)
}
