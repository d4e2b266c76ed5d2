//! Dense real matrices and the typed tensors that programs compile to.
//!
//! `⟦2⟧ = R²` is a 2×1 column and `⟦τ₁ -o τ₂⟧` is a `dim τ₂ × dim τ₁`
//! matrix. Storage is row-major; [`vec`] and [`reshape`] use the
//! column-major order that the compile rules are stated in.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{Name, Type};
use crate::parser::parse_type;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("type mismatch: expected `{expected}`, found `{found}`")]
    TypeMismatch { expected: Type, found: Type },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("incompatible operands: {0}")]
    Incompatible(String),
    #[error("`{0}` is not a function type")]
    NotAFunction(Type),
    #[error("malformed tensor json: {0}")]
    Json(String),
}

/// An untyped dense matrix. Vectors are single columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::ShapeMismatch { expected: (rows, cols), found: (data.len(), 1) });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn column(values: &[f64]) -> Matrix {
        Matrix { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != rhs.rows {
            return Err(TensorError::ShapeMismatch { expected: (self.cols, rhs.cols), found: rhs.shape() });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix, TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch { expected: self.shape(), found: rhs.shape() });
        }
        Ok(self.zip_with(rhs, |a, b| a + b))
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|a| k * a)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub(crate) fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), rhs.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Largest absolute entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, rhs: &Matrix) -> f64 {
        if self.shape() != rhs.shape() {
            return f64::INFINITY;
        }
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, row) in self.to_rows().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str("[")?;
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

/// Column-major flattening into a single column: `β[i + m·j] = α[i][j]`.
pub fn vec(m: &Matrix) -> Matrix {
    if m.cols == 1 {
        return m.clone();
    }
    let mut data = Vec::with_capacity(m.data.len());
    for j in 0..m.cols {
        for i in 0..m.rows {
            data.push(m.get(i, j));
        }
    }
    Matrix::column(&data)
}

pub fn dim(t: &Type) -> usize {
    match t {
        Type::Bool => 2,
        Type::Lolli(a, b) => dim(a) * dim(b),
    }
}

/// Shape of `⟦t⟧`: `(2, 1)` for `2`, `(dim τ₂, dim τ₁)` for `τ₁ -o τ₂`.
pub fn shape_of(t: &Type) -> (usize, usize) {
    match t {
        Type::Bool => (2, 1),
        Type::Lolli(a, b) => (dim(b), dim(a)),
    }
}

/// A real tensor in the vector space denoted by its type.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    ty: Type,
    mat: Matrix,
}

impl Tensor {
    pub fn new(ty: Type, mat: Matrix) -> Result<Tensor, TensorError> {
        let expected = shape_of(&ty);
        if mat.shape() != expected {
            return Err(TensorError::ShapeMismatch { expected, found: mat.shape() });
        }
        Ok(Tensor { ty, mat })
    }

    pub fn zeros(ty: Type) -> Tensor {
        let (r, c) = shape_of(&ty);
        Tensor { ty, mat: Matrix::zeros(r, c) }
    }

    /// `⟦tt⟧` or `⟦ff⟧`.
    pub fn boolean(b: bool) -> Tensor {
        let data = if b { [1.0, 0.0] } else { [0.0, 1.0] };
        Tensor { ty: Type::Bool, mat: Matrix::column(&data) }
    }

    pub fn from_rows(ty: Type, rows: &[Vec<f64>]) -> Result<Tensor, TensorError> {
        Tensor::new(ty, Matrix::from_rows(rows))
    }

    pub fn ty(&self) -> &Type {
        &self.ty
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mat.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.mat.data()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.mat.to_rows()
    }

    /// Column-major flattening of the underlying matrix.
    pub fn vec(&self) -> Matrix {
        vec(&self.mat)
    }

    fn same_type(&self, rhs: &Tensor) -> Result<(), TensorError> {
        if self.ty != rhs.ty {
            return Err(TensorError::TypeMismatch { expected: self.ty.clone(), found: rhs.ty.clone() });
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.same_type(rhs)?;
        Ok(Tensor { ty: self.ty.clone(), mat: self.mat.add(&rhs.mat)? })
    }

    pub fn scale(&self, k: f64) -> Tensor {
        Tensor { ty: self.ty.clone(), mat: self.mat.scale(k) }
    }

    /// Same type and max-abs difference at most `tol`.
    pub fn approx_eq(&self, rhs: &Tensor, tol: f64) -> bool {
        self.ty == rhs.ty && self.mat.max_abs_diff(&rhs.mat) <= tol
    }

    pub fn max_abs_diff(&self, rhs: &Tensor) -> f64 {
        if self.ty != rhs.ty {
            return f64::INFINITY;
        }
        self.mat.max_abs_diff(&rhs.mat)
    }

    pub fn to_json(&self) -> TensorJson {
        TensorJson { ty: self.ty.to_string(), shape: [self.mat.rows, self.mat.cols], data_row_major: self.to_rows() }
    }

    pub fn from_json(json: &TensorJson) -> Result<Tensor, TensorError> {
        let ty = parse_type(&json.ty).map_err(|e| TensorError::Json(format!("bad type: {e}")))?;
        let [rows, cols] = json.shape;
        if json.data_row_major.len() != rows || json.data_row_major.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Json("data does not match shape".into()));
        }
        Tensor::new(ty, Matrix::from_rows(&json.data_row_major))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("tensor json serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Tensor, TensorError> {
        let json: TensorJson = serde_json::from_str(s).map_err(|e| TensorError::Json(e.to_string()))?;
        Tensor::from_json(&json)
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {}", self.mat, self.ty)
    }
}

/// On-disk tensor format:
/// `{"type":"2 -o 2","shape":[2,2],"data_row_major":[[1.0,0.0],[0.0,1.0]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    #[serde(rename = "type")]
    pub ty: String,
    pub shape: [usize; 2],
    pub data_row_major: Vec<Vec<f64>>,
}

/// `[β]_t`: the inverse of [`vec`] at type `t`.
pub fn reshape(v: &Matrix, t: &Type) -> Result<Tensor, TensorError> {
    let n = dim(t);
    if v.shape() != (n, 1) {
        return Err(TensorError::ShapeMismatch { expected: (n, 1), found: v.shape() });
    }
    let (m, cols) = shape_of(t);
    let mut mat = Matrix::zeros(m, cols);
    for j in 0..cols {
        for i in 0..m {
            mat.set(i, j, v.data[i + m * j]);
        }
    }
    Ok(Tensor { ty: t.clone(), mat })
}

/// The standard basis of `⟦t⟧`, each vector reshaped to `t`.
pub fn basis(t: &Type) -> Vec<Tensor> {
    let n = dim(t);
    (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            reshape(&Matrix::column(&e), t).expect("basis vector has dim(t) entries")
        })
        .collect()
}

/// `f(a)_τ₂`: multiplies `f : τ₁ -o τ₂` by `vec(a)` and reshapes to `τ₂`.
pub fn matmul_typed(f: &Tensor, a: &Tensor) -> Result<Tensor, TensorError> {
    let Type::Lolli(dom, cod) = &f.ty else {
        return Err(TensorError::NotAFunction(f.ty.clone()));
    };
    if **dom != a.ty {
        return Err(TensorError::TypeMismatch { expected: (**dom).clone(), found: a.ty.clone() });
    }
    let out = f.mat.matmul(&a.vec())?;
    reshape(&out, cod)
}

/// Free variables mapped to tensors.
pub type TargetEnv = BTreeMap<Name, Tensor>;

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> Type {
        Type::Bool
    }

    fn bb() -> Type {
        Type::bool_to_bool()
    }

    #[test]
    fn dims() {
        assert_eq!(dim(&b()), 2);
        assert_eq!(dim(&bb()), 4);
        assert_eq!(dim(&Type::lolli(b(), bb())), 8);
        assert_eq!(shape_of(&Type::lolli(b(), bb())), (4, 2));
        assert_eq!(shape_of(&Type::lolli(bb(), b())), (2, 4));
    }

    #[test]
    fn basis_of_bool_and_arrow() {
        let bs = basis(&b());
        assert_eq!(bs, vec![Tensor::boolean(true), Tensor::boolean(false)]);

        let bs = basis(&bb());
        let expected =
            [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]];
        for (t, e) in bs.iter().zip(expected) {
            assert_eq!(t.to_rows(), e.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        }
        assert_eq!(basis(&Type::lolli(b(), bb())).len(), 8);
    }

    #[test]
    fn vec_examples() {
        let id = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(vec(&id).data(), &[1.0, 0.0, 0.0, 1.0]);
        let m = Matrix::from_rows(&[vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(vec(&m).data(), &[2.0, 0.0, 4.0, 0.0, 0.0, 1.0]);
        assert_eq!(vec(&Matrix::column(&[5.0])).data(), &[5.0]);
    }

    #[test]
    fn reshape_examples() {
        let t = reshape(&Matrix::column(&[1.0, 0.0, 0.0, 1.0]), &bb()).unwrap();
        assert_eq!(t.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let t = reshape(&Matrix::column(&[1.0, 0.0]), &b()).unwrap();
        assert_eq!(t, Tensor::boolean(true));
        assert!(reshape(&Matrix::column(&[1.0, 0.0, 0.0]), &bb()).is_err());
    }

    #[test]
    fn typed_matmul_examples() {
        let id = Tensor::from_rows(bb(), &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(matmul_typed(&id, &Tensor::boolean(true)).unwrap(), Tensor::boolean(true));

        let church = Tensor::from_rows(
            Type::lolli(b(), bb()),
            &[vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let out = matmul_typed(&church, &Tensor::boolean(true)).unwrap();
        assert_eq!(out, id);

        let zero = Tensor::zeros(bb());
        assert_eq!(matmul_typed(&zero, &Tensor::boolean(false)).unwrap(), Tensor::zeros(b()));

        assert!(matches!(
            matmul_typed(&Tensor::boolean(true), &Tensor::boolean(true)),
            Err(TensorError::NotAFunction(_))
        ));
        assert!(matches!(matmul_typed(&id, &id), Err(TensorError::TypeMismatch { .. })));
    }

    #[test]
    fn typed_matmul_matches_basis_expansion() {
        // Σᵢ Σⱼ αᵢⱼ βⱼ bᵢ over the output basis.
        let ty = Type::lolli(bb(), b());
        let f =
            Tensor::new(ty, Matrix::from_row_major(2, 4, (0..8).map(|k| k as f64 - 3.0).collect()).unwrap()).unwrap();
        let a = Tensor::from_rows(bb(), &[vec![0.5, -1.0], vec![2.0, 3.0]]).unwrap();
        let beta = a.vec();
        let out_basis = basis(&b());
        let mut expected = Tensor::zeros(b());
        for (i, bi) in out_basis.iter().enumerate() {
            for j in 0..4 {
                expected = expected.add(&bi.scale(f.matrix().get(i, j) * beta.data()[j])).unwrap();
            }
        }
        assert!(matmul_typed(&f, &a).unwrap().approx_eq(&expected, 1e-12));
    }

    #[test]
    fn add_scale_approx() {
        let a = Tensor::boolean(true).add(&Tensor::boolean(false)).unwrap();
        assert_eq!(a.data(), &[1.0, 1.0]);
        let m = Tensor::from_rows(bb(), &[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(m.scale(2.0).to_rows(), vec![vec![2.0, 2.0], vec![0.0, 0.0]]);
        let near = Tensor::new(b(), Matrix::column(&[1.0, 1e-12])).unwrap();
        assert!(Tensor::boolean(true).approx_eq(&near, 1e-9));
        assert!(Tensor::boolean(true).add(&m).is_err());
    }

    #[test]
    fn json_round_trip() {
        let id = Tensor::from_rows(bb(), &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = id.to_json_string();
        assert_eq!(s, r#"{"type":"2 -o 2","shape":[2,2],"data_row_major":[[1.0,0.0],[0.0,1.0]]}"#);
        assert_eq!(Tensor::from_json_str(&s).unwrap(), id);
        assert!(Tensor::from_json_str(r#"{"type":"2","shape":[2,2],"data_row_major":[[1,0],[0,1]]}"#).is_err());
    }
}
