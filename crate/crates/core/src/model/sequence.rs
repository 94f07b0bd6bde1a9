//! Coefficient sequences `A(1), A(2), ...` and their text formats.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::ModelError;
use crate::expr::{self, Expr};
use crate::linalg::{self, LinalgError, Matrix};

/// Anything that yields one `s x s` matrix per index `n >= 1`.
pub trait MatrixSequence: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn at(&self, n: usize) -> Result<Matrix, ModelError>;
}

/// `max(|A(n)|, |A(n)^-1|)` over `1 <= n <= horizon`, stamped with the
/// horizon it was scanned on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovBound {
    pub a: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone)]
pub enum Source {
    Constant(Matrix),
    DiagonalFormula(Vec<Expr>),
    /// Row-major `s * s` entries.
    DenseFormula(Vec<Expr>),
    /// Matrices loaded from a sequence file; `A(n)` is element `n - 1`.
    Tabulated(Arc<Vec<Matrix>>),
    /// `A(n) R(n)`.
    Product {
        base: Arc<dyn MatrixSequence>,
        factor: Arc<dyn MatrixSequence>,
    },
}

#[derive(Debug, Clone)]
pub struct CoefficientSequence {
    dim: usize,
    source: Source,
    bound: Option<LyapunovBound>,
}

impl CoefficientSequence {
    pub fn identity(dim: usize) -> Self {
        Self::constant(Matrix::identity(dim, dim)).expect("identity is square")
    }

    pub fn constant(m: Matrix) -> Result<Self, ModelError> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "coefficient matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { n: 1 });
        }
        Ok(Self { dim: m.nrows(), source: Source::Constant(m), bound: None })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self, ModelError> {
        Self::constant(Matrix::from_diagonal(&linalg::Vector::from_column_slice(entries)))
    }

    pub fn diagonal_formula(entries: Vec<Expr>) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::DimensionMismatch("no diagonal entries".into()));
        }
        Ok(Self { dim: entries.len(), source: Source::DiagonalFormula(entries), bound: None })
    }

    pub fn dense_formula(dim: usize, entries: Vec<Expr>) -> Result<Self, ModelError> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(ModelError::DimensionMismatch(format!(
                "dense formula of dimension {dim} needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, source: Source::DenseFormula(entries), bound: None })
    }

    pub fn tabulated(matrices: Vec<Matrix>) -> Result<Self, ModelError> {
        let dim = matrices
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| ModelError::DimensionMismatch("empty matrix sequence".into()))?;
        if let Some((i, m)) = matrices
            .iter()
            .enumerate()
            .find(|(_, m)| m.nrows() != dim || m.ncols() != dim)
        {
            return Err(ModelError::DimensionMismatch(format!(
                "A({}) is {}x{}, expected {dim}x{dim}",
                i + 1,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { dim, source: Source::Tabulated(Arc::new(matrices)), bound: None })
    }

    /// The multiplicatively perturbed sequence `A(n) R(n)`.
    pub fn product(
        base: Arc<dyn MatrixSequence>,
        factor: Arc<dyn MatrixSequence>,
    ) -> Result<Self, ModelError> {
        if base.dim() != factor.dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "cannot multiply a {}-dimensional sequence by a {}-dimensional perturbation",
                base.dim(),
                factor.dim()
            )));
        }
        Ok(Self { dim: base.dim(), source: Source::Product { base, factor }, bound: None })
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn kind_name(&self) -> &'static str {
        match self.source {
            Source::Constant(_) => "constant",
            Source::DiagonalFormula(_) => "diagonal-formula",
            Source::DenseFormula(_) => "dense-formula",
            Source::Tabulated(_) => "file",
            Source::Product { .. } => "product",
        }
    }

    /// Cached bound from the last [`validate`](Self::validate), if any.
    pub fn bound(&self) -> Option<LyapunovBound> {
        self.bound
    }

    /// Scans `1..=horizon` and caches the Lyapunov bound.
    pub fn validate(&mut self, horizon: usize) -> Result<LyapunovBound, ModelError> {
        let a = lyapunov_bound_estimate(self, horizon)?;
        let b = LyapunovBound { a, horizon };
        self.bound = Some(b);
        Ok(b)
    }

    pub fn coefficient_at(&self, n: usize) -> Result<Matrix, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroIndex);
        }
        let m = match &self.source {
            Source::Constant(m) => return Ok(m.clone()),
            Source::DiagonalFormula(es) => {
                let x = n as f64;
                Matrix::from_diagonal(&linalg::Vector::from_iterator(
                    es.len(),
                    es.iter().map(|e| e.eval(x)),
                ))
            }
            Source::DenseFormula(es) => {
                let x = n as f64;
                Matrix::from_row_iterator(self.dim, self.dim, es.iter().map(|e| e.eval(x)))
            }
            Source::Tabulated(ms) => {
                return ms
                    .get(n - 1)
                    .cloned()
                    .ok_or(ModelError::OutOfRange { n, available: ms.len() })
            }
            Source::Product { base, factor } => base.at(n)? * factor.at(n)?,
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { n });
        }
        Ok(m)
    }
}

impl MatrixSequence for CoefficientSequence {
    fn dim(&self) -> usize {
        self.dim
    }

    fn at(&self, n: usize) -> Result<Matrix, ModelError> {
        self.coefficient_at(n)
    }
}

/// `a = max over 1 <= n <= horizon of max(|A(n)|, |A(n)^-1|)`; always `>= 1`.
pub fn lyapunov_bound_estimate(seq: &dyn MatrixSequence, horizon: usize) -> Result<f64, ModelError> {
    if horizon == 0 {
        return Err(ModelError::DimensionMismatch("horizon must be at least 1".into()));
    }
    let mut a: f64 = 1.0;
    for n in 1..=horizon {
        let m = seq.at(n)?;
        let (smax, smin) = linalg::check_nonsingular(&m).map_err(|e| match e {
            LinalgError::Singular { .. } => ModelError::NotLyapunov { n },
            other => other.into(),
        })?;
        a = a.max(smax).max(1.0 / smin);
    }
    Ok(a)
}

/// A parsed system description: the sequence plus an optional default horizon.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub sequence: CoefficientSequence,
    pub horizon: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dimension: usize,
    kind: String,
    #[serde(default)]
    entries: Option<Vec<toml::Spanned<String>>>,
    #[serde(default)]
    file: Option<String>,
    #[serde(default)]
    horizon: Option<usize>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn spec_error(text: &str, offset: usize, message: impl Into<String>) -> ModelError {
    let (line, column) = line_col(text, offset);
    ModelError::Spec { line, column, message: message.into() }
}

/// Parses a system description. See [`parse_system_spec_in`].
pub fn parse_generator_spec(text: &str) -> Result<CoefficientSequence, ModelError> {
    Ok(parse_system_spec_in(text, None)?.sequence)
}

/// Parses a system description.
///
/// Two forms are accepted. The compact one-liners `identity <s>` and
/// `diag(<expr>, ...)`, and a TOML document:
///
/// ```toml
/// dimension = 2
/// kind = "diagonal-formula"   # constant | diagonal-formula | dense-formula | file | identity
/// entries = ["exp(-1)", "exp(n) / exp(n + 1)"]
/// horizon = 10000             # optional default horizon
/// ```
///
/// `constant` and `dense-formula` take `s * s` row-major entries,
/// `diagonal-formula` takes `s`. `file` takes `file = "<path>"` relative to
/// `base_dir`. Errors carry 1-based line and column positions.
pub fn parse_system_spec_in(text: &str, base_dir: Option<&Path>) -> Result<SystemSpec, ModelError> {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("identity") {
        if !rest.contains('=') {
            let s: usize = rest.trim().parse().map_err(|_| {
                spec_error(text, text.find("identity").unwrap_or(0), "expected `identity <dimension>`")
            })?;
            if s == 0 {
                return Err(spec_error(text, 0, "dimension must be positive"));
            }
            return Ok(SystemSpec { sequence: CoefficientSequence::identity(s), horizon: None });
        }
    }
    if trimmed.starts_with("diag(") && !trimmed.contains('\n') {
        let offset = text.find("diag(").unwrap();
        return Ok(SystemSpec { sequence: parse_compact_diag(text, offset)?, horizon: None });
    }

    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        spec_error(text, offset, e.message().trim().to_string())
    })?;
    let s = raw.dimension;
    if s == 0 {
        return Err(spec_error(text, 0, "dimension must be positive"));
    }
    let parse_entries = |want: usize| -> Result<Vec<Expr>, ModelError> {
        let entries = raw
            .entries
            .as_ref()
            .ok_or_else(|| spec_error(text, 0, format!("kind `{}` needs `entries`", raw.kind)))?;
        if entries.len() != want {
            return Err(ModelError::DimensionMismatch(format!(
                "kind `{}` with dimension {s} needs {want} entries, got {}",
                raw.kind,
                entries.len()
            )));
        }
        entries
            .iter()
            .map(|sp| {
                // span covers the opening quote
                let (line, col) = line_col(text, sp.span().start + 1);
                expr::parse_at(sp.get_ref(), line, col).map_err(ModelError::from)
            })
            .collect()
    };
    let sequence = match raw.kind.as_str() {
        "identity" => CoefficientSequence::identity(s),
        "constant" => {
            let es = parse_entries(s * s)?;
            if let Some((i, _)) = es.iter().enumerate().find(|(_, e)| e.depends_on_n()) {
                let sp = &raw.entries.as_ref().unwrap()[i];
                return Err(spec_error(text, sp.span().start, "constant entry depends on n"));
            }
            CoefficientSequence::constant(Matrix::from_row_iterator(s, s, es.iter().map(|e| e.eval(1.0))))?
        }
        "diagonal-formula" => CoefficientSequence::diagonal_formula(parse_entries(s)?)?,
        "dense-formula" => CoefficientSequence::dense_formula(s, parse_entries(s * s)?)?,
        "file" => {
            let rel = raw
                .file
                .as_ref()
                .ok_or_else(|| spec_error(text, 0, "kind `file` needs `file = \"<path>\"`"))?;
            let path = match base_dir {
                Some(b) => b.join(rel),
                None => Path::new(rel).to_path_buf(),
            };
            let ms = load_matrix_file(&path)?;
            let seq = CoefficientSequence::tabulated(ms)?;
            if seq.dim != s {
                return Err(ModelError::DimensionMismatch(format!(
                    "spec declares dimension {s} but {} holds {}x{} matrices",
                    path.display(),
                    seq.dim,
                    seq.dim
                )));
            }
            seq
        }
        other => {
            let offset = text.find(other).unwrap_or(0);
            return Err(spec_error(text, offset, format!("unknown kind `{other}`")));
        }
    };
    Ok(SystemSpec { sequence, horizon: raw.horizon })
}

fn parse_compact_diag(text: &str, offset: usize) -> Result<CoefficientSequence, ModelError> {
    let open = offset + "diag(".len();
    let body_end = text
        .rfind(')')
        .filter(|&c| c >= open && text[c + 1..].trim().is_empty())
        .ok_or_else(|| spec_error(text, text.len(), "expected `)` closing diag(...)"))?;
    let body = &text[open..body_end];
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, c) in body.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push((start, &body[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push((start, &body[start..]));
    let mut es = Vec::with_capacity(parts.len());
    for (rel, src) in parts {
        let (line, col) = line_col(text, open + rel);
        es.push(expr::parse_at(src, line, col)?);
    }
    if es.iter().any(Expr::depends_on_n) {
        CoefficientSequence::diagonal_formula(es)
    } else {
        let d: Vec<f64> = es.iter().map(|e| e.eval(1.0)).collect();
        CoefficientSequence::diagonal(&d)
    }
}

/// Parses the matrix sequence format: a header `s count` (an optional third
/// field gives the index origin, which must be 1) followed by `count` blocks
/// of `s * s` whitespace-separated decimals in row-major order.
pub fn parse_matrix_file(text: &str) -> Result<Vec<Matrix>, ModelError> {
    let mut tokens = text.lines().enumerate().flat_map(|(li, line)| {
        let content = line.split('#').next().unwrap_or("");
        content
            .split_whitespace()
            .map(move |t| (li + 1, line.find(t).map_or(1, |c| c + 1), t))
            .collect::<Vec<_>>()
    });
    let header_line = text.lines().position(|l| !l.split('#').next().unwrap_or("").trim().is_empty());
    let header: Vec<&str> = header_line
        .map(|i| text.lines().nth(i).unwrap().split('#').next().unwrap().split_whitespace().collect())
        .unwrap_or_default();
    let hl = header_line.map_or(1, |i| i + 1);
    if header.len() < 2 || header.len() > 3 {
        return Err(ModelError::Spec { line: hl, column: 1, message: "expected header `s count [origin]`".into() });
    }
    let num = |t: &str| -> Result<usize, ModelError> {
        t.parse().map_err(|_| ModelError::Spec {
            line: hl,
            column: 1,
            message: format!("header field `{t}` is not a non-negative integer"),
        })
    };
    let s = num(header[0])?;
    let count = num(header[1])?;
    if header.len() == 3 && num(header[2])? != 1 {
        return Err(ModelError::Spec {
            line: hl,
            column: 1,
            message: "sequence files must be indexed from n = 1".into(),
        });
    }
    if s == 0 || count == 0 {
        return Err(ModelError::Spec { line: hl, column: 1, message: "dimension and count must be positive".into() });
    }
    for _ in 0..header.len() {
        tokens.next();
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut vals = Vec::with_capacity(s * s);
        for _ in 0..s * s {
            let (line, column, t) = tokens.next().ok_or_else(|| ModelError::Spec {
                line: text.lines().count().max(1),
                column: 1,
                message: format!("expected {count} matrices of size {s}x{s}, file ended early"),
            })?;
            let v: f64 = t.parse().map_err(|_| ModelError::Spec {
                line,
                column,
                message: format!("`{t}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(ModelError::Spec { line, column, message: "non-finite entry".into() });
            }
            vals.push(v);
        }
        out.push(Matrix::from_row_slice(s, s, &vals));
    }
    if let Some((line, column, _)) = tokens.next() {
        return Err(ModelError::Spec { line, column, message: "trailing data after the last matrix".into() });
    }
    Ok(out)
}

pub fn load_matrix_file(path: &Path) -> Result<Vec<Matrix>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_matrix_file(&text)
}

/// Inverse of [`parse_matrix_file`]; values are written with full precision.
pub fn write_matrix_file(matrices: &[Matrix]) -> String {
    let s = matrices.first().map_or(0, |m| m.nrows());
    let mut out = format!("{s} {}\n", matrices.len());
    for m in matrices {
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX2: &str = r#"
dimension = 2
kind = "diagonal-formula"
entries = [
  "exp(n*sin(ln(n)) - (n+1)*sin(ln(n+1)))",
  "exp(2*((n+1)*sin(ln(n+1)) - n*sin(ln(n))))",
]
horizon = 10000
"#;

    fn ex2_closed_form(n: f64) -> (f64, f64) {
        let h = |t: f64| t * t.ln().sin();
        ((h(n) - h(n + 1.0)).exp(), (2.0 * (h(n + 1.0) - h(n))).exp())
    }

    #[test]
    fn compact_forms() {
        let seq = parse_generator_spec("diag(1,2)").unwrap();
        assert_eq!(seq.kind_name(), "constant");
        assert_eq!(seq.coefficient_at(7).unwrap(), Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));

        let seq = parse_generator_spec("identity 3").unwrap();
        for n in [1, 5, 1000] {
            assert_eq!(seq.coefficient_at(n).unwrap(), Matrix::identity(3, 3));
        }

        let seq = parse_generator_spec("diag(1, exp(1/n))").unwrap();
        assert_eq!(seq.kind_name(), "diagonal-formula");
        assert_eq!(seq.coefficient_at(2).unwrap()[(1, 1)], 0.5f64.exp());
    }

    #[test]
    fn ex2_spec_matches_closed_form() {
        let spec = parse_system_spec_in(EX2, None).unwrap();
        assert_eq!(spec.horizon, Some(10000));
        for n in 1..=10 {
            let a = spec.sequence.coefficient_at(n).unwrap();
            let (a1, a2) = ex2_closed_form(n as f64);
            assert!((a[(0, 0)] - a1).abs() <= 1e-12 * a1.max(1.0));
            assert!((a[(1, 1)] - a2).abs() <= 1e-12 * a2.max(1.0));
            assert_eq!(a[(0, 1)], 0.0);
        }
        // sin ln 1 = 0
        let a = spec.sequence.coefficient_at(1).unwrap();
        let s2 = 2f64.ln().sin();
        assert!((a[(0, 0)] - (-2.0 * s2).exp()).abs() < 1e-15);
        assert!((a[(1, 1)] - (4.0 * s2).exp()).abs() < 1e-14);
    }

    #[test]
    fn dense_and_constant_toml() {
        let src = "dimension = 2\nkind = \"dense-formula\"\nentries = [\"cos(1/n)\", \"-sin(1/n)\", \"sin(1/n)\", \"cos(1/n)\"]\n";
        let seq = parse_generator_spec(src).unwrap();
        let m = seq.coefficient_at(4).unwrap();
        assert_eq!(m[(0, 1)], -(0.25f64).sin());

        let src = "dimension = 2\nkind = \"constant\"\nentries = [\"1\", \"1\", \"0\", \"1\"]\n";
        let seq = parse_generator_spec(src).unwrap();
        assert_eq!(seq.coefficient_at(3).unwrap()[(0, 1)], 1.0);
    }

    #[test]
    fn errors_carry_positions() {
        let src = "dimension = 1\nkind = \"diagonal-formula\"\nentries = [\"sin(n) + bogus(n)\"]\n";
        match parse_generator_spec(src).unwrap_err() {
            ModelError::Expr(e) => {
                assert_eq!(e.kind, crate::expr::ExprErrorKind::UnknownFunction);
                assert_eq!((e.line, e.column), (3, 22));
            }
            other => panic!("{other:?}"),
        }
        let src = "dimension = 2\nkind = \"diagonal-formula\"\nentries = [\"1\"]\n";
        assert!(matches!(parse_generator_spec(src), Err(ModelError::DimensionMismatch(_))));

        let src = "dimension = 2\nkind = \"constant\"\nentries = [\"n\", \"0\", \"0\", \"1\"]\n";
        assert!(matches!(parse_generator_spec(src), Err(ModelError::Spec { line: 3, .. })));

        let src = "dimension = 2\nkind = \"spiral\"\n";
        assert!(matches!(parse_generator_spec(src), Err(ModelError::Spec { line: 2, .. })));

        assert!(matches!(parse_generator_spec("dimension = = 2"), Err(ModelError::Spec { line: 1, .. })));
        assert!(matches!(parse_generator_spec("diag(1, (2)"), Err(ModelError::Expr(_))));
    }

    #[test]
    fn matrix_file_round_trip() {
        let ms = vec![
            Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]),
            Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 3.0]),
        ];
        let text = write_matrix_file(&ms);
        assert_eq!(parse_matrix_file(&text).unwrap(), ms);

        let seq = CoefficientSequence::tabulated(ms).unwrap();
        assert_eq!(seq.coefficient_at(2).unwrap()[(1, 1)], 3.0);
        assert!(matches!(seq.coefficient_at(3), Err(ModelError::OutOfRange { n: 3, available: 2 })));
        assert!(matches!(seq.coefficient_at(0), Err(ModelError::ZeroIndex)));
    }

    #[test]
    fn matrix_file_errors() {
        assert!(parse_matrix_file("2 1 0\n1 0 0 1\n").is_err());
        assert!(parse_matrix_file("2 1 1\n1 0 0 1\n").is_ok());
        assert!(parse_matrix_file("2 2\n1 0 0 1\n").is_err());
        assert!(parse_matrix_file("2 1\n1 0 0 1 5\n").is_err());
        match parse_matrix_file("1 2\n1\nx\n").unwrap_err() {
            ModelError::Spec { line, column, .. } => assert_eq!((line, column), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lyapunov_bounds() {
        let seq = CoefficientSequence::diagonal(&[1.0, 2.0]).unwrap();
        assert!((lyapunov_bound_estimate(&seq, 5).unwrap() - 2.0).abs() < 1e-14);
        let seq = CoefficientSequence::identity(3);
        assert!((lyapunov_bound_estimate(&seq, 5).unwrap() - 1.0).abs() < 1e-14);
        let seq = CoefficientSequence::tabulated(vec![
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        assert!(matches!(lyapunov_bound_estimate(&seq, 2), Err(ModelError::NotLyapunov { n: 2 })));

        let mut seq = parse_generator_spec(EX2).unwrap();
        let b = seq.validate(10_000).unwrap();
        assert_eq!(b.horizon, 10_000);
        assert!(b.a >= 1.0 && b.a <= (2.0 * 2f64.sqrt()).exp());
        assert_eq!(seq.bound(), Some(b));
    }
}
