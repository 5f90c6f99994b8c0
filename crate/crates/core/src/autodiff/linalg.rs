//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Row-major matrix view: `rows × cols`, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer size");
        Self { data, rows, cols }
    }

    /// Strides (row, col) of the logical matrix, after an optional transpose.
    fn strides(&self, transpose: bool) -> (isize, isize) {
        if transpose {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }

    fn dims(&self, transpose: bool) -> (usize, usize) {
        if transpose {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }
}

/// `out = op(a) · op(b) + beta · out`, where `op` optionally transposes.
///
/// `out` is row-major with shape `op(a).rows × op(b).cols`.
pub(crate) fn gemm(
    a: MatRef<'_>,
    transpose_a: bool,
    b: MatRef<'_>,
    transpose_b: bool,
    out: &mut [f64],
    beta: f64,
) {
    let (m, k) = a.dims(transpose_a);
    let (k2, n) = b.dims(transpose_b);
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(out.len(), m * n, "output buffer size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in out.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = a.strides(transpose_a);
    let (rsb, csb) = b.strides(transpose_b);
    // SAFETY: the asserts above establish that every index touched by dgemm,
    // derived from (m, k, n) and the strides, lies inside the three buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
