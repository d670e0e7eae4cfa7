# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the AX=B iterations.

XA=C methods are run here on the transposed problem (A^T X^T = C^T), so
only the four AX=B families need a kernel. Matrices arrive as CSR/CSC
index/value arrays; dense inputs simply store every entry.
"""

from libc.math cimport sqrt, isfinite

ctypedef long long idx_t

cdef enum:
    FAM_RK = 0
    FAM_RGS = 1
    FAM_REK = 2
    FAM_REGS = 3


cdef inline void _row_dot(const idx_t* ptr, const idx_t* ind, const double* val, idx_t i,
                          const double* M, idx_t p, double* out) noexcept nogil:
    # out = A[i, :] @ M  (M is n x p, row-major)
    cdef idx_t t, c
    cdef double a
    cdef const double* mk
    for c in range(p):
        out[c] = 0.0
    for t in range(ptr[i], ptr[i + 1]):
        a = val[t]
        mk = M + ind[t] * p
        for c in range(p):
            out[c] += a * mk[c]


cdef inline void _row_axpy(const idx_t* ptr, const idx_t* ind, const double* val, idx_t i,
                           double scale, const double* v, double* M, idx_t p) noexcept nogil:
    # M[k, :] += (scale * A[i, k]) * v  for every stored k in row i
    cdef idx_t t, c
    cdef double a
    cdef double* mk
    for t in range(ptr[i], ptr[i + 1]):
        a = scale * val[t]
        mk = M + ind[t] * p
        for c in range(p):
            mk[c] += a * v[c]


cdef double _metric(int kind, idx_t m, idx_t n, idx_t p,
                    const idx_t* rptr, const idx_t* rind, const double* rval,
                    const double* B, const double* X, const double* ref, double denom,
                    double* T, double* G, long long* counters) noexcept nogil:
    cdef idx_t i, c, t
    cdef double s = 0.0, d
    if kind == 0 or kind == 1:
        for t in range(n * p):
            d = X[t] - ref[t]
            s += d * d
        counters[0] += n * p
        s = s / denom
        if kind == 1:
            s = sqrt(s)
        return s
    # residual projection: || A^T (B - A X) ||^2 / denom
    for i in range(m):
        _row_dot(rptr, rind, rval, i, X, p, T + i * p)
        for c in range(p):
            T[i * p + c] = B[i * p + c] - T[i * p + c]
    for t in range(n * p):
        G[t] = 0.0
    for i in range(m):
        _row_axpy(rptr, rind, rval, i, 1.0, T + i * p, G, p)
    for t in range(n * p):
        s += G[t] * G[t]
    counters[0] += 2 * rptr[m] * p
    return s / denom


def metric(int kind,
           const idx_t[::1] rptr, const idx_t[::1] rind, const double[::1] rval,
           const double[:, ::1] B, const double[:, ::1] X, const double[:, ::1] ref, double denom,
           double[:, ::1] T, double[:, ::1] G, long long[::1] counters):
    cdef idx_t m = B.shape[0], n = X.shape[0], p = X.shape[1]
    return _metric(kind, m, n, p, &rptr[0], &rind[0], &rval[0], &B[0, 0], &X[0, 0],
                   &ref[0, 0], denom, &T[0, 0], &G[0, 0], &counters[0])


def advance(int family,
            const idx_t[::1] rptr, const idx_t[::1] rind, const double[::1] rval,
            const idx_t[::1] cptr, const idx_t[::1] cind, const double[::1] cval,
            const double[::1] rnorm, const double[::1] cnorm,
            const double[:, ::1] B, double[:, ::1] X, double[:, ::1] Z,
            double[:, ::1] Y, double[:, ::1] R,
            const idx_t[::1] xs, const idx_t[::1] aux,
            idx_t k0, idx_t nsteps, idx_t stride,
            int metric_kind, const double[:, ::1] ref, double denom,
            double tol, double threshold,
            double[:, ::1] T, double[:, ::1] G, double[::1] w1, double[::1] w2,
            long long[::1] counters, list trace, object clock, double t0):
    """Advance ``nsteps`` iterations from iteration ``k0``.

    Returns ``(k, flag)`` with flag 0 (chunk done), 1 (metric below ``tol``)
    or 2 (metric above ``threshold`` or non-finite). The metric is evaluated
    and appended to ``trace`` whenever ``k % stride == 0``.
    """
    cdef idx_t m = B.shape[0], n = X.shape[0], p = X.shape[1]
    cdef const idx_t* rp = &rptr[0]
    cdef const idx_t* ri = &rind[0]
    cdef const double* rv = &rval[0]
    cdef const idx_t* cp = &cptr[0]
    cdef const idx_t* ci = &cind[0]
    cdef const double* cv = &cval[0]
    cdef double* Xp = &X[0, 0]
    cdef double* Zp = &Z[0, 0]
    cdef double* Yp = &Y[0, 0]
    cdef double* Rp = &R[0, 0]
    cdef const double* Bp = &B[0, 0]
    cdef double* a = &w1[0]
    cdef double* b = &w2[0]
    cdef long long* cnt = &counters[0]
    cdef idx_t s, i, j, c, k = k0
    cdef idx_t nnz_i, nnz_j
    cdef double inv, val
    cdef int flag = 0

    for s in range(nsteps):
        i = xs[s]
        j = aux[s]
        if family == FAM_RK:
            # X += A_i^T (B_i - A_i X) / M_i
            _row_dot(rp, ri, rv, i, Xp, p, a)
            for c in range(p):
                a[c] = Bp[i * p + c] - a[c]
            inv = 1.0 / rnorm[i]
            _row_axpy(rp, ri, rv, i, inv, a, Xp, p)
            nnz_i = rp[i + 1] - rp[i]
            cnt[0] += 2 * nnz_i * p + p
            cnt[1] += 1
        elif family == FAM_RGS:
            # index is a column: W = A_j^T R / N_j ; X_j += W ; R -= A_j W
            _row_dot(cp, ci, cv, i, Rp, p, a)
            inv = 1.0 / cnorm[i]
            for c in range(p):
                a[c] = a[c] * inv
                Xp[i * p + c] += a[c]
            _row_axpy(cp, ci, cv, i, -1.0, a, Rp, p)
            nnz_j = cp[i + 1] - cp[i]
            cnt[0] += 2 * nnz_j * p + 2 * p
            cnt[1] += 1
        elif family == FAM_REK:
            # Z -= A_j (A_j^T Z) / N_j ; X += A_i^T (B_i - Z_i - A_i X) / M_i
            _row_dot(cp, ci, cv, j, Zp, p, a)
            _row_axpy(cp, ci, cv, j, -1.0 / cnorm[j], a, Zp, p)
            _row_dot(rp, ri, rv, i, Xp, p, b)
            for c in range(p):
                b[c] = Bp[i * p + c] - Zp[i * p + c] - b[c]
            _row_axpy(rp, ri, rv, i, 1.0 / rnorm[i], b, Xp, p)
            nnz_i = rp[i + 1] - rp[i]
            nnz_j = cp[j + 1] - cp[j]
            cnt[0] += 2 * nnz_j * p + 2 * nnz_i * p + 2 * p
            cnt[1] += 2
        else:
            # RGS step on Y with column j, then X -= A_i^T A_i (X - Y) / M_i
            _row_dot(cp, ci, cv, j, Rp, p, a)
            inv = 1.0 / cnorm[j]
            for c in range(p):
                a[c] = a[c] * inv
                Yp[j * p + c] += a[c]
            _row_axpy(cp, ci, cv, j, -1.0, a, Rp, p)
            _row_dot(rp, ri, rv, i, Xp, p, a)
            _row_dot(rp, ri, rv, i, Yp, p, b)
            for c in range(p):
                a[c] = a[c] - b[c]
            _row_axpy(rp, ri, rv, i, -1.0 / rnorm[i], a, Xp, p)
            nnz_i = rp[i + 1] - rp[i]
            nnz_j = cp[j + 1] - cp[j]
            cnt[0] += 2 * nnz_j * p + 3 * nnz_i * p + 3 * p
            cnt[1] += 2
        k += 1
        if k % stride == 0:
            val = _metric(metric_kind, m, n, p, rp, ri, rv, Bp, Xp, &ref[0, 0], denom,
                          &T[0, 0], &G[0, 0], cnt)
            trace.append((k, val, clock() - t0))
            if val < tol:
                flag = 1
                break
            if not isfinite(val) or val > threshold:
                flag = 2
                break
    return k, flag
