# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: direct integrations and the envelope estimator.

C transcriptions of the three hot loops (the rescaled error system L,
the raw element system, and the envelope estimator ODE) sharing one
adaptive RK 5(4) core that mirrors polarj2.numerics.integrate_ivp
(same tableau, error norm, step control, dense output and guard
bisection).  Results are returned as numerics.SampledCurve objects so
callers cannot tell which backend produced them.
"""

from libc.math cimport sin, cos, sqrt, fabs, pow, fmin, fmax, floor, isfinite
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy

import numpy as np

from polarj2 import numerics

BACKEND = "compiled"

cdef double PI = 3.141592653589793
cdef double TWO_PI = 6.283185307179586
cdef double EPS_MACH = 2.220446049250313e-16

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0

# Dormand-Prince 5(4) tableau, identical values to the Python core.
# File-scope C arrays are zero-initialized; only nonzeros are assigned.
cdef double DP_C[6]
DP_C[1] = 1.0 / 5.0; DP_C[2] = 3.0 / 10.0
DP_C[3] = 4.0 / 5.0; DP_C[4] = 8.0 / 9.0; DP_C[5] = 1.0

cdef double DP_A[6][5]
DP_A[1][0] = 1.0 / 5.0
DP_A[2][0] = 3.0 / 40.0; DP_A[2][1] = 9.0 / 40.0
DP_A[3][0] = 44.0 / 45.0; DP_A[3][1] = -56.0 / 15.0; DP_A[3][2] = 32.0 / 9.0
DP_A[4][0] = 19372.0 / 6561.0; DP_A[4][1] = -25360.0 / 2187.0
DP_A[4][2] = 64448.0 / 6561.0; DP_A[4][3] = -212.0 / 729.0
DP_A[5][0] = 9017.0 / 3168.0; DP_A[5][1] = -355.0 / 33.0
DP_A[5][2] = 46732.0 / 5247.0; DP_A[5][3] = 49.0 / 176.0
DP_A[5][4] = -5103.0 / 18656.0

cdef double DP_B[6]
DP_B[0] = 35.0 / 384.0; DP_B[2] = 500.0 / 1113.0
DP_B[3] = 125.0 / 192.0; DP_B[4] = -2187.0 / 6784.0; DP_B[5] = 11.0 / 84.0

cdef double DP_E[7]
DP_E[0] = 71.0 / 57600.0; DP_E[2] = -71.0 / 16695.0
DP_E[3] = 71.0 / 1920.0; DP_E[4] = -17253.0 / 339200.0
DP_E[5] = 22.0 / 525.0; DP_E[6] = -1.0 / 40.0

cdef double DP_P[7][4]
DP_P[0][0] = 1.0
DP_P[0][1] = -8048581381.0 / 2820520608.0
DP_P[0][2] = 8663915743.0 / 2820520608.0
DP_P[0][3] = -12715105075.0 / 11282082432.0
DP_P[2][1] = 131558114200.0 / 32700410799.0
DP_P[2][2] = -68118460800.0 / 10900136933.0
DP_P[2][3] = 87487479700.0 / 32700410799.0
DP_P[3][1] = -1754552775.0 / 470086768.0
DP_P[3][2] = 14199869525.0 / 1410260304.0
DP_P[3][3] = -10690763975.0 / 1880347072.0
DP_P[4][1] = 127303824393.0 / 49829197408.0
DP_P[4][2] = -318862633887.0 / 49829197408.0
DP_P[4][3] = 701980252875.0 / 199316789632.0
DP_P[5][1] = -282668133.0 / 205662961.0
DP_P[5][2] = 2019193451.0 / 616988883.0
DP_P[5][3] = -1453857185.0 / 822651844.0
DP_P[6][1] = 40617522.0 / 29380423.0
DP_P[6][2] = -110615467.0 / 29380423.0
DP_P[6][3] = 69997945.0 / 29380423.0


# ---------------------------------------------------------------------------
# problem right-hand sides

cdef inline int c_field(double p, double e, double y, double th,
                        double* out) nogil:
    """Closed-form J2 element rates; 1 when outside the element chart."""
    cdef double e2, base
    if p <= 0.0 or e <= 0.0 or e >= 1.0:
        return 1
    e2 = e * e
    out[0] = (6.0 * PI / p) * (e * sin(th + y) + 2.0 * sin(2.0 * th)
                               + e * sin(3.0 * th - y))
    base = 3.0 * PI / (8.0 * p * p)
    out[1] = base * (e2 * sin(th - 3.0 * y)
                     + (8.0 + 2.0 * e2) * sin(th - y)
                     + (4.0 + 11.0 * e2) * sin(th + y)
                     + 8.0 * e * sin(2.0 * th - 2.0 * y)
                     + 40.0 * e * sin(2.0 * th)
                     + 2.0 * e2 * sin(3.0 * th - 3.0 * y)
                     + (28.0 + 17.0 * e2) * sin(3.0 * th - y)
                     + 24.0 * e * sin(4.0 * th - 2.0 * y)
                     + 5.0 * e2 * sin(5.0 * th - 3.0 * y))
    out[2] = (-3.0 * PI / (p * p)
              - (base / e) * (e2 * cos(th - 3.0 * y)
                              + (8.0 + 6.0 * e2) * cos(th - y)
                              - (4.0 - 7.0 * e2) * cos(th + y)
                              + 8.0 * e * cos(2.0 * th - 2.0 * y)
                              + 24.0 * e * cos(2.0 * th)
                              + 2.0 * e2 * cos(3.0 * th - 3.0 * y)
                              + (28.0 + 11.0 * e2) * cos(3.0 * th - y)
                              + 24.0 * e * cos(4.0 * th - 2.0 * y)
                              + 5.0 * e2 * cos(5.0 * th - 3.0 * y)))
    return 0


cdef struct Params:
    double p0
    double e0
    double y0
    double eps
    # estimator extras
    double cap_p
    double cap_e
    double slope          # off-diagonal growth rate of the matrix majorant
    int exact_inv
    int ncount
    int interp            # 0 polynomial, 1 cubic spline
    double snap
    double gap            # node spacing of the equally spaced tau grid
    double* nodes
    double* bw            # barycentric weights (polynomial mode)
    double* m2            # (ncount, 3) spline second derivatives
    double* vals          # (ncount, 3) row-major tabulated base envelope
    double* im            # approximate-inverse coefficient matrices
    double* inp
    double* ine
    double* iny
    double* iq


cdef int rhs_l(Params* pa, double t, double* y, double* out) nogil:
    cdef double yj = pa.y0 - 3.0 * PI * pa.eps * t / (pa.p0 * pa.p0)
    cdef int bad = c_field(pa.p0 + pa.eps * y[0], pa.e0 + pa.eps * y[1],
                           yj + pa.eps * y[2], TWO_PI * t, out)
    if bad:
        return 1
    out[2] += 3.0 * PI / (pa.p0 * pa.p0)
    return 0


cdef int rhs_elements(Params* pa, double t, double* y, double* out) nogil:
    cdef int bad = c_field(y[0], y[1], y[2], TWO_PI * t, out)
    if bad:
        return 1
    out[0] *= pa.eps
    out[1] *= pa.eps
    out[2] *= pa.eps
    return 0


# ---------------------------------------------------------------------------
# bound tables (majorants of the contraction and slope functions)

cdef void tbl_a(double m, double u, double w, double a[3][3]) nogil:
    a[0][0] = (3.0 + 4.0 * u) / (m * m)
    a[0][1] = 4.0 / m
    a[0][2] = 4.0 * u / m
    a[1][0] = (32.0 + 45.0 * u + 32.0 * u * u) / (4.0 * m * m * m)
    a[1][1] = (45.0 + 64.0 * u) / (8.0 * m * m)
    a[1][2] = (16.0 + 15.0 * u + 20.0 * u * u) / (4.0 * m * m)
    a[2][0] = (32.0 + 33.0 * u + 29.0 * u * u) / (4.0 * m * m * m * w)
    a[2][1] = (32.0 + 29.0 * u * u) / (8.0 * m * m * w * w)
    a[2][2] = (32.0 + 30.0 * u + 37.0 * u * u) / (8.0 * m * m * w)


cdef void tbl_c(double p0, double m, double pp, double u, double w,
                double c[3]) nogil:
    cdef double p03 = p0 * p0 * p0
    cdef double u2 = u * u
    cdef double u3 = u2 * u
    cdef double u4 = u3 * u
    cdef double u5 = u4 * u
    cdef double u6 = u5 * u
    cdef double m5 = m * m * m * m * m
    cdef double m6 = m5 * m
    c[0] = 3.0 * PI * (504.0 + 1024.0 * u + 713.0 * u2 + 124.0 * u3) \
        / (8.0 * m5)
    c[1] = (3.0 * PI / 2048.0) * (
        148736.0 + 738384.0 * u + 1062656.0 * u2 + 1220344.0 * u3
        + 675146.0 * u4 + 336591.0 * u5 + 26855.0 * u6) / (m6 * w * w)
    c[2] = PI * (p03 * (370944.0 + 2214336.0 * u + 5434752.0 * u2
                        + 4927104.0 * u3 + 2945040.0 * u4
                        + 1225668.0 * u5 + 147777.0 * u6)
                 + pp * pp * pp * (231936.0 * u3 + 442368.0 * u4
                                   + 196608.0 * u5)) \
        / (1024.0 * p03 * w * w * w * m6)


cdef void tbl_d(double m, double u, double w, double d[3][3]) nogil:
    cdef double u2 = u * u
    cdef double m3 = m * m * m
    cdef double m4 = m3 * m
    cdef double m5 = m4 * m
    d[0][0] = 9.0 * PI * u2 / (2.0 * m4)
    d[0][1] = 3.0 * PI * u / m3
    d[0][2] = 3.0 * PI * u2 / m3
    d[1][0] = 3.0 * PI * u * (10.0 + u2) / m5
    d[1][1] = 3.0 * PI * (10.0 + 3.0 * u2) / (4.0 * m4)
    d[1][2] = 3.0 * PI * u * (10.0 + u2) / (2.0 * m4)
    d[2][0] = 3.0 * PI * (74.0 + 35.0 * u2) / (4.0 * m5)
    d[2][1] = 105.0 * PI * u / (8.0 * m4)
    d[2][2] = 15.0 * PI * (4.0 + u2) / (4.0 * m4)


cdef void tbl_da(double m, double u, double w,
                 double dp[3][3], double de[3][3]) nogil:
    # partials of the a table in the box radii; the y radius never enters
    cdef double u2 = u * u
    cdef double m2 = m * m
    cdef double m3 = m2 * m
    cdef double m4 = m3 * m
    dp[0][0] = 2.0 * (3.0 + 4.0 * u) / m3
    dp[0][1] = 4.0 / m2
    dp[0][2] = 4.0 * u / m2
    dp[1][0] = 3.0 * (32.0 + 45.0 * u + 32.0 * u2) / (4.0 * m4)
    dp[1][1] = (45.0 + 64.0 * u) / (4.0 * m3)
    dp[1][2] = (16.0 + 15.0 * u + 20.0 * u2) / (2.0 * m3)
    dp[2][0] = 3.0 * (32.0 + 33.0 * u + 29.0 * u2) / (4.0 * m4 * w)
    dp[2][1] = (32.0 + 29.0 * u2) / (4.0 * m3 * w * w)
    dp[2][2] = (32.0 + 30.0 * u + 37.0 * u2) / (4.0 * m3 * w)
    de[0][0] = 4.0 / m2
    de[0][1] = 0.0
    de[0][2] = 4.0 / m
    de[1][0] = (45.0 + 64.0 * u) / (4.0 * m3)
    de[1][1] = 8.0 / m2
    de[1][2] = (15.0 + 40.0 * u) / (4.0 * m2)
    de[2][0] = ((33.0 + 58.0 * u) / (4.0 * m3 * w)
                + (32.0 + 33.0 * u + 29.0 * u2) / (4.0 * m3 * w * w))
    de[2][1] = (29.0 * u / (4.0 * m2 * w * w)
                + (32.0 + 29.0 * u2) / (4.0 * m2 * w * w * w))
    de[2][2] = ((30.0 + 74.0 * u) / (8.0 * m2 * w)
                + (32.0 + 30.0 * u + 37.0 * u2) / (8.0 * m2 * w * w))


cdef void tbl_db(double p0, double m, double pp, double u, double w,
                 double dbp[3], double dbe[3]) nogil:
    cdef double p03 = p0 * p0 * p0
    cdef double u2 = u * u
    cdef double u3 = u2 * u
    cdef double u4 = u3 * u
    cdef double m3 = m * m * m
    cdef double m4 = m3 * m
    cdef double m5 = m4 * m
    cdef double poly = (3520.0 + 16384.0 * u + 9340.0 * u2 + 8940.0 * u3
                        + 1861.0 * u4)
    cdef double tail = 1152.0 * u2 + 4608.0 * u3
    cdef double num = p03 * poly + tail * pp * pp * pp
    cdef double poly_e = (6112.0 + 10832.0 * u + 6940.0 * u2
                          + 11372.0 * u3 + 1441.0 * u4)
    dbp[0] = 3.0 * (54.0 + 112.0 * u + 33.0 * u2) / (8.0 * m4)
    dbp[1] = poly_e / (128.0 * m5 * w)
    dbp[2] = (3.0 * tail * pp * pp / (256.0 * p03 * w * w * m4)
              + 4.0 * num / (256.0 * p03 * w * w * m5))
    dbe[0] = (112.0 + 66.0 * u) / (8.0 * m3)
    dbe[1] = ((10832.0 + 13880.0 * u + 34116.0 * u2 + 5764.0 * u3)
              / (512.0 * m4 * w)
              + poly_e / (512.0 * m4 * w * w))
    dbe[2] = ((p03 * (16384.0 + 18680.0 * u + 26820.0 * u2 + 7444.0 * u3)
               + (2304.0 * u + 13824.0 * u2) * pp * pp * pp)
              / (256.0 * p03 * w * w * m4)
              + 2.0 * num / (256.0 * p03 * w * w * w * m4))


cdef int dalpha_dr(Params* pa, double* r, double dal[3][3]) nogil:
    """d alpha / d r at componentwise r >= 0 inside the validity box."""
    cdef double m, pp, u, w
    cdef double a[3][3]
    cdef double dp[3][3]
    cdef double de[3][3]
    cdef double dbp[3]
    cdef double dbe[3]
    cdef int i
    if r[0] < 0.0 or r[1] < 0.0 or r[2] < 0.0:
        return 1
    if r[0] >= pa.cap_p or r[1] >= pa.cap_e:
        return 1
    m = pa.p0 - r[0]
    pp = pa.p0 + r[0]
    u = pa.e0 + r[1]
    w = pa.e0 - r[1]
    tbl_a(m, u, w, a)
    tbl_da(m, u, w, dp, de)
    tbl_db(pa.p0, m, pp, u, w, dbp, dbe)
    for i in range(3):
        dal[i][0] = (dp[i][0] * r[0] + dp[i][1] * r[1] + dp[i][2] * r[2]
                     + a[i][0] + pa.eps * dbp[i])
        dal[i][1] = (de[i][0] * r[0] + de[i][1] * r[1] + de[i][2] * r[2]
                     + a[i][1] + pa.eps * dbe[i])
        dal[i][2] = a[i][2]
    return 0


cdef inline double det3(double m[3][3]) nogil:
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


cdef int inv3(double m[3][3], double out[3][3]) nogil:
    """Adjugate inverse; 1 when the determinant is not positive."""
    cdef double det = det3(m)
    if det <= 0.0:
        return 1
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det
    return 0


cdef int bary_derivative(Params* pa, double x, double* out) nogil:
    """Derivative of the tabulated base envelope, all three components.

    Barycentric second form off the nodes; differentiation-matrix row
    when x snaps to a node, matching the Python interpolant.
    """
    cdef int n = pa.ncount
    cdef int j, c, hit
    cdef double diff, invd, wn, den, dden, t, diag
    cdef double num[3]
    cdef double dnum[3]
    cdef double acc[3]
    hit = -1
    for j in range(n):
        if fabs(x - pa.nodes[j]) <= pa.snap:
            hit = j
            break
    if hit >= 0:
        for c in range(3):
            acc[c] = 0.0
        diag = 0.0
        for j in range(n):
            if j == hit:
                continue
            t = (pa.bw[j] / pa.bw[hit]) / (pa.nodes[hit] - pa.nodes[j])
            diag -= t
            for c in range(3):
                acc[c] += t * pa.vals[3 * j + c]
        for c in range(3):
            out[c] = acc[c] + diag * pa.vals[3 * hit + c]
        return 0
    den = 0.0
    dden = 0.0
    for c in range(3):
        num[c] = 0.0
        dnum[c] = 0.0
    for j in range(n):
        diff = x - pa.nodes[j]
        invd = 1.0 / diff
        wn = pa.bw[j] * invd
        den += wn
        dden -= wn * invd
        for c in range(3):
            num[c] += wn * pa.vals[3 * j + c]
            dnum[c] -= wn * invd * pa.vals[3 * j + c]
    if den == 0.0:
        return 1
    for c in range(3):
        out[c] = (dnum[c] * den - num[c] * dden) / (den * den)
    return 0


cdef int spline_derivative(Params* pa, double x, double* out) nogil:
    """Natural-cubic-spline derivative of the base envelope, all three
    components; beyond the node span the end cubics extend."""
    cdef int n = pa.ncount
    cdef int i, c
    cdef double h, a, b, fa, fb
    i = <int> floor((x - pa.nodes[0]) / pa.gap)
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    h = pa.nodes[i + 1] - pa.nodes[i]
    a = (pa.nodes[i + 1] - x) / h
    b = (x - pa.nodes[i]) / h
    fa = -(3.0 * a * a - 1.0) * h / 6.0
    fb = (3.0 * b * b - 1.0) * h / 6.0
    for c in range(3):
        out[c] = ((pa.vals[3 * (i + 1) + c] - pa.vals[3 * i + c]) / h
                  + fa * pa.m2[3 * i + c] + fb * pa.m2[3 * (i + 1) + c])
    return 0


cdef int rhs_estimator(Params* pa, double tau, double* y, double* out) nogil:
    """Envelope estimator slope for the state (m, n)."""
    cdef double r[3]
    cdef double gam[3]
    cdef double da0[3]
    cdef double dal[3][3]
    cdef double mat[3][3]
    cdef double minv[3][3]
    cdef double c[3]
    cdef double d[3][3]
    cdef double dm[3]
    cdef double inner[3]
    cdef double mm, pp, u, w, rot
    cdef int i, j
    for i in range(3):
        if not isfinite(y[3 + i]):
            return 1
        r[i] = pa.eps * y[3 + i]
        if r[i] < 0.0:
            return 1
    if r[0] >= pa.cap_p or r[1] >= pa.cap_e:
        return 1
    mm = pa.p0 - r[0]
    pp = pa.p0 + r[0]
    u = pa.e0 + r[1]
    w = pa.e0 - r[1]
    tbl_c(pa.p0, mm, pp, u, w, c)
    tbl_d(mm, u, w, d)
    for i in range(3):
        gam[i] = c[i]
        for j in range(3):
            gam[i] += d[i][j] * y[3 + j]
    # quadratic term: single nonzero entry of the curvature majorant
    gam[2] += 0.5 * (18.0 * PI / (mm * mm * mm * mm)) * y[3] * y[3]
    if pa.interp == 1:
        spline_derivative(pa, tau, da0)
    elif bary_derivative(pa, tau, da0):
        return 1
    if pa.exact_inv:
        if dalpha_dr(pa, r, dal):
            return 1
        for i in range(3):
            for j in range(3):
                mat[i][j] = (1.0 if i == j else 0.0) - pa.eps * dal[i][j]
        if inv3(mat, minv):
            return 1
    else:
        for i in range(3):
            for j in range(3):
                minv[i][j] = ((1.0 if i == j else 0.0)
                              + pa.eps * pa.im[3 * i + j]
                              + pa.eps * (r[0] * pa.inp[3 * i + j]
                                          + r[1] * pa.ine[3 * i + j]
                                          + r[2] * pa.iny[3 * i + j])
                              + pa.eps * pa.eps * pa.iq[3 * i + j])
    rot = pa.slope * tau
    dm[0] = gam[0]
    dm[1] = gam[1]
    dm[2] = gam[2] + rot * gam[0]
    inner[0] = da0[0] + pa.eps * dm[0]
    inner[1] = da0[1] + pa.eps * dm[1]
    inner[2] = (da0[2] + pa.eps * (dm[2] + rot * dm[0])
                + pa.eps * pa.slope * y[0])
    for i in range(3):
        out[i] = dm[i]
        out[3 + i] = (minv[i][0] * inner[0] + minv[i][1] * inner[1]
                      + minv[i][2] * inner[2])
    return 0


cdef int guard_estimator(Params* pa, double tau, double* y) nogil:
    """1 while the estimator state is admissible, else 0."""
    cdef double r[3]
    cdef double dal[3][3]
    cdef double mat[3][3]
    cdef int i, j
    for i in range(3):
        if not (y[3 + i] > 0.0):
            return 0
        r[i] = pa.eps * y[3 + i]
    if r[0] >= pa.cap_p or r[1] >= pa.cap_e:
        return 0
    if dalpha_dr(pa, r, dal):
        return 0
    for i in range(3):
        for j in range(3):
            mat[i][j] = (1.0 if i == j else 0.0) - pa.eps * dal[i][j]
    return 1 if det3(mat) > 0.0 else 0


# ---------------------------------------------------------------------------
# shared adaptive core

cdef int eval_rhs(int system, Params* pa, double t, double* y,
                  double* out, int dim) nogil:
    if system == 0:
        return rhs_l(pa, t, y, out)
    elif system == 1:
        return rhs_elements(pa, t, y, out)
    return rhs_estimator(pa, t, y, out)


cdef struct Buf:
    double* data
    size_t n
    size_t cap


cdef int buf_init(Buf* b, size_t cap0) nogil:
    b.data = <double*> malloc(cap0 * sizeof(double))
    b.n = 0
    b.cap = cap0
    return 0 if b.data != NULL else 1


cdef int buf_push(Buf* b, double* src, size_t count) nogil:
    cdef double* grown
    cdef size_t cap = b.cap
    while b.n + count > cap:
        cap *= 2
    if cap != b.cap:
        grown = <double*> realloc(b.data, cap * sizeof(double))
        if grown == NULL:
            return 1
        b.data = grown
        b.cap = cap
    memcpy(b.data + b.n, src, count * sizeof(double))
    b.n += count
    return 0


cdef void buf_free(Buf* b) nogil:
    if b.data != NULL:
        free(b.data)
        b.data = NULL


cdef inline void dense_at(double* y, double* q, double step_h, double frac,
                          int dim, double* out) nogil:
    cdef int d
    cdef double f2 = frac * frac
    cdef double poly
    for d in range(dim):
        poly = (q[4 * d] * frac + q[4 * d + 1] * f2
                + q[4 * d + 2] * f2 * frac + q[4 * d + 3] * f2 * f2)
        out[d] = y[d] + step_h * poly


cdef int run_core(int system, Params* pa, int dim, int use_guard,
                  double t0, double t1, double* y_start,
                  double atol, double rtol, double h_init, long max_steps,
                  Buf* ts, Buf* ys, Buf* dense,
                  long* nfev_out, int* guard_stopped, double* guard_time,
                  double* fail_t) nogil:
    """0 success, 1 alloc, 2 nonfinite at start, 3 budget, 4 underflow."""
    cdef double y[8]
    cdef double y_new[8]
    cdef double yi[8]
    cdef double f[8]
    cdef double k[7][8]
    cdef double q[32]
    cdef double qcut[32]
    cdef double yg[8]
    cdef double GUARD_FRACS[4]
    cdef double err_v, scale, err, h, h_min, span_len, t, t_new
    cdef double step_h, frac, prev_frac, bad_frac, lo, hi, mid, t_safe, ratio
    cdef double d0, d1, d2, h0, h1, acc
    cdef long nfev = 0
    cdef long steps = 0
    cdef int i, d, ok, c, bad, bis
    GUARD_FRACS[0] = 0.25; GUARD_FRACS[1] = 0.5
    GUARD_FRACS[2] = 0.75; GUARD_FRACS[3] = 1.0

    span_len = t1 - t0
    guard_stopped[0] = 0
    guard_time[0] = 0.0
    nfev_out[0] = 0
    t_new = t0

    for d in range(dim):
        y[d] = y_start[d]

    if use_guard and not guard_estimator(pa, t0, y):
        guard_stopped[0] = 1
        guard_time[0] = t0
        if buf_push(ts, &t0, 1) or buf_push(ys, y, dim):
            return 1
        return 0

    if eval_rhs(system, pa, t0, y, f, dim):
        fail_t[0] = t0
        return 2
    nfev += 1
    for d in range(dim):
        if not isfinite(f[d]):
            fail_t[0] = t0
            return 2

    if h_init > 0.0:
        h = h_init
    else:
        # two-probe starting-step heuristic, as in the Python core
        d0 = 0.0
        d1 = 0.0
        for d in range(dim):
            scale = atol + rtol * fabs(y[d])
            d0 += (y[d] / scale) * (y[d] / scale)
            d1 += (f[d] / scale) * (f[d] / scale)
        d0 = sqrt(d0 / dim)
        d1 = sqrt(d1 / dim)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        for d in range(dim):
            yi[d] = y[d] + h0 * f[d]
        bad = eval_rhs(system, pa, t0 + h0, yi, y_new, dim)
        nfev += 1
        if bad:
            # probe left the domain; keep the conservative first guess
            h = 100.0 * h0
        else:
            d2 = 0.0
            for d in range(dim):
                scale = atol + rtol * fabs(y[d])
                acc = (y_new[d] - f[d]) / scale
                d2 += acc * acc
            d2 = sqrt(d2 / dim) / h0
            if d1 <= 1e-15 and d2 <= 1e-15:
                h1 = fmax(1e-6, h0 * 1e-3)
            else:
                h1 = pow(0.01 / fmax(d1, d2), 0.2)
            h = fmin(100.0 * h0, h1)
    h = fmin(h, span_len)
    h_min = 16.0 * EPS_MACH * fmax(fabs(t0), fabs(t1))

    if buf_push(ts, &t0, 1) or buf_push(ys, y, dim):
        return 1

    t = t0
    while t < t1:
        if steps >= max_steps:
            fail_t[0] = t
            return 3
        steps += 1
        h = fmin(h, t1 - t)
        if h <= h_min:
            fail_t[0] = t
            return 4

        for d in range(dim):
            k[0][d] = f[d]
        ok = 1
        for i in range(1, 6):
            for d in range(dim):
                acc = 0.0
                for c in range(i):
                    acc += k[c][d] * DP_A[i][c]
                yi[d] = y[d] + h * acc
            bad = eval_rhs(system, pa, t + DP_C[i] * h, yi, k[i], dim)
            nfev += 1
            if bad:
                ok = 0
                break
            for d in range(dim):
                if not isfinite(k[i][d]):
                    ok = 0
                    break
            if not ok:
                break
        if ok:
            for d in range(dim):
                acc = 0.0
                for c in range(6):
                    acc += k[c][d] * DP_B[c]
                y_new[d] = y[d] + h * acc
                if not isfinite(y_new[d]):
                    ok = 0
        if ok:
            t_new = t1 if (t1 - t) - h <= 1e-14 * span_len else t + h
            bad = eval_rhs(system, pa, t_new, y_new, k[6], dim)
            nfev += 1
            if bad:
                ok = 0
            else:
                for d in range(dim):
                    if not isfinite(k[6][d]):
                        ok = 0
                        break
        if not ok:
            h *= 0.5
            continue

        err = 0.0
        for d in range(dim):
            scale = atol + rtol * fmax(fabs(y[d]), fabs(y_new[d]))
            acc = 0.0
            for c in range(7):
                acc += k[c][d] * DP_E[c]
            err_v = h * acc / scale
            err += err_v * err_v
        err = sqrt(err / dim)
        if err > 1.0:
            h *= fmax(MIN_FACTOR, SAFETY * pow(err, -0.2))
            continue

        for d in range(dim):
            for c in range(4):
                acc = 0.0
                for i in range(7):
                    acc += k[i][d] * DP_P[i][c]
                q[4 * d + c] = acc
        step_h = t_new - t

        if use_guard:
            bad_frac = -1.0
            prev_frac = 0.0
            for i in range(4):
                frac = GUARD_FRACS[i]
                if frac == 1.0:
                    for d in range(dim):
                        yg[d] = y_new[d]
                else:
                    dense_at(y, q, step_h, frac, dim, yg)
                if not guard_estimator(pa, t + frac * step_h, yg):
                    bad_frac = frac
                    break
                prev_frac = frac
            if bad_frac > 0.0:
                lo = prev_frac
                hi = bad_frac
                for bis in range(60):
                    if (hi - lo) * step_h <= 1e-13 * fmax(span_len, 1.0):
                        break
                    mid = 0.5 * (lo + hi)
                    dense_at(y, q, step_h, mid, dim, yg)
                    if guard_estimator(pa, t + mid * step_h, yg):
                        lo = mid
                    else:
                        hi = mid
                guard_stopped[0] = 1
                guard_time[0] = t + hi * step_h
                if lo > 0.0:
                    t_safe = t + lo * step_h
                    dense_at(y, q, step_h, lo, dim, yg)
                    ratio = (t_safe - t) / step_h
                    for d in range(dim):
                        qcut[4 * d] = q[4 * d]
                        qcut[4 * d + 1] = q[4 * d + 1] * ratio
                        qcut[4 * d + 2] = q[4 * d + 2] * ratio * ratio
                        qcut[4 * d + 3] = (q[4 * d + 3]
                                           * ratio * ratio * ratio)
                    if (buf_push(ts, &t_safe, 1) or buf_push(ys, yg, dim)
                            or buf_push(dense, qcut, 4 * dim)):
                        return 1
                break

        if (buf_push(ts, &t_new, 1) or buf_push(ys, y_new, dim)
                or buf_push(dense, q, 4 * dim)):
            return 1
        t = t_new
        for d in range(dim):
            y[d] = y_new[d]
            f[d] = k[6][d]
        if err == 0.0:
            h *= MAX_FACTOR
        else:
            h *= fmin(MAX_FACTOR, fmax(MIN_FACTOR, SAFETY * pow(err, -0.2)))

    nfev_out[0] = nfev
    return 0


cdef _finish(int status, double fail_t, Buf* ts, Buf* ys, Buf* dense,
             int dim, long nfev, int guard_stopped, double guard_time):
    """Convert the C buffers into a SampledCurve (always frees them)."""
    cdef size_t count = ts.n
    cdef double[::1] nview
    cdef double[:, ::1] vview
    cdef double[:, :, ::1] cview
    try:
        if status == 1:
            raise MemoryError("kernel output buffer allocation failed")
        if status == 2:
            raise numerics.IntegrationError(
                "non-finite right-hand side at t0")
        if status == 3:
            raise numerics.IntegrationError(
                "step budget exhausted at t=%r" % fail_t)
        if status == 4:
            raise numerics.IntegrationError(
                "step size underflow at t=%r" % fail_t)
        nodes = np.empty(count)
        values = np.empty((count, dim))
        nview = nodes
        vview = values
        if count > 0:
            memcpy(&nview[0], ts.data, count * sizeof(double))
            memcpy(&vview[0, 0], ys.data, count * dim * sizeof(double))
        if count > 1:
            coeffs = np.empty((count - 1, dim, 4))
            cview = coeffs
            memcpy(&cview[0, 0, 0], dense.data,
                   (count - 1) * dim * 4 * sizeof(double))
        else:
            coeffs = None
        message = ""
        gt = None
        if guard_stopped:
            gt = guard_time
            if count == 1:
                message = "guard violated at initial state"
            else:
                message = "guard violated near t=%r" % guard_time
        return numerics.SampledCurve(
            nodes, values, coeffs, guard_stopped=bool(guard_stopped),
            guard_time=gt, guard_message=message, nfev=int(nfev))
    finally:
        buf_free(ts)
        buf_free(ys)
        buf_free(dense)


cdef _run_simple(int system, double p0, double e0, double y0, double eps,
                 double horizon, double abs_tol, double rel_tol,
                 long max_steps, initial_step):
    cdef Params pa
    cdef Buf ts
    cdef Buf ys
    cdef Buf dense
    cdef double y_start[3]
    cdef double guard_t = 0.0
    cdef double fail_t = 0.0
    cdef double h_init = -1.0
    cdef long nfev = 0
    cdef int stopped = 0
    cdef int status
    pa.p0 = p0; pa.e0 = e0; pa.y0 = y0; pa.eps = eps
    pa.ncount = 0
    y_start[0] = p0 if system == 1 else 0.0
    y_start[1] = e0 if system == 1 else 0.0
    y_start[2] = y0 if system == 1 else 0.0
    if initial_step is not None:
        h_init = float(initial_step)
    if buf_init(&ts, 1024) or buf_init(&ys, 3 * 1024) \
            or buf_init(&dense, 12 * 1024):
        buf_free(&ts); buf_free(&ys); buf_free(&dense)
        raise MemoryError("kernel buffer allocation failed")
    status = run_core(system, &pa, 3, 0, 0.0, horizon, y_start,
                      abs_tol, rel_tol, h_init, max_steps,
                      &ts, &ys, &dense, &nfev, &stopped, &guard_t, &fail_t)
    return _finish(status, fail_t, &ts, &ys, &dense, 3, nfev,
                   stopped, guard_t)


def integrate_l(p0, e0, y0, eps, orbits, abs_tol=1e-10, rel_tol=1e-10,
                max_steps=20_000_000, initial_step=None):
    """Rescaled error system L on [0, orbits]; see the pure twin."""
    if orbits <= 0.0:
        raise ValueError("orbits must be positive")
    return _run_simple(0, float(p0), float(e0), float(y0), float(eps),
                       float(orbits), float(abs_tol), float(rel_tol),
                       int(max_steps), initial_step)


def integrate_elements(p0, e0, y0, eps, orbits, abs_tol=1e-10, rel_tol=1e-10,
                       max_steps=20_000_000, initial_step=None):
    """Raw element system on [0, orbits]; see the pure twin."""
    if orbits <= 0.0:
        raise ValueError("orbits must be positive")
    return _run_simple(1, float(p0), float(e0), float(y0), float(eps),
                       float(orbits), float(abs_tol), float(rel_tol),
                       int(max_steps), initial_step)


def estimator_curve(double[::1] nodes, double[:, ::1] node_values,
                    double[::1] weights, double snap,
                    int interp_kind, double[:, ::1] m2,
                    double p0, double e0, double eps,
                    double[::1] n0, double u, double cap_p, double cap_e,
                    double slope, int exact_inv,
                    double[:, ::1] inv_m, double[:, ::1] inv_np,
                    double[:, ::1] inv_ne, double[:, ::1] inv_ny,
                    double[:, ::1] inv_q,
                    double abs_tol=1e-8, double rel_tol=1e-8,
                    long max_steps=1_000_000, initial_step=None):
    """Integrate the (m, n) envelope estimator over [0, u].

    The tabulated base envelope arrives as equally spaced nodes with
    per-component values plus, depending on interp_kind, barycentric
    weights (0, global polynomial) or per-node spline second
    derivatives (1, natural cubic); the inverse coefficient matrices
    come precomputed from the problem module.  Returns the raw
    6-dimensional SampledCurve with guard flags; packaging is up to
    the caller.
    """
    cdef Params pa
    cdef Buf ts
    cdef Buf ys
    cdef Buf dense
    cdef double y_start[6]
    cdef double guard_t = 0.0
    cdef double fail_t = 0.0
    cdef double h_init = -1.0
    cdef long nfev = 0
    cdef int stopped = 0
    cdef int status
    cdef int i
    if nodes.shape[0] < 2:
        raise ValueError("need at least two envelope nodes")
    if nodes.shape[0] != node_values.shape[0] or node_values.shape[1] != 3:
        raise ValueError("node_values must be (len(nodes), 3)")
    if weights.shape[0] != nodes.shape[0]:
        raise ValueError("weights must match nodes")
    if m2.shape[0] != nodes.shape[0] or m2.shape[1] != 3:
        raise ValueError("m2 must be (len(nodes), 3)")
    if interp_kind not in (0, 1):
        raise ValueError("interp_kind must be 0 or 1")
    if n0.shape[0] != 3:
        raise ValueError("n0 must have three components")
    pa.p0 = p0; pa.e0 = e0; pa.y0 = 0.0; pa.eps = eps
    pa.cap_p = cap_p; pa.cap_e = cap_e; pa.slope = slope
    pa.exact_inv = exact_inv
    pa.ncount = <int> nodes.shape[0]
    pa.interp = interp_kind
    pa.snap = snap
    pa.gap = nodes[1] - nodes[0]
    pa.nodes = &nodes[0]
    pa.bw = &weights[0]
    pa.m2 = &m2[0, 0]
    pa.vals = &node_values[0, 0]
    pa.im = &inv_m[0, 0]
    pa.inp = &inv_np[0, 0]
    pa.ine = &inv_ne[0, 0]
    pa.iny = &inv_ny[0, 0]
    pa.iq = &inv_q[0, 0]
    for i in range(3):
        y_start[i] = 0.0
        y_start[3 + i] = n0[i]
    if initial_step is not None:
        h_init = float(initial_step)
    if buf_init(&ts, 1024) or buf_init(&ys, 6 * 1024) \
            or buf_init(&dense, 24 * 1024):
        buf_free(&ts); buf_free(&ys); buf_free(&dense)
        raise MemoryError("kernel buffer allocation failed")
    status = run_core(2, &pa, 6, 1, 0.0, u, y_start,
                      abs_tol, rel_tol, h_init, max_steps,
                      &ts, &ys, &dense, &nfev, &stopped, &guard_t, &fail_t)
    return _finish(status, fail_t, &ts, &ys, &dense, 6, nfev,
                   stopped, guard_t)
