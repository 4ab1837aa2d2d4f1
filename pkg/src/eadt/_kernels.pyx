# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled lane of the pixel kernels.

Signature-compatible with eadt._kernels_py; see that module for the buffer
conventions. All comparisons and accumulations are done in C double.
"""


def binarize(const float[:, :, ::1] p, double threshold,
             unsigned char[:, :, ::1] out):
    cdef Py_ssize_t c, y, x
    for c in range(p.shape[0]):
        for y in range(p.shape[1]):
            for x in range(p.shape[2]):
                out[c, y, x] = 1 if (<double> p[c, y, x]) > threshold else 0


def count_above(const float[:, :, ::1] p, double threshold,
                long long[::1] out):
    cdef Py_ssize_t c, y, x
    cdef long long n
    for c in range(p.shape[0]):
        n = 0
        for y in range(p.shape[1]):
            for x in range(p.shape[2]):
                n += (<double> p[c, y, x]) > threshold
        out[c] = n


def positive_areas(const unsigned char[:, :, ::1] m, long long[::1] out):
    cdef Py_ssize_t c, y, x
    cdef long long n
    for c in range(m.shape[0]):
        n = 0
        for y in range(m.shape[1]):
            for x in range(m.shape[2]):
                n += m[c, y, x] != 0
        out[c] = n


def triple_threshold(const float[:, :, ::1] p, double max_thresh,
                     double min_thresh, const long long[::1] areas,
                     unsigned char[:, :, ::1] out):
    cdef Py_ssize_t c, y, x
    cdef long long n
    for c in range(p.shape[0]):
        n = 0
        for y in range(p.shape[1]):
            for x in range(p.shape[2]):
                n += (<double> p[c, y, x]) > max_thresh
        if n < areas[c]:
            for y in range(p.shape[1]):
                for x in range(p.shape[2]):
                    out[c, y, x] = 0
        else:
            for y in range(p.shape[1]):
                for x in range(p.shape[2]):
                    out[c, y, x] = 1 if (<double> p[c, y, x]) > min_thresh else 0


def pair_counts(const unsigned char[:, :, ::1] a,
                const unsigned char[:, :, ::1] b,
                long long[:, ::1] out):
    cdef Py_ssize_t c, y, x
    cdef long long inter, sum_a, sum_b
    cdef unsigned char av, bv
    for c in range(a.shape[0]):
        inter = 0
        sum_a = 0
        sum_b = 0
        for y in range(a.shape[1]):
            for x in range(a.shape[2]):
                av = a[c, y, x]
                bv = b[c, y, x]
                sum_a += av != 0
                sum_b += bv != 0
                inter += (av != 0) & (bv != 0)
        out[c, 0] = inter
        out[c, 1] = sum_a
        out[c, 2] = sum_b


def mean_stack(const float[:, :, :, ::1] stack, float[:, :, ::1] out):
    cdef Py_ssize_t k, c, y, x
    cdef double acc
    cdef double n = <double> stack.shape[0]
    for c in range(stack.shape[1]):
        for y in range(stack.shape[2]):
            for x in range(stack.shape[3]):
                acc = 0.0
                for k in range(stack.shape[0]):
                    acc += stack[k, c, y, x]
                out[c, y, x] = <float> (acc / n)
