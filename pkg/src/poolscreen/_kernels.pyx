# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels: expected-cost table build and nested-testing trials.

Twin of ``_kernels_py``; the float expressions mirror it operation for
operation (and the build disables FP contraction) so both backends produce
bit-identical results.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

NAME = "compiled"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15u
cdef uint64_t MULT1 = 0xBF58476D1CE4E5B9u
cdef uint64_t MULT2 = 0x94D049BB133111EBu
cdef uint64_t TRIAL_SALT = 0xC2B2AE3D27D4EB4Fu
cdef uint64_t TAG_SALT = 0x165667B19E3779F9u
cdef uint64_t CTR_SALT = 0xD1B54A32D192ED03u
cdef uint64_t STREAM_TRUTH = 1u
cdef double U53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MULT1
    z = (z ^ (z >> 27)) * MULT2
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t trial, uint64_t tag) nogil:
    cdef uint64_t k = mix64(seed + GOLDEN)
    k = mix64(k ^ (trial * TRIAL_SALT))
    return mix64(k ^ (tag * TAG_SALT))


cdef inline double u01_at(uint64_t key, uint64_t counter) nogil:
    return <double>(mix64(key ^ (counter * GOLDEN + CTR_SALT)) >> 11) * U53


def g_table(double alpha, int n_max):
    """Expected-cost recursion; see the pure twin for the full contract."""
    cdef int size = n_max + 1
    g_arr = np.zeros((size, size), dtype=np.float64)
    choice_arr = np.zeros((size, size), dtype=np.int32)
    cdef double[:, :] g = g_arr
    cdef int32_t[:, :] choice = choice_arr
    qpow_arr = np.empty(size, dtype=np.float64)
    cdef double[:] qpow = qpow_arr
    cdef double q = 1.0 - alpha
    cdef int i, n, m, x, best_x
    cdef double denom, v, best, inf = float("inf")
    qpow[0] = 1.0
    for i in range(1, size):
        qpow[i] = qpow[i - 1] * q
    with nogil:
        for n in range(1, size):
            g[1, n] = g[0, n - 1]
            for m in range(2, n + 1):
                denom = 1.0 - qpow[m]
                best = inf
                best_x = 1
                for x in range(1, m):
                    v = (1.0 + (qpow[x] - qpow[m]) / denom * g[m - x, n - x]
                         + (1.0 - qpow[x]) / denom * g[x, n])
                    if v < best:
                        best = v
                        best_x = x
                g[m, n] = best
                choice[m, n] = best_x
            best = inf
            best_x = 1
            for x in range(1, n + 1):
                v = 1.0 + qpow[x] * g[0, n - x] + (1.0 - qpow[x]) * g[x, n]
                if v < best:
                    best = v
                    best_x = x
            g[0, n] = best
            choice[0, n] = best_x
    return (g_arr, choice_arr)


def nt_trials(double alpha, int n, long trials, object seed, choice):
    """Monte Carlo nested-testing runs under an ideal test (see pure twin)."""
    choice_arr = np.ascontiguousarray(np.asarray(choice, dtype=np.int32))
    cdef int32_t[:, :] ch = choice_arr
    tests_arr = np.empty(trials, dtype=np.int64)
    pos_arr = np.empty(trials, dtype=np.int64)
    incid_arr = np.empty(trials, dtype=np.int64)
    cdef int64_t[:] tests_out = tests_arr
    cdef int64_t[:] pos_out = pos_arr
    cdef int64_t[:] incid_out = incid_arr
    cdef uint64_t seed64 = <uint64_t>(<unsigned long long>(int(seed) & 0xFFFFFFFFFFFFFFFF))
    cdef uint8_t *infected = <uint8_t *>malloc(n * sizeof(uint8_t))
    cdef int *ub = <int *>malloc(n * sizeof(int))
    cdef int *pib = <int *>malloc(n * sizeof(int))
    if infected == NULL or ub == NULL or pib == NULL:
        free(infected); free(ub); free(pib)
        raise MemoryError()
    cdef long trial
    cdef uint64_t key
    cdef int i, j, m, u_head, u_len, u_cap, p_start, p_len, size, pos, npos
    cdef int64_t tests, incid
    u_cap = n
    try:
        with nogil:
            for trial in range(trials):
                key = stream_key(seed64, <uint64_t>trial, STREAM_TRUTH)
                npos = 0
                for i in range(n):
                    if u01_at(key, <uint64_t>i) < alpha:
                        infected[i] = 1
                        npos += 1
                    else:
                        infected[i] = 0
                    ub[i] = i
                u_head = 0
                u_len = n
                p_start = 0
                p_len = 0
                tests = 0
                incid = 0
                while u_len > 0 or p_len > 0:
                    if p_len > 0:
                        m = p_len
                        if m == 1:
                            p_len = 0
                            continue
                        size = ch[m, m + u_len]
                        tests += 1
                        incid += size
                        pos = 0
                        for i in range(size):
                            if infected[pib[p_start + i]]:
                                pos = 1
                                break
                        if pos:
                            # untested remainder rejoins the undiagnosed queue
                            for i in range(p_start + size, p_start + p_len):
                                ub[(u_head + u_len) % u_cap] = pib[i]
                                u_len += 1
                            p_len = size
                        else:
                            p_start += size
                            p_len -= size
                    else:
                        size = ch[0, u_len]
                        tests += 1
                        incid += size
                        pos = 0
                        for i in range(size):
                            if infected[ub[(u_head + i) % u_cap]]:
                                pos = 1
                                break
                        if pos:
                            for i in range(size):
                                pib[i] = ub[(u_head + i) % u_cap]
                            p_start = 0
                            p_len = size
                        u_head = (u_head + size) % u_cap
                        u_len -= size
                tests_out[trial] = tests
                pos_out[trial] = npos
                incid_out[trial] = incid
    finally:
        free(infected)
        free(ub)
        free(pib)
    return (tests_arr, pos_arr, incid_arr)
