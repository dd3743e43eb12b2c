# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree-PS episode loop.

Twin of ``_pykernel.py``; every arithmetic step and random draw happens in the
same order, so results are bit-identical to the pure-Python backend.
"""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport atan, atanh, pow, sin, sqrt, tanh, M_PI
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cdef double QUARTER_PI = M_PI / 4.0
cdef double HALF_PI = M_PI / 2.0
cdef double ATANH_LIMIT = 1.0 - 1e-12
cdef int MAX_ATTEMPTS = 65


from photon_rl._pykernel import KernelError  # one error type for both backends


cdef inline double _clamp(double th) noexcept nogil:
    if th < 0.0:
        return 0.0
    if th > HALF_PI:
        return HALF_PI
    return th


cdef struct Ctx:
    bitgen_t *bg
    int M
    int L
    int A
    double sigma
    bint adjust_noise
    double *chi
    double *theta
    int64_t *amap
    double *cum
    double *reach
    double *sums
    int64_t *order
    int64_t *new
    int64_t *pos


cdef inline void _write(Ctx *c, Py_ssize_t idx) noexcept nogil:
    cdef double th = QUARTER_PI * (1.0 + tanh(c.chi[idx]))
    if c.adjust_noise:
        th = _clamp(th + c.sigma * random_standard_normal(c.bg))
    c.theta[idx] = th


cdef void _defrag(Ctx *c, Py_ssize_t s) noexcept nogil:
    cdef int M = c.M, L = c.L, A = c.A
    cdef Py_ssize_t base = s * M
    cdef int i, j
    cdef int64_t key
    cdef double kv, sn, p, up, down, th, x
    cdef bint same = True
    for i in range(A):
        c.order[i] = c.amap[s * L + i]
        c.new[i] = c.order[i]
    for i in range(1, A):
        key = c.new[i]
        kv = c.cum[s * A + key]
        j = i - 1
        while j >= 0 and c.cum[s * A + c.new[j]] < kv:
            c.new[j + 1] = c.new[j]
            j -= 1
        c.new[j + 1] = key
    for i in range(A):
        if c.new[i] != c.order[i]:
            same = False
            break
    if same:
        return
    c.reach[0] = 1.0
    for j in range(M):
        sn = sin(QUARTER_PI * (1.0 + tanh(c.chi[base + j])))
        p = sn * sn
        c.reach[2 * j + 1] = c.reach[j] * p
        c.reach[2 * j + 2] = c.reach[j] * (1.0 - p)
    for i in range(A):
        c.pos[c.order[i]] = i
    for i in range(L):
        if i < A:
            c.sums[M + i] = c.reach[M + c.pos[c.new[i]]]
        else:
            c.sums[M + i] = c.reach[M + i]
    for j in range(M - 1, -1, -1):
        c.sums[j] = c.sums[2 * j + 1] + c.sums[2 * j + 2]
    for j in range(M):
        up = c.sums[2 * j + 1]
        down = c.sums[2 * j + 2]
        if down == 0.0:
            th = HALF_PI if up > 0.0 else QUARTER_PI
        else:
            th = atan(sqrt(up / down))
        x = 4.0 * th / M_PI - 1.0
        if x > ATANH_LIMIT:
            x = ATANH_LIMIT
        elif x < -ATANH_LIMIT:
            x = -ATANH_LIMIT
        c.chi[base + j] = atanh(x)
    for j in range(M):
        _write(c, base + j)
    for i in range(A):
        c.amap[s * L + i] = c.new[i]


def run_trials(
    const int32_t[:, ::1] next_state, const double[:, ::1] reward, const uint8_t[:, ::1] terminal,
    Py_ssize_t start, int64_t max_steps, int depth, int n_actions,
    double eta, double gamma, int64_t damping_period, double sigma, bint per_shot, int64_t defrag_period,
    double[:, ::1] chi, double[:, ::1] theta, int64_t[:, ::1] action_map, double[:, ::1] cum,
    uint8_t[::1] visited, int64_t[::1] counters,
    rng, Py_ssize_t n_trials, int64_t[::1] out_steps, double[::1] out_reward,
):
    cdef Py_ssize_t S = next_state.shape[0]
    cdef int A = n_actions
    cdef int M = (1 << depth) - 1
    cdef int L = 1 << depth
    cdef int64_t t = counters[0]
    cdef int64_t trials = counters[1]
    cdef bint shot_noise = sigma > 0.0 and per_shot
    cdef double decay = 1.0 - eta

    capsule = rng.bit_generator.capsule
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef int64_t[::1] last_t = np.zeros(S * M, dtype=np.int64)
    cdef double[::1] gsign = np.zeros(S * M)
    cdef uint8_t[::1] in_list = np.zeros(S * M, dtype=np.uint8)
    cdef int64_t[::1] touched = np.zeros(S * M, dtype=np.int64)
    cdef int64_t[::1] e_last = np.zeros(S * A, dtype=np.int64)
    cdef uint8_t[::1] e_in = np.zeros(S * A, dtype=np.uint8)
    cdef int64_t[::1] e_touched = np.zeros(S * A, dtype=np.int64)
    cdef double[::1] reach = np.zeros(2 * M + 1)
    cdef double[::1] sums = np.zeros(2 * L - 1)
    cdef int64_t[::1] order = np.zeros(A, dtype=np.int64)
    cdef int64_t[::1] new = np.zeros(A, dtype=np.int64)
    cdef int64_t[::1] pos = np.zeros(A, dtype=np.int64)

    cdef Ctx c
    c.bg = bg
    c.M = M
    c.L = L
    c.A = A
    c.sigma = sigma
    c.adjust_noise = sigma > 0.0 and not per_shot
    c.chi = &chi[0, 0]
    c.theta = &theta[0, 0]
    c.amap = &action_map[0, 0]
    c.cum = &cum[0, 0]
    c.reach = &reach[0]
    c.sums = &sums[0]
    c.order = &order[0]
    c.new = &new[0]
    c.pos = &pos[0]

    cdef Py_ssize_t n_touched = 0, n_e_touched = 0
    cdef Py_ssize_t trial, s, s_next, base, idx, e, s2, j, q
    cdef int attempt, k, bit, node, leaf
    cdef int64_t a, steps
    cdef double total, th, sn, r, g
    cdef bint done, failed = False

    lock = rng.bit_generator.lock
    with lock:
        with nogil:
            for trial in range(n_trials):
                for q in range(n_touched):
                    in_list[touched[q]] = 0
                n_touched = 0
                for q in range(n_e_touched):
                    e_in[e_touched[q]] = 0
                n_e_touched = 0
                s = start
                steps = 0
                total = 0.0
                while True:
                    base = s * M
                    if not visited[s]:
                        visited[s] = 1
                        for j in range(M):
                            _write(&c, base + j)
                    a = -1
                    for attempt in range(MAX_ATTEMPTS):
                        node = 0
                        leaf = 0
                        for k in range(depth):
                            th = c.theta[base + node]
                            if shot_noise:
                                th = _clamp(th + sigma * random_standard_normal(bg))
                            sn = sin(th)
                            bit = 0 if random_standard_uniform(bg) < sn * sn else 1
                            leaf = 2 * leaf + bit
                            node = 2 * node + 1 + bit
                        a = c.amap[s * L + leaf]
                        if a >= 0:
                            break
                    if a < 0:
                        failed = True
                        break
                    node = 0
                    for k in range(depth):
                        bit = (leaf >> (depth - 1 - k)) & 1
                        idx = base + node
                        if not in_list[idx]:
                            in_list[idx] = 1
                            touched[n_touched] = idx
                            n_touched += 1
                        last_t[idx] = t
                        gsign[idx] = 1.0 if bit == 0 else -1.0
                        node = 2 * node + 1 + bit
                    e = s * A + a
                    if not e_in[e]:
                        e_in[e] = 1
                        e_touched[n_e_touched] = e
                        n_e_touched += 1
                    e_last[e] = t

                    r = reward[s, a]
                    done = terminal[s, a] != 0
                    s_next = next_state[s, a]
                    steps += 1
                    if r != 0.0:
                        total += r
                        for q in range(n_touched):
                            idx = touched[q]
                            g = pow(decay, <double>(t - last_t[idx]))
                            if g > 0.0:
                                c.chi[idx] += gsign[idx] * g * r
                                _write(&c, idx)
                        for q in range(n_e_touched):
                            e = e_touched[q]
                            g = pow(decay, <double>(t - e_last[e]))
                            if g > 0.0:
                                c.cum[e] += g * r
                    t += 1
                    if t % damping_period == 0 and gamma != 1.0:
                        for s2 in range(S):
                            if visited[s2]:
                                for j in range(s2 * M, s2 * M + M):
                                    if c.chi[j] != 0.0:
                                        c.chi[j] *= gamma
                                        _write(&c, j)
                    s = s_next
                    if done or steps >= max_steps:
                        break
                if failed:
                    break
                out_steps[trial] = steps
                out_reward[trial] = total
                trials += 1
                if defrag_period > 0 and trials % defrag_period == 0:
                    for s2 in range(S):
                        if visited[s2]:
                            _defrag(&c, s2)

    counters[0] = t
    counters[1] = trials
    if failed:
        raise KernelError("photon hit unassigned modes on every re-injection")
