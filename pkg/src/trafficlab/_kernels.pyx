# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; mirrors ``_kernels_py`` statement for statement.

Uniforms come from the numpy bit generator's ``next_double`` so the stream
matches ``Generator.random()`` used by the pure-Python twin.
"""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, exp, isinf, INFINITY
from numpy.random cimport bitgen_t

BACKEND = "compiled"

G_DONE = 0
G_ABSORBED = 1
G_GROW = 2
G_LOG_FULL = 3
G_SNAPSHOT = 4


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef inline double _u(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


# ---------------------------------------------------------------------------
# Jackson-network CTMC
# ---------------------------------------------------------------------------
def ctmc_run(rng, long long[::1] state, double[:, ::1] route_cdf,
             double[:, ::1] mu_table, double[::1] lam, double t, double t_max,
             long long max_events, double[:, ::1] occ, double[::1] joint,
             long long joint_cap, long long[:, ::1] jumps, double[::1] busy):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t n = state.shape[0]
    cdef long long kcap = mu_table.shape[1] - 1
    cdef long long ocap = occ.shape[1] - 1
    cdef long long events = 0
    cdef Py_ssize_t i, j, src, dest, last_pos
    cdef long long s, jidx, stride
    cdef double total, dt, x, rate, u
    cdef bint stop, arrival
    lock = rng.bit_generator.lock
    with lock:
        with nogil:
            while events < max_events:
                total = 0.0
                for i in range(n):
                    s = state[i]
                    total += mu_table[i, s if s < kcap else kcap] + lam[i]
                # a chain with no enabled transition sits still until t_max
                if total <= 0.0:
                    dt = t_max - t if t_max < INFINITY else 0.0
                    stop = True
                else:
                    dt = -log1p(-_u(bg)) / total
                    stop = t + dt > t_max
                    if stop:
                        dt = t_max - t
                jidx = 0
                stride = 1
                for i in range(n):
                    s = state[i]
                    occ[i, s if s < ocap else ocap] += dt
                    if s > 0:
                        busy[i] += dt
                    if joint_cap >= 0:
                        if s > joint_cap or jidx < 0:
                            jidx = -1
                        else:
                            jidx += s * stride
                            stride *= joint_cap + 1
                if joint_cap >= 0:
                    if jidx < 0:
                        joint[joint.shape[0] - 1] += dt
                    else:
                        joint[jidx] += dt
                if stop:
                    if t_max < INFINITY:
                        t = t_max
                    break
                t += dt
                x = _u(bg) * total
                src = -1
                arrival = False
                last_pos = -1
                for i in range(n):
                    s = state[i]
                    rate = mu_table[i, s if s < kcap else kcap]
                    if rate > 0.0:
                        last_pos = i
                        if x < rate:
                            src = i
                            break
                        x -= rate
                    rate = lam[i]
                    if rate > 0.0:
                        last_pos = i + n
                        if x < rate:
                            src = i
                            arrival = True
                            break
                        x -= rate
                if src < 0:
                    src = last_pos if last_pos < n else last_pos - n
                    arrival = last_pos >= n
                if arrival:
                    state[src] += 1
                    jumps[0, src + 1] += 1
                else:
                    u = _u(bg)
                    dest = n
                    for j in range(n + 1):
                        if u < route_cdf[src, j]:
                            dest = j
                            break
                    state[src] -= 1
                    if dest < n:
                        state[dest] += 1
                        jumps[src + 1, dest + 1] += 1
                    else:
                        jumps[src + 1, 0] += 1
                events += 1
    return t, events


# ---------------------------------------------------------------------------
# Random-grammar CTMC
# ---------------------------------------------------------------------------
cdef inline bint _match(signed char[::1] buf, Py_ssize_t n, bint ring, int rule,
                        Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t lim2 = n if ring else n - 1
    cdef Py_ssize_t lim3 = n if ring else n - 2
    cdef signed char a = buf[j]
    cdef signed char b
    if rule == 1:
        return a == 1 and j < lim2 and buf[(j + 1) % n] == 0
    elif rule == 2:
        return a == 1 and j < lim3 and buf[(j + 1) % n] == 2 and buf[(j + 2) % n] == 0
    elif rule == 3:
        if a != 2 or j >= lim2:
            return False
        b = buf[(j + 1) % n]
        return b == 1 or b == 2
    else:
        return a == 2 and j < lim3 and buf[(j + 1) % n] == 0 and buf[(j + 2) % n] == 0


def grammar_run(rng, signed char[::1] buf, long long[::1] st, double[::1] fst,
                double[::1] rates, bint ring, double t_max, double snap_time,
                double[::1] ev_t, signed char[::1] ev_rule, long long[::1] ev_pos):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t cap = buf.shape[0]
    cdef Py_ssize_t logcap = ev_t.shape[0]
    cdef double v = rates[0], l1 = rates[1], l2 = rates[2], l3 = rates[3], l4 = rates[4]
    cdef Py_ssize_t n, j, q, z, seen
    cdef long long c1, c2, c3, c4, k, cnt
    cdef double total, t_ev, x, w, rate
    cdef int rule, rr
    cdef int status = 0
    lock = rng.bit_generator.lock
    with lock:
        with nogil:
            while True:
                n = st[0]
                c1 = 0
                c2 = 0
                c3 = 0
                c4 = 0
                for j in range(n):
                    if _match(buf, n, ring, 1, j):
                        c1 += 1
                    if _match(buf, n, ring, 2, j):
                        c2 += 1
                    if _match(buf, n, ring, 3, j):
                        c3 += 1
                    if _match(buf, n, ring, 4, j):
                        c4 += 1
                total = v + l1 * c1 + l2 * c2 + l3 * c3 + l4 * c4
                if total <= 0.0:
                    status = 1
                    break
                if st[3] == 0:
                    fst[1] = fst[0] - log1p(-_u(bg)) / total
                    st[3] = 1
                t_ev = fst[1]
                if t_ev > t_max:
                    fst[0] = t_max
                    status = 0
                    break
                if t_ev > snap_time:
                    fst[0] = snap_time
                    status = 4
                    break
                if n + 1 > cap and l3 > 0.0 and c3 > 0:
                    status = 2
                    break
                if st[2] >= logcap:
                    status = 3
                    break
                st[3] = 0
                fst[0] = t_ev
                x = _u(bg) * total
                rule = 0
                k = 0
                if x >= v:
                    x -= v
                    for rr in range(1, 5):
                        if rr == 1:
                            rate = l1
                            cnt = c1
                        elif rr == 2:
                            rate = l2
                            cnt = c2
                        elif rr == 3:
                            rate = l3
                            cnt = c3
                        else:
                            rate = l4
                            cnt = c4
                        w = rate * cnt
                        if w > 0.0:
                            rule = rr
                            if x < w:
                                k = <long long>(x / rate)
                                if k >= cnt:
                                    k = cnt - 1
                                break
                            x -= w
                            k = cnt - 1
                j = -1
                if rule == 0:
                    st[1] += 1
                else:
                    seen = 0
                    for q in range(n):
                        if _match(buf, n, ring, rule, q):
                            if seen == k:
                                j = q
                                break
                            seen += 1
                    if rule == 1:
                        buf[j] = 0
                        buf[(j + 1) % n] = 1
                    elif rule == 2:
                        buf[j] = 0
                        buf[(j + 1) % n] = 2
                        buf[(j + 2) % n] = 1
                    elif rule == 3:
                        q = n
                        while q > j + 1:
                            buf[q] = buf[q - 1]
                            q -= 1
                        buf[j + 1] = 0
                        n += 1
                    else:
                        buf[j] = 0
                        buf[(j + 1) % n] = 2
                    if not ring:
                        z = 0
                        while z < n - 1 and buf[z] == 0:
                            z += 1
                        if z > 0:
                            for q in range(n - z):
                                buf[q] = buf[q + z]
                            n -= z
                    st[0] = n
                ev_t[st[2]] = t_ev
                ev_rule[st[2]] = rule
                ev_pos[st[2]] = j
                st[2] += 1
    return status


# ---------------------------------------------------------------------------
# Velocity-mark flow
# ---------------------------------------------------------------------------
cdef inline void _swap(Py_ssize_t k, long long[::1] car, double[::1] pos,
                       long long[::1] wst, signed char[::1] contact,
                       double[::1] next_sw) noexcept nogil:
    cdef long long ti
    cdef double td
    ti = car[k - 1]; car[k - 1] = car[k]; car[k] = ti
    ti = wst[k - 1]; wst[k - 1] = wst[k]; wst[k] = ti
    td = next_sw[k - 1]; next_sw[k - 1] = next_sw[k]; next_sw[k] = td
    pos[k] = pos[k - 1]
    contact[k] = 1


def velocity_flow_run(rng, long long[::1] car, double[::1] pos, long long[::1] wst,
                      signed char[::1] contact, double[::1] next_sw,
                      double[::1] speeds, double[::1] qrates, double lam,
                      double t, double t_max, double[::1] snap_times,
                      double[:, ::1] snap_pos, double[:, ::1] snap_vel,
                      long long[:, ::1] snap_rank, signed char[:, ::1] snap_contact,
                      long long[::1] counters):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t n = car.shape[0]
    cdef double[::1] vel = np.zeros(n)
    cdef Py_ssize_t nsnap = snap_times.shape[0]
    cdef Py_ssize_t si = 0, k, kk, who, c
    cdef long long n_el, pick, seen
    cdef bint inf_lam = isinf(lam)
    cdef double w, t_next, tc, tov, s, dt
    cdef int kind
    while si < nsnap and snap_times[si] < t:
        si += 1
    lock = rng.bit_generator.lock
    with lock:
        with nogil:
            while True:
                while True:
                    for k in range(n):
                        w = speeds[wst[k]]
                        if k > 0 and contact[k]:
                            if w >= vel[k - 1]:
                                vel[k] = vel[k - 1]
                            else:
                                contact[k] = 0
                                vel[k] = w
                        else:
                            contact[k] = 0
                            vel[k] = w
                    if not inf_lam:
                        break
                    kk = -1
                    for k in range(1, n):
                        if contact[k] and speeds[wst[k]] > vel[k - 1]:
                            kk = k
                            break
                    if kk < 0:
                        break
                    _swap(kk, car, pos, wst, contact, next_sw)
                    counters[1] += 1
                t_next = t_max
                kind = 0
                who = -1
                for k in range(n):
                    if next_sw[k] < t_next:
                        t_next = next_sw[k]
                        kind = 1
                        who = k
                for k in range(1, n):
                    if not contact[k] and vel[k] > vel[k - 1]:
                        tc = t + (pos[k - 1] - pos[k]) / (vel[k] - vel[k - 1])
                        if tc < t:
                            tc = t
                        if tc < t_next:
                            t_next = tc
                            kind = 2
                            who = k
                n_el = 0
                if lam > 0.0 and not inf_lam:
                    for k in range(1, n):
                        if contact[k] and speeds[wst[k]] > vel[k - 1]:
                            n_el += 1
                    if n_el > 0:
                        tov = t - log1p(-_u(bg)) / (lam * n_el)
                        if tov < t_next:
                            t_next = tov
                            kind = 3
                while si < nsnap and snap_times[si] <= t_next:
                    s = snap_times[si]
                    for k in range(n):
                        c = car[k]
                        snap_pos[si, c] = pos[k] + vel[k] * (s - t)
                        snap_vel[si, c] = vel[k]
                        snap_rank[si, k] = c
                        snap_contact[si, c] = contact[k]
                    si += 1
                dt = t_next - t
                for k in range(n):
                    if k > 0 and contact[k]:
                        pos[k] = pos[k - 1]
                    else:
                        pos[k] += vel[k] * dt
                t = t_next
                if kind == 0:
                    break
                if kind == 1:
                    wst[who] = 1 - wst[who]
                    next_sw[who] = t - log1p(-_u(bg)) / qrates[wst[who]]
                    counters[2] += 1
                elif kind == 2:
                    contact[who] = 1
                    pos[who] = pos[who - 1]
                    counters[0] += 1
                else:
                    pick = <long long>(_u(bg) * n_el)
                    if pick >= n_el:
                        pick = n_el - 1
                    seen = 0
                    for k in range(1, n):
                        if contact[k] and speeds[wst[k]] > vel[k - 1]:
                            if seen == pick:
                                _swap(k, car, pos, wst, contact, next_sw)
                                counters[1] += 1
                                break
                            seen += 1
    return t


# ---------------------------------------------------------------------------
# Single-car walks
# ---------------------------------------------------------------------------
def obstacle_walk(double[::1] y, double[::1] tb, double[::1] td, double[::1] eta,
                  double y0, double t0, double y_end, double v,
                  double[::1] enc_y, double[::1] enc_d, Py_ssize_t n_log):
    cdef double yc = y0, tc = t0, yj, ta, d
    cdef Py_ssize_t j, m = y.shape[0]
    with nogil:
        for j in range(m):
            yj = y[j]
            if yj <= yc:
                continue
            if yj > y_end:
                break
            ta = tc + (yj - yc) / v
            if tb[j] <= ta and ta < td[j]:
                d = td[j] - ta
                if eta[j] < d:
                    d = eta[j]
                enc_y[n_log] = yj
                enc_d[n_log] = d
                n_log += 1
                yc = yj
                tc = ta + d
    return tc + (y_end - yc) / v, n_log


def slowcar_walk(double[::1] u, double[::1] tb, double[::1] texit, double[::1] tau,
                 double x0, double t0, double u_end, double x_end, double v1, double v2,
                 double[::1] enc_x, double[::1] enc_d, Py_ssize_t n_log):
    cdef double xc = x0, tc = t0, rel = v1 - v2, uc, tm, xm, tr, xr, tu, xu
    cdef double x_stop = 0.0, t_stop = 0.0
    cdef bint stopped = False
    cdef Py_ssize_t j, m = u.shape[0]
    with nogil:
        for j in range(m):
            uc = xc - v2 * tc
            if u[j] <= uc:
                continue
            if u[j] > u_end:
                break
            tm = tc + (u[j] - uc) / rel
            xm = xc + v1 * (tm - tc)
            if xm >= x_end:
                break
            if tb[j] <= tm and tm <= texit[j]:
                tr = tm + tau[j]
                if texit[j] < tr:
                    tr = texit[j]
                xr = xm + v2 * (tr - tm)
                enc_x[n_log] = xm
                if xr >= x_end:
                    enc_d[n_log] = (x_end - xm) / v2
                    n_log += 1
                    stopped = True
                    x_stop = x_end
                    t_stop = tm + (x_end - xm) / v2
                    break
                enc_d[n_log] = tr - tm
                n_log += 1
                xc = xr
                tc = tr
        uc = xc - v2 * tc
        tu = tc + (u_end - uc) / rel
        xu = xc + v1 * (tu - tc)
    if stopped:
        return x_stop, t_stop, n_log
    if xu >= x_end:
        return x_end, tc + (x_end - xc) / v1, n_log
    return xu, tu, n_log


# ---------------------------------------------------------------------------
# Log-space convolution
# ---------------------------------------------------------------------------
def log_partition(double[::1] log_r, Py_ssize_t m_max):
    out_arr = np.full(m_max + 1, -np.inf)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, m
    cdef double lr, a, b
    out[0] = 0.0
    with nogil:
        for i in range(log_r.shape[0]):
            lr = log_r[i]
            if lr == -INFINITY:
                continue
            for m in range(1, m_max + 1):
                a = out[m]
                b = lr + out[m - 1]
                if a == -INFINITY:
                    out[m] = b
                elif b == -INFINITY:
                    out[m] = a
                elif a > b:
                    out[m] = a + log1p(exp(b - a))
                else:
                    out[m] = b + log1p(exp(a - b))
    return out_arr
