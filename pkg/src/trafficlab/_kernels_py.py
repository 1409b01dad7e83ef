"""Pure-Python kernels; reference twin of the compiled ``_kernels`` module.

Every kernel consumes uniforms through ``rng.random()``, which reads the
same ``next_double`` stream the compiled version reads from the bit
generator, so both backends produce identical results for the same seed.
Exponential waits are ``-log1p(-u) / rate`` in both.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

# grammar kernel status codes
G_DONE = 0
G_ABSORBED = 1
G_GROW = 2
G_LOG_FULL = 3
G_SNAPSHOT = 4


def _expo(rng, rate):
    return -math.log1p(-rng.random()) / rate


# ---------------------------------------------------------------------------
# Jackson-network CTMC
# ---------------------------------------------------------------------------
def ctmc_run(rng, state, route_cdf, mu_table, lam, t, t_max, max_events,
             occ, joint, joint_cap, jumps, busy):
    """Advance a Jackson-network CTMC from time ``t`` until ``t_max``.

    state      int64[N] queue lengths, updated in place
    route_cdf  float64[N, N+1] cumulative routing (last column = exit)
    mu_table   float64[N, K] service rate by queue length; row i, col min(n, K-1)
    lam        float64[N] external arrival rates
    occ        float64[N, C+1] time-weighted marginal occupation (last bin: n >= C)
    joint      float64[(joint_cap+1)**N + 1] joint occupation (last: overflow);
               ignored when joint_cap < 0
    jumps      int64[N+1, N+1] transition counts, index 0 = outside world
    busy       float64[N] time with n_i > 0
    Returns (t, events).
    """
    n = state.shape[0]
    kcap = mu_table.shape[1] - 1
    ocap = occ.shape[1] - 1
    events = 0
    while events < max_events:
        total = 0.0
        for i in range(n):
            s = state[i]
            total += mu_table[i, s if s < kcap else kcap] + lam[i]
        # a chain with no enabled transition sits still until t_max
        if total <= 0.0:
            dt = t_max - t if t_max < math.inf else 0.0
            stop = True
        else:
            dt = -math.log1p(-rng.random()) / total
            stop = t + dt > t_max
            if stop:
                dt = t_max - t
        # occupation bookkeeping over [t, t + dt)
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
            return (t_max if t_max < math.inf else t), events
        t += dt
        # choose the event
        x = rng.random() * total
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
        if src < 0:  # rounding fall-through: take the last positive-rate event
            src = last_pos if last_pos < n else last_pos - n
            arrival = last_pos >= n
        if arrival:
            state[src] += 1
            jumps[0, src + 1] += 1
        else:
            u = rng.random()
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
# Random-grammar CTMC on words over {0,1,2}
# ---------------------------------------------------------------------------
def _grammar_counts(buf, n, ring):
    c1 = c2 = c3 = c4 = 0
    lim2 = n if ring else n - 1
    lim3 = n if ring else n - 2
    for j in range(n):
        a = buf[j]
        if a == 1:
            if j < lim2 and buf[(j + 1) % n] == 0:
                c1 += 1
            if j < lim3 and buf[(j + 1) % n] == 2 and buf[(j + 2) % n] == 0:
                c2 += 1
        elif a == 2:
            if j < lim2:
                b = buf[(j + 1) % n]
                if b == 1 or b == 2:
                    c3 += 1
                elif j < lim3 and b == 0 and buf[(j + 2) % n] == 0:
                    c4 += 1
    return c1, c2, c3, c4


def _grammar_find(buf, n, ring, rule, k):
    """Buffer index of the k-th (0-based) match of ``rule``."""
    lim2 = n if ring else n - 1
    lim3 = n if ring else n - 2
    seen = 0
    for j in range(n):
        a = buf[j]
        hit = False
        if rule == 1:
            hit = a == 1 and j < lim2 and buf[(j + 1) % n] == 0
        elif rule == 2:
            hit = a == 1 and j < lim3 and buf[(j + 1) % n] == 2 and buf[(j + 2) % n] == 0
        elif rule == 3:
            hit = a == 2 and j < lim2 and (buf[(j + 1) % n] == 1 or buf[(j + 1) % n] == 2)
        else:
            hit = a == 2 and j < lim3 and buf[(j + 1) % n] == 0 and buf[(j + 2) % n] == 0
        if hit:
            if seen == k:
                return j
            seen += 1
    return -1


def grammar_run(rng, buf, st, fst, rates, ring, t_max, snap_time,
                ev_t, ev_rule, ev_pos):
    """Run the grammar CTMC until t_max, a snapshot time, or a buffer limit.

    buf    int8[capacity]: word in back-to-front order, first st[0] cells used
    st     int64[4]: (length, r, n_logged, pending_flag)
    fst    float64[2]: (t, pending_event_time)
    rates  float64[5]: (v, lambda0+, lambda1+, lambda2-, lambda2+)
    ev_*   event log arrays (time, rule 0..4 with 0 = drift, buffer index)
    Returns a status code (G_*).  A drawn event time that falls beyond the
    snapshot time is kept pending in ``fst[1]`` so snapshots never change
    the random stream.
    """
    cap = buf.shape[0]
    logcap = ev_t.shape[0]
    v, l1, l2, l3, l4 = rates[0], rates[1], rates[2], rates[3], rates[4]
    while True:
        n = st[0]
        c1, c2, c3, c4 = _grammar_counts(buf, n, ring)
        total = v + l1 * c1 + l2 * c2 + l3 * c3 + l4 * c4
        if total <= 0.0:
            return G_ABSORBED
        if st[3] == 0:
            fst[1] = fst[0] - math.log1p(-rng.random()) / total
            st[3] = 1
        t_ev = fst[1]
        if t_ev > t_max:
            fst[0] = t_max
            return G_DONE
        if t_ev > snap_time:
            fst[0] = snap_time
            return G_SNAPSHOT
        if n + 1 > cap and l3 > 0.0 and c3 > 0:
            return G_GROW
        if st[2] >= logcap:
            return G_LOG_FULL
        st[3] = 0
        fst[0] = t_ev
        x = rng.random() * total
        rule = 0
        k = 0
        if x < v:
            rule = 0
        else:
            x -= v
            for rr, rate, cnt in ((1, l1, c1), (2, l2, c2), (3, l3, c3), (4, l4, c4)):
                w = rate * cnt
                if w > 0.0:
                    rule = rr
                    if x < w:
                        k = int(x / rate)
                        if k >= cnt:
                            k = cnt - 1
                        break
                    x -= w
                    k = cnt - 1
        j = -1
        if rule == 0:
            st[1] += 1
        else:
            j = _grammar_find(buf, n, ring, rule, k)
            if rule == 1:
                buf[j] = 0
                buf[(j + 1) % n] = 1
            elif rule == 2:
                buf[j] = 0
                buf[(j + 1) % n] = 2
                buf[(j + 2) % n] = 1
            elif rule == 3:
                for q in range(n, j + 1, -1):
                    buf[q] = buf[q - 1]
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


# ---------------------------------------------------------------------------
# Velocity-mark flow with overtaking
# ---------------------------------------------------------------------------
def velocity_flow_run(rng, car, pos, wst, contact, next_sw, speeds, qrates,
                      lam, t, t_max, snap_times, snap_pos, snap_vel,
                      snap_rank, snap_contact, counters):
    """Event-driven point-car flow; rank 0 is the leader.

    car, pos, wst, contact, next_sw are indexed by rank and permuted on
    overtakes.  wst is the driver state (0 -> speeds[0], 1 -> speeds[1]);
    it flips at rate qrates[wst].  Snapshots are stored by car id.
    counters: int64[3] = (contacts, overtakes, switches).
    """
    n = car.shape[0]
    vel = np.zeros(n)
    nsnap = snap_times.shape[0]
    si = 0
    while si < nsnap and snap_times[si] < t:
        si += 1
    inf_lam = math.isinf(lam)
    while True:
        # velocities front to back; overtakes on contact when lam is infinite
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
                tov = t - math.log1p(-rng.random()) / (lam * n_el)
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
            return t
        if kind == 1:
            wst[who] = 1 - wst[who]
            next_sw[who] = t - math.log1p(-rng.random()) / qrates[wst[who]]
            counters[2] += 1
        elif kind == 2:
            contact[who] = 1
            pos[who] = pos[who - 1]
            counters[0] += 1
        else:
            pick = int(rng.random() * n_el)
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


def _swap(k, car, pos, wst, contact, next_sw):
    """Car at rank k passes the car at rank k-1 (same position)."""
    car[k - 1], car[k] = car[k], car[k - 1]
    wst[k - 1], wst[k] = wst[k], wst[k - 1]
    next_sw[k - 1], next_sw[k] = next_sw[k], next_sw[k - 1]
    pos[k] = pos[k - 1]
    # the overtaker inherits the overtaken car's contact with rank k-2
    contact[k] = 1


# ---------------------------------------------------------------------------
# Single-car walks through pre-generated obstacle candidates
# ---------------------------------------------------------------------------
def obstacle_walk(y, tb, td, eta, y0, t0, y_end, v, enc_y, enc_d, n_log):
    """Walk a car from (y0, t0) to y_end through obstacles sorted by position.

    An obstacle at y_j is met iff the car arrives while it is alive
    (tb_j <= t_arrive < td_j); the car then waits min(eta_j, td_j - t_arrive).
    Returns (t_end, n_logged).
    """
    yc = y0
    tc = t0
    m = y.shape[0]
    for j in range(m):
        yj = y[j]
        if yj <= yc:
            continue
        if yj > y_end:
            break
        ta = tc + (yj - yc) / v
        if tb[j] <= ta < td[j]:
            d = td[j] - ta
            if eta[j] < d:
                d = eta[j]
            enc_y[n_log] = yj
            enc_d[n_log] = d
            n_log += 1
            yc = yj
            tc = ta + d
    return tc + (y_end - yc) / v, n_log


def slowcar_walk(u, tb, texit, tau, x0, t0, u_end, x_end, v1, v2, enc_x, enc_d, n_log):
    """Fast car from (x0, t0) among slow cars sorted by u = x - v2*t.

    Slow car j travels x = u_j + v2*t for t in [tb_j, texit_j].  The fast
    car meets lines in increasing u; if the slow car is on the road at the
    meeting time the fast car follows it until its overtaking time tau_j
    elapses or the slow car exits, whichever comes first.  The walk stops
    when the car's u reaches u_end or its x reaches x_end, whichever is
    first.  Returns (x, t, n_logged) at the stopping point.
    """
    xc = x0
    tc = t0
    rel = v1 - v2
    m = u.shape[0]
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
        if tb[j] <= tm <= texit[j]:
            tr = tm + tau[j]
            if texit[j] < tr:
                tr = texit[j]
            xr = xm + v2 * (tr - tm)
            enc_x[n_log] = xm
            if xr >= x_end:
                enc_d[n_log] = (x_end - xm) / v2
                n_log += 1
                return x_end, tm + (x_end - xm) / v2, n_log
            enc_d[n_log] = tr - tm
            n_log += 1
            xc = xr
            tc = tr
    uc = xc - v2 * tc
    tu = tc + (u_end - uc) / rel
    xu = xc + v1 * (tu - tc)
    if xu >= x_end:
        return x_end, tc + (x_end - xc) / v1, n_log
    return xu, tu, n_log


# ---------------------------------------------------------------------------
# Log-space convolution for closed-network partition functions
# ---------------------------------------------------------------------------
def log_partition(log_r, m_max):
    """log Z_{i,m} for m = 0..m_max after folding in all nodes.

    Recursion Z_i(m) = Z_{i-1}(m) + r_i Z_i(m-1), evaluated with logaddexp.
    """
    out = np.full(m_max + 1, -math.inf)
    out[0] = 0.0
    for lr in log_r:
        if lr == -math.inf:
            continue
        for m in range(1, m_max + 1):
            a = out[m]
            b = lr + out[m - 1]
            if a == -math.inf:
                out[m] = b
            elif b == -math.inf:
                out[m] = a
            elif a > b:
                out[m] = a + math.log1p(math.exp(b - a))
            else:
                out[m] = b + math.log1p(math.exp(a - b))
    return out
