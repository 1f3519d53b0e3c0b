"""Jit-compiled inner loops shared by the generic engine and the lattice models.

The functions here are the single source of truth for per-event accumulation
arithmetic.  The generic engine calls ``observe_values``/``observe_pair`` once
per event from Python; the per-model run kernels inline the same functions in
a compiled loop.  Both consume the supplied ``numpy.random.Generator`` in the
same order, so a kernel run and a generic run with equal seeds produce
bit-identical trajectories and estimates (pinned by tests).
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# observable evaluation on lattice-vector states
# ---------------------------------------------------------------------------


@njit(cache=True)
def fill_values(state, obs_i, obs_j, out):
    """Evaluate site/pair observables: out[k] = state[i] (* state[j] if j >= 0)."""
    for k in range(obs_i.shape[0]):
        v = state[obs_i[k]] * 1.0
        j = obs_j[k]
        if j >= 0:
            v = v * state[j]
        out[k] = v


# ---------------------------------------------------------------------------
# accumulation core
# ---------------------------------------------------------------------------


@njit(cache=True)
def observe_values(values, dt, exit_rate, t0, t1, bw, use_mht,
                   integ, integ_sq, batch_integ, batch_w, scal,
                   grid, grid_next, grid_dt):
    """Account one holding interval [t, t+dt) of piecewise-constant values.

    scal = [clock, total_weight, jump_count].  Contributions are clipped to
    the window [t0, t1) and split exactly across equal-duration batches.
    With use_mht the weight is 1/exit_rate, booked to the batch containing
    the interval start (static observables only).
    """
    a = scal[0]
    b = a + dt
    scal[0] = b
    n_obs = values.shape[0]
    n_batches = batch_w.shape[0]
    if use_mht:
        if t0 <= a < t1:
            w = 1.0 / exit_rate
            j = int((a - t0) / bw)
            if j >= n_batches:
                j = n_batches - 1
            for k in range(n_obs):
                v = values[k]
                integ[k] += v * w
                integ_sq[k] += v * v * w
                batch_integ[j, k] += v * w
            batch_w[j] += w
            scal[1] += w
            scal[2] += 1.0
    else:
        lo = a if a > t0 else t0
        hi = b if b < t1 else t1
        if hi > lo:
            seg_total = hi - lo
            for k in range(n_obs):
                v = values[k]
                integ[k] += v * seg_total
                integ_sq[k] += v * v * seg_total
            scal[1] += seg_total
            j0 = int((lo - t0) / bw)
            if j0 >= n_batches:
                j0 = n_batches - 1
            j1 = int((hi - t0) / bw)
            if j1 >= n_batches:
                j1 = n_batches - 1
            if j0 == j1:
                for k in range(n_obs):
                    batch_integ[j0, k] += values[k] * seg_total
                batch_w[j0] += seg_total
            else:
                for j in range(j0, j1 + 1):
                    blo = t0 + j * bw
                    bhi = blo + bw
                    s_lo = lo if lo > blo else blo
                    s_hi = hi if hi < bhi else bhi
                    seg = s_hi - s_lo
                    if seg > 0.0:
                        for k in range(n_obs):
                            batch_integ[j, k] += values[k] * seg
                        batch_w[j] += seg
        if t0 <= a < t1:
            scal[2] += 1.0
    if grid_dt > 0.0:
        g = grid_next[0]
        gmax = grid.shape[0]
        while g < gmax:
            if t0 + g * grid_dt >= b:
                break
            for k in range(n_obs):
                grid[g, k] = values[k]
            g += 1
        grid_next[0] = g


@njit(cache=True)
def observe_pair(vx, vy, dt, exit_rate, t0, t1, bw, use_mht,
                 x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
                 diff_sq, batch_w, scal,
                 grid_x, grid_y, grid_next, grid_dt):
    """Paired-chain variant of observe_values sharing one clock and weight."""
    a = scal[0]
    b = a + dt
    scal[0] = b
    n_obs = vx.shape[0]
    n_batches = batch_w.shape[0]
    if use_mht:
        if t0 <= a < t1:
            w = 1.0 / exit_rate
            j = int((a - t0) / bw)
            if j >= n_batches:
                j = n_batches - 1
            for k in range(n_obs):
                x = vx[k]
                y = vy[k]
                d = x - y
                x_integ[k] += x * w
                x_sq[k] += x * x * w
                y_integ[k] += y * w
                y_sq[k] += y * y * w
                diff_sq[k] += d * d * w
                x_batch[j, k] += x * w
                y_batch[j, k] += y * w
            batch_w[j] += w
            scal[1] += w
            scal[2] += 1.0
    else:
        lo = a if a > t0 else t0
        hi = b if b < t1 else t1
        if hi > lo:
            seg_total = hi - lo
            for k in range(n_obs):
                x = vx[k]
                y = vy[k]
                d = x - y
                x_integ[k] += x * seg_total
                x_sq[k] += x * x * seg_total
                y_integ[k] += y * seg_total
                y_sq[k] += y * y * seg_total
                diff_sq[k] += d * d * seg_total
            scal[1] += seg_total
            j0 = int((lo - t0) / bw)
            if j0 >= n_batches:
                j0 = n_batches - 1
            j1 = int((hi - t0) / bw)
            if j1 >= n_batches:
                j1 = n_batches - 1
            if j0 == j1:
                for k in range(n_obs):
                    x_batch[j0, k] += vx[k] * seg_total
                    y_batch[j0, k] += vy[k] * seg_total
                batch_w[j0] += seg_total
            else:
                for j in range(j0, j1 + 1):
                    blo = t0 + j * bw
                    bhi = blo + bw
                    s_lo = lo if lo > blo else blo
                    s_hi = hi if hi < bhi else bhi
                    seg = s_hi - s_lo
                    if seg > 0.0:
                        for k in range(n_obs):
                            x_batch[j, k] += vx[k] * seg
                            y_batch[j, k] += vy[k] * seg
                        batch_w[j] += seg
        if t0 <= a < t1:
            scal[2] += 1.0
    if grid_dt > 0.0:
        g = grid_next[0]
        gmax = grid_x.shape[0]
        while g < gmax:
            if t0 + g * grid_dt >= b:
                break
            for k in range(n_obs):
                grid_x[g, k] = vx[k]
                grid_y[g, k] = vy[k]
            g += 1
        grid_next[0] = g


# ---------------------------------------------------------------------------
# exclusion-process move table
#
# Move ids over a fixed universe of size 2*(n-1) + 4:
#   m in [0, nb)        jump right across bond m   (site m -> m+1)
#   m in [nb, 2*nb)     jump left across bond m-nb (site b+1 -> b)
#   2*nb + 0            inject at site 0
#   2*nb + 1            remove at site 0
#   2*nb + 2            inject at site n-1
#   2*nb + 3            remove at site n-1
# rates_univ[m] holds the rate of move m when it is available.
# ---------------------------------------------------------------------------


@njit(cache=True)
def ssep_move_rate(m, occ, nb, n, rates_univ):
    if m < nb:
        if occ[m] == 1 and occ[m + 1] == 0:
            return rates_univ[m]
        return 0.0
    if m < 2 * nb:
        b = m - nb
        if occ[b + 1] == 1 and occ[b] == 0:
            return rates_univ[m]
        return 0.0
    k = m - 2 * nb
    if k == 0:
        return rates_univ[m] if occ[0] == 0 else 0.0
    if k == 1:
        return rates_univ[m] if occ[0] == 1 else 0.0
    if k == 2:
        return rates_univ[m] if occ[n - 1] == 0 else 0.0
    return rates_univ[m] if occ[n - 1] == 1 else 0.0


@njit(cache=True)
def ssep_apply_move(occ, m, nb, n):
    if m < nb:
        occ[m] = 0
        occ[m + 1] = 1
    elif m < 2 * nb:
        b = m - nb
        occ[b + 1] = 0
        occ[b] = 1
    else:
        k = m - 2 * nb
        if k == 0:
            occ[0] = 1
        elif k == 1:
            occ[0] = 0
        elif k == 2:
            occ[n - 1] = 1
        else:
            occ[n - 1] = 0


@njit(cache=True)
def ssep_run_simple(occ, rates_univ, t_final, obs_i, obs_j, values,
                    t0, t1, bw, use_mht,
                    integ, integ_sq, batch_integ, batch_w, scal,
                    grid, grid_next, grid_dt, rng):
    """Advance a single exclusion chain until the clock passes t_final.

    Returns 0, or -1 if an absorbing state (zero total rate) is reached.
    The rate scans below accumulate in move-id order, matching the
    sequential cumulative sums of the generic path bit for bit.
    """
    n = occ.shape[0]
    nb = n - 1
    while scal[0] < t_final:
        total = 0.0
        for m in range(nb):
            if occ[m] == 1 and occ[m + 1] == 0:
                total += rates_univ[m]
        for b in range(nb):
            if occ[b + 1] == 1 and occ[b] == 0:
                total += rates_univ[nb + b]
        if occ[0] == 0:
            total += rates_univ[2 * nb]
        else:
            total += rates_univ[2 * nb + 1]
        if occ[n - 1] == 0:
            total += rates_univ[2 * nb + 2]
        else:
            total += rates_univ[2 * nb + 3]
        if total <= 0.0:
            return -1
        dt = rng.exponential(1.0 / total)
        fill_values(occ, obs_i, obs_j, values)
        observe_values(values, dt, total, t0, t1, bw, use_mht,
                       integ, integ_sq, batch_integ, batch_w, scal,
                       grid, grid_next, grid_dt)
        u = rng.random() * total
        acc = 0.0
        chosen = -1
        last = -1
        for m in range(nb):
            if occ[m] == 1 and occ[m + 1] == 0:
                last = m
                acc += rates_univ[m]
                if u < acc:
                    chosen = m
                    break
        if chosen < 0:
            for b in range(nb):
                if occ[b + 1] == 1 and occ[b] == 0:
                    m = nb + b
                    last = m
                    acc += rates_univ[m]
                    if u < acc:
                        chosen = m
                        break
        if chosen < 0:
            for k in range(4):
                m = 2 * nb + k
                r = ssep_move_rate(m, occ, nb, n, rates_univ)
                if r > 0.0:
                    last = m
                    acc += r
                    if u < acc:
                        chosen = m
                        break
        if chosen < 0:
            chosen = last
        ssep_apply_move(occ, chosen, nb, n)
    return 0


@njit(cache=True)
def ssep_run_coupled(occ_x, occ_y, rates_univ, z_univ, t_final,
                     obs_i, obs_j, vx, vy,
                     t0, t1, bw, use_mht,
                     x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
                     diff_sq, batch_w, scal,
                     grid_x, grid_y, grid_next, grid_dt, rng):
    """Advance the coupled pair (x unconstrained, y gated by min(Z, 1)).

    Each available move of either copy is one joint event at the move's own
    rate; moves available to both copies fire in both.  Returns
    (status, proposals, rejections).
    """
    n = occ_x.shape[0]
    nb = n - 1
    proposals = 0
    rejections = 0
    while scal[0] < t_final:
        total = 0.0
        for m in range(nb):
            if ((occ_x[m] == 1 and occ_x[m + 1] == 0)
                    or (occ_y[m] == 1 and occ_y[m + 1] == 0)):
                total += rates_univ[m]
        for b in range(nb):
            if ((occ_x[b + 1] == 1 and occ_x[b] == 0)
                    or (occ_y[b + 1] == 1 and occ_y[b] == 0)):
                total += rates_univ[nb + b]
        if occ_x[0] == 0 or occ_y[0] == 0:
            total += rates_univ[2 * nb]
        if occ_x[0] == 1 or occ_y[0] == 1:
            total += rates_univ[2 * nb + 1]
        if occ_x[n - 1] == 0 or occ_y[n - 1] == 0:
            total += rates_univ[2 * nb + 2]
        if occ_x[n - 1] == 1 or occ_y[n - 1] == 1:
            total += rates_univ[2 * nb + 3]
        if total <= 0.0:
            return -1, proposals, rejections
        dt = rng.exponential(1.0 / total)
        fill_values(occ_x, obs_i, obs_j, vx)
        fill_values(occ_y, obs_i, obs_j, vy)
        observe_pair(vx, vy, dt, total, t0, t1, bw, use_mht,
                     x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
                     diff_sq, batch_w, scal,
                     grid_x, grid_y, grid_next, grid_dt)
        u = rng.random() * total
        acc = 0.0
        chosen = -1
        last = -1
        for m in range(nb):
            if ((occ_x[m] == 1 and occ_x[m + 1] == 0)
                    or (occ_y[m] == 1 and occ_y[m + 1] == 0)):
                last = m
                acc += rates_univ[m]
                if u < acc:
                    chosen = m
                    break
        if chosen < 0:
            for b in range(nb):
                if ((occ_x[b + 1] == 1 and occ_x[b] == 0)
                        or (occ_y[b + 1] == 1 and occ_y[b] == 0)):
                    m = nb + b
                    last = m
                    acc += rates_univ[m]
                    if u < acc:
                        chosen = m
                        break
        if chosen < 0:
            for k in range(4):
                m = 2 * nb + k
                rx = ssep_move_rate(m, occ_x, nb, n, rates_univ)
                r = rx if rx > 0.0 else ssep_move_rate(m, occ_y, nb, n, rates_univ)
                if r > 0.0:
                    last = m
                    acc += r
                    if u < acc:
                        chosen = m
                        break
        if chosen < 0:
            chosen = last
        in_x = ssep_move_rate(chosen, occ_x, nb, n, rates_univ) > 0.0
        in_y = ssep_move_rate(chosen, occ_y, nb, n, rates_univ) > 0.0
        if in_x:
            ssep_apply_move(occ_x, chosen, nb, n)
        if in_y:
            proposals += 1
            z = z_univ[chosen]
            if z >= 1.0 or rng.random() < z:
                ssep_apply_move(occ_y, chosen, nb, n)
            else:
                rejections += 1
    return 0, proposals, rejections


# ---------------------------------------------------------------------------
# energy-redistribution chain (bond b: 0 = left bath at site 0,
# 1..n-1 interior between sites b-1 and b, n = right bath at site n-1)
# ---------------------------------------------------------------------------


@njit(cache=True)
def kmp_interior_ratio(beta_i, beta_j, ei, ej, ei_new, ej_new):
    return np.exp(beta_i * (ei - ei_new) + beta_j * (ej - ej_new))


@njit(cache=True)
def kmp_bath_ratio(beta_bath, beta_site, e_old, e_new):
    return np.exp((beta_bath - beta_site) * (e_new - e_old))


@njit(cache=True)
def kmp_run_simple(energies, t_left, t_right, t_final, obs_i, obs_j, values,
                   t0, t1, bw, use_mht,
                   integ, integ_sq, batch_integ, batch_w, scal,
                   grid, grid_next, grid_dt, rng):
    n = energies.shape[0]
    total = n + 1.0
    while scal[0] < t_final:
        dt = rng.exponential(1.0 / total)
        fill_values(energies, obs_i, obs_j, values)
        observe_values(values, dt, total, t0, t1, bw, use_mht,
                       integ, integ_sq, batch_integ, batch_w, scal,
                       grid, grid_next, grid_dt)
        b = rng.integers(0, n + 1)
        if b == 0:
            energies[0] = rng.exponential(t_left)
        elif b == n:
            energies[n - 1] = rng.exponential(t_right)
        else:
            u = rng.random()
            s = energies[b - 1] + energies[b]
            energies[b - 1] = u * s
            energies[b] = s - u * s
    return 0


@njit(cache=True)
def kmp_run_coupled(ex, ey, beta_prof, t_left, t_right, t_final,
                    obs_i, obs_j, vx, vy,
                    t0, t1, bw, use_mht,
                    x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
                    diff_sq, batch_w, scal,
                    grid_x, grid_y, grid_next, grid_dt, rng):
    """Shared-randomness coupling: the same bond and the same payload drive
    both copies; the y update is accepted with probability min(Z, 1)."""
    n = ex.shape[0]
    total = n + 1.0
    beta_l = 1.0 / t_left
    beta_r = 1.0 / t_right
    proposals = 0
    rejections = 0
    while scal[0] < t_final:
        dt = rng.exponential(1.0 / total)
        fill_values(ex, obs_i, obs_j, vx)
        fill_values(ey, obs_i, obs_j, vy)
        observe_pair(vx, vy, dt, total, t0, t1, bw, use_mht,
                     x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
                     diff_sq, batch_w, scal,
                     grid_x, grid_y, grid_next, grid_dt)
        b = rng.integers(0, n + 1)
        proposals += 1
        if b == 0:
            u = rng.exponential(t_left)
            z = kmp_bath_ratio(beta_l, beta_prof[0], ey[0], u)
            ex[0] = u
            if z >= 1.0 or rng.random() < z:
                ey[0] = u
            else:
                rejections += 1
        elif b == n:
            u = rng.exponential(t_right)
            z = kmp_bath_ratio(beta_r, beta_prof[n - 1], ey[n - 1], u)
            ex[n - 1] = u
            if z >= 1.0 or rng.random() < z:
                ey[n - 1] = u
            else:
                rejections += 1
        else:
            u = rng.random()
            sx = ex[b - 1] + ex[b]
            ex[b - 1] = u * sx
            ex[b] = sx - u * sx
            sy = ey[b - 1] + ey[b]
            py1 = u * sy
            py2 = sy - u * sy
            z = kmp_interior_ratio(beta_prof[b - 1], beta_prof[b],
                                   ey[b - 1], ey[b], py1, py2)
            if z >= 1.0 or rng.random() < z:
                ey[b - 1] = py1
                ey[b] = py2
            else:
                rejections += 1
    return 0, proposals, rejections
