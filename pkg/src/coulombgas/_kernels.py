"""Jitted inner loops: pair sums, Metropolis sweeps, Langevin steps, descent.

Kernel encoding: code 0 is -log r, code 1 is r**p (Coulomb p = 2-d, Riesz
p = -s). Confinement encoding: coefficient array c with V = sum c[k] r^(2k).
Log pair sums accumulate a running product of squared distances and flush it
through one log when it leaves the representable range, which keeps the
per-pair cost at a multiply instead of a transcendental.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_FLUSH_HI = 1e280
_FLUSH_LO = 1e-280
_REJECT = 1e307


@njit(cache=True)
def _v_of_r2(r2, coeffs):
    out = 0.0
    for k in range(len(coeffs) - 1, -1, -1):
        out = out * r2 + coeffs[k]
    return out


@njit(cache=True)
def _dv_dr2(r2, coeffs):
    out = 0.0
    for k in range(len(coeffs) - 1, 0, -1):
        out = out * r2 + k * coeffs[k]
    return out


@njit(cache=True)
def pair_energy_min(pos, code, p):
    """(sum_{i<j} g(x_i - x_j), min squared pair distance)."""
    n, d = pos.shape
    min_r2 = 1e300
    acc = 0.0
    prod = 1.0
    half_p = 0.5 * p
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                dx = pos[i, k] - pos[j, k]
                r2 += dx * dx
            if r2 < min_r2:
                min_r2 = r2
            if code == 0:
                prod *= r2
                if prod > _FLUSH_HI or prod < _FLUSH_LO:
                    acc += math.log(prod)
                    prod = 1.0
            else:
                acc += r2 ** half_p
    if code == 0:
        return -0.5 * (acc + math.log(prod)), min_r2
    return acc, min_r2


@njit(cache=True)
def total_energy(pos, code, p, coeffs):
    """H = sum_{i<j} g + N sum_i V."""
    n = pos.shape[0]
    pair, _ = pair_energy_min(pos, code, p)
    v = 0.0
    for i in range(n):
        r2 = 0.0
        for k in range(pos.shape[1]):
            r2 += pos[i, k] * pos[i, k]
        v += _v_of_r2(r2, coeffs)
    return pair + n * v


@njit(cache=True)
def interaction_gradients(pos, code, p, out):
    """out[i] = sum_{j != i} grad g(x_i - x_j); returns min squared distance."""
    n, d = pos.shape
    out[:] = 0.0
    min_r2 = 1e300
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                dx = pos[i, k] - pos[j, k]
                r2 += dx * dx
            if r2 == 0.0:
                return 0.0
            if r2 < min_r2:
                min_r2 = r2
            if code == 0:
                w = -1.0 / r2
            else:
                w = p * r2 ** (0.5 * p - 1.0)
            for k in range(d):
                gk = w * (pos[i, k] - pos[j, k])
                out[i, k] += gk
                out[j, k] -= gk
    return min_r2


@njit(cache=True)
def mean_field_forces_into(pos, code, p, coeffs, out):
    """out[i] = -(1/N) grad_i H; returns min squared pair distance."""
    n, d = pos.shape
    min_r2 = interaction_gradients(pos, code, p, out)
    for i in range(n):
        r2 = 0.0
        for k in range(d):
            r2 += pos[i, k] * pos[i, k]
        dv = 2.0 * _dv_dr2(r2, coeffs)
        for k in range(d):
            out[i, k] = -out[i, k] / n - dv * pos[i, k]
    return min_r2


@njit(cache=True)
def delta_move(pos, i, new, code, p, coeffs):
    """Energy change when point i moves to ``new``; huge sentinel on collision."""
    n, d = pos.shape
    half_p = 0.5 * p
    if code == 0:
        prod = 1.0
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            r2o = 0.0
            r2n = 0.0
            for k in range(d):
                dxo = pos[i, k] - pos[j, k]
                dxn = new[k] - pos[j, k]
                r2o += dxo * dxo
                r2n += dxn * dxn
            if r2n < 1e-300:
                return _REJECT
            prod *= r2n / r2o
            if prod > _FLUSH_HI or prod < _FLUSH_LO:
                acc += math.log(prod)
                prod = 1.0
        dpair = -0.5 * (acc + math.log(prod))
    else:
        dpair = 0.0
        for j in range(n):
            if j == i:
                continue
            r2o = 0.0
            r2n = 0.0
            for k in range(d):
                dxo = pos[i, k] - pos[j, k]
                dxn = new[k] - pos[j, k]
                r2o += dxo * dxo
                r2n += dxn * dxn
            if r2n < 1e-300:
                return _REJECT
            dpair += r2n ** half_p - r2o ** half_p
    r2o = 0.0
    r2n = 0.0
    for k in range(d):
        r2o += pos[i, k] * pos[i, k]
        r2n += new[k] * new[k]
    return dpair + n * (_v_of_r2(r2n, coeffs) - _v_of_r2(r2o, coeffs))


@njit(cache=True)
def mh_run(pos, beta_eff, n_sweeps, burn_sweeps, snap_stride, step0,
           target_acc, adapt_interval, adapt_rate, code, p, coeffs,
           box_half, seed):
    """Single-site random-walk Metropolis over systematic sweeps.

    The proposal scale adapts toward target_acc during burn-in (multiplicative
    update every adapt_interval sweeps) and is frozen afterwards. Snapshots
    are collected every snap_stride sweeps after burn-in; the returned energy
    at a snapshot is recomputed exactly to stop incremental drift.
    """
    np.random.seed(seed)
    n, d = pos.shape
    n_snaps = 0
    if snap_stride > 0 and n_sweeps > burn_sweeps:
        n_snaps = (n_sweeps - burn_sweeps) // snap_stride
    snaps = np.empty((n_snaps, n, d))
    snap_energy = np.empty(n_snaps)
    snap_sweep = np.empty(n_snaps, dtype=np.int64)
    acc_series = np.empty(n_sweeps)
    step_series = np.empty(n_sweeps)
    energy_series = np.empty(n_sweeps)
    new = np.empty(d)
    step = step0
    H = total_energy(pos, code, p, coeffs)
    acc_win = 0
    prop_win = 0
    snap_i = 0
    for sw in range(n_sweeps):
        acc_sw = 0
        for i in range(n):
            ok = True
            for k in range(d):
                new[k] = pos[i, k] + step * np.random.normal()
                if box_half > 0.0 and abs(new[k]) > box_half:
                    ok = False
            if ok:
                dh = delta_move(pos, i, new, code, p, coeffs)
                if dh < _REJECT:
                    a = -beta_eff * dh
                    if a >= 0.0 or np.random.random() < math.exp(a):
                        for k in range(d):
                            pos[i, k] = new[k]
                        H += dh
                        acc_sw += 1
        acc_series[sw] = acc_sw / n
        if sw < burn_sweeps:
            acc_win += acc_sw
            prop_win += n
            if (sw + 1) % adapt_interval == 0:
                rate = acc_win / prop_win
                step *= math.exp(adapt_rate * (rate - target_acc))
                if step < 1e-10:
                    step = 1e-10
                acc_win = 0
                prop_win = 0
        step_series[sw] = step
        energy_series[sw] = H
        if n_snaps > 0 and sw >= burn_sweeps and (sw - burn_sweeps + 1) % snap_stride == 0 \
                and snap_i < n_snaps:
            H = total_energy(pos, code, p, coeffs)
            energy_series[sw] = H
            for ii in range(n):
                for k in range(d):
                    snaps[snap_i, ii, k] = pos[ii, k]
            snap_energy[snap_i] = H
            snap_sweep[snap_i] = sw
            snap_i += 1
    return (snaps[:snap_i], snap_energy[:snap_i], snap_sweep[:snap_i],
            acc_series, step_series, energy_series, H)


@njit(cache=True)
def gd_polish(pos, code, p, coeffs, grad_tol, max_iter):
    """Gradient descent on H, Barzilai-Borwein steps with Armijo backtracking.

    Stops when the sup-norm of grad H falls below grad_tol. Returns
    (H, grad_max, iterations, status) with status 1 converged, 0 iteration
    cap, -1 line-search failure; pos is updated in place.
    """
    n, d = pos.shape
    grad = np.empty_like(pos)
    prev_grad = np.empty_like(pos)
    trial = np.empty_like(pos)
    H = total_energy(pos, code, p, coeffs)
    t = 0.1 / n
    it = 0
    status = 0
    gmax = 0.0
    t_acc = t
    while it < max_iter:
        interaction_gradients(pos, code, p, grad)
        gnorm2 = 0.0
        gmax = 0.0
        for i in range(n):
            r2 = 0.0
            for k in range(d):
                r2 += pos[i, k] * pos[i, k]
            dv = 2.0 * _dv_dr2(r2, coeffs)
            for k in range(d):
                grad[i, k] += n * dv * pos[i, k]
                gnorm2 += grad[i, k] * grad[i, k]
                if abs(grad[i, k]) > gmax:
                    gmax = abs(grad[i, k])
        if gmax < grad_tol:
            status = 1
            break
        if it > 0:
            # BB1 step from the last accepted move: s = -t_acc * prev_grad
            sy = 0.0
            ss = 0.0
            for i in range(n):
                for k in range(d):
                    s = -t_acc * prev_grad[i, k]
                    sy += s * (grad[i, k] - prev_grad[i, k])
                    ss += s * s
            if sy > 1e-300:
                t = ss / sy
            if t > 1e6:
                t = 1e6
            if t < 1e-14:
                t = 1e-14
        moved = False
        # near the minimum the true decrease falls below one ulp of H, so the
        # sufficient-decrease test is slackened by the rounding floor of H
        noise = 1.5e-14 * (abs(H) + 1.0)
        for _ in range(90):
            for i in range(n):
                for k in range(d):
                    trial[i, k] = pos[i, k] - t * grad[i, k]
            Ht = total_energy(trial, code, p, coeffs)
            if Ht <= H - 1e-4 * t * gnorm2 + noise:
                for i in range(n):
                    for k in range(d):
                        pos[i, k] = trial[i, k]
                        prev_grad[i, k] = grad[i, k]
                H = Ht
                t_acc = t
                moved = True
                break
            t *= 0.5
        if not moved:
            status = -1
            break
        it += 1
    return H, gmax, it, status


@njit(cache=True)
def _drift_into(pos, law, code, p, coeffs, out):
    """Velocity field of the first-order laws / acceleration of the second.

    law 0: -(1/N) grad_i H.  law 1: the same rotated by pi/2 (d = 2).
    law 2: identical to law 0 (acceleration).  Returns min squared pair
    distance."""
    n = pos.shape[0]
    min_r2 = mean_field_forces_into(pos, code, p, coeffs, out)
    if law == 1:
        for i in range(n):
            fx = out[i, 0]
            fy = out[i, 1]
            out[i, 0] = fy
            out[i, 1] = -fx
    return min_r2


@njit(cache=True)
def ode_run(pos, vel, dt, n_steps, snap_stride, law, scheme,
            code, p, coeffs, guard2):
    """Deterministic flows with per-step energy bookkeeping.

    law 0 gradient flow, 1 conservative (d=2), 2 newton; scheme 0 euler,
    1 rk4, 2 velocity verlet (newton only, enforced by the caller).
    energy[k] holds H after k steps for first-order laws and
    (1/2) sum |v|^2 + H/N for newton. Returns (snaps, vsnaps, times,
    energy, status, t_fail) with status 1 on a collision-guard hit.
    """
    n, d = pos.shape
    n_snaps = n_steps // snap_stride + 2
    snaps = np.empty((n_snaps, n, d))
    vsnaps = np.empty((n_snaps, n, d))
    times = np.empty(n_snaps)
    energy = np.empty(n_steps + 1)
    k1 = np.empty_like(pos)
    k2 = np.empty_like(pos)
    k3 = np.empty_like(pos)
    k4 = np.empty_like(pos)
    vk1 = np.empty_like(pos)
    vk2 = np.empty_like(pos)
    vk3 = np.empty_like(pos)
    vk4 = np.empty_like(pos)
    tmp = np.empty_like(pos)
    vtmp = np.empty_like(pos)
    snaps[0] = pos
    vsnaps[0] = vel
    times[0] = 0.0
    si = 1
    t = 0.0
    status = 0
    tfail = 0.0

    def _energy(pos, vel):
        h = total_energy(pos, code, p, coeffs)
        if law == 2:
            kin = 0.0
            for i in range(n):
                for k in range(d):
                    kin += vel[i, k] * vel[i, k]
            return 0.5 * kin + h / n
        return h

    energy[0] = _energy(pos, vel)
    estored = 1
    for step in range(n_steps):
        min_r2 = _drift_into(pos, law, code, p, coeffs, k1)
        if n > 1 and min_r2 < guard2:
            status = 1
            tfail = t
            break
        if law == 2:
            if scheme == 2:
                # velocity verlet: kick-drift-kick
                for i in range(n):
                    for k in range(d):
                        vtmp[i, k] = vel[i, k] + 0.5 * dt * k1[i, k]
                        pos[i, k] = pos[i, k] + dt * vtmp[i, k]
                min_r2 = _drift_into(pos, law, code, p, coeffs, k2)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        vel[i, k] = vtmp[i, k] + 0.5 * dt * k2[i, k]
            elif scheme == 0:
                for i in range(n):
                    for k in range(d):
                        pos[i, k] += dt * vel[i, k]
                        vel[i, k] += dt * k1[i, k]
            else:
                # rk4 on the coupled (x, v) system
                for i in range(n):
                    for k in range(d):
                        vk1[i, k] = vel[i, k]
                        tmp[i, k] = pos[i, k] + 0.5 * dt * vk1[i, k]
                        vtmp[i, k] = vel[i, k] + 0.5 * dt * k1[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k2)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        vk2[i, k] = vtmp[i, k]
                        tmp[i, k] = pos[i, k] + 0.5 * dt * vk2[i, k]
                        vtmp[i, k] = vel[i, k] + 0.5 * dt * k2[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k3)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        vk3[i, k] = vtmp[i, k]
                        tmp[i, k] = pos[i, k] + dt * vk3[i, k]
                        vtmp[i, k] = vel[i, k] + dt * k3[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k4)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        vk4[i, k] = vtmp[i, k]
                        pos[i, k] += dt / 6.0 * (vk1[i, k] + 2 * vk2[i, k]
                                                 + 2 * vk3[i, k] + vk4[i, k])
                        vel[i, k] += dt / 6.0 * (k1[i, k] + 2 * k2[i, k]
                                                 + 2 * k3[i, k] + k4[i, k])
        else:
            if scheme == 0:
                for i in range(n):
                    for k in range(d):
                        pos[i, k] += dt * k1[i, k]
            else:
                for i in range(n):
                    for k in range(d):
                        tmp[i, k] = pos[i, k] + 0.5 * dt * k1[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k2)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        tmp[i, k] = pos[i, k] + 0.5 * dt * k2[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k3)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        tmp[i, k] = pos[i, k] + dt * k3[i, k]
                min_r2 = _drift_into(tmp, law, code, p, coeffs, k4)
                if n > 1 and min_r2 < guard2:
                    status = 1
                    tfail = t
                    break
                for i in range(n):
                    for k in range(d):
                        pos[i, k] += dt / 6.0 * (k1[i, k] + 2 * k2[i, k]
                                                 + 2 * k3[i, k] + k4[i, k])
        t += dt
        energy[estored] = _energy(pos, vel)
        estored += 1
        if (step + 1) % snap_stride == 0 and si < n_snaps:
            snaps[si] = pos
            vsnaps[si] = vel
            times[si] = t
            si += 1
    # the endpoint is always recorded, stride-aligned or not
    if status == 0 and times[si - 1] < t:
        snaps[si] = pos
        vsnaps[si] = vel
        times[si] = t
        si += 1
    return snaps[:si], vsnaps[:si], times[:si], energy[:estored], status, tfail


@njit(cache=True)
def sde_first_order(pos, dt, n_steps, snap_stride, noise_coef, rotate,
                    code, p, coeffs, seed, guard2):
    """Euler-Maruyama for first-order laws: dx = drift dt + noise_coef dW.

    drift is the mean-field force, optionally rotated by -pi/2 (conservative
    law, d = 2). A step that would bring a pair within the collision guard is
    retried with a halved substep and fresh noise, up to 10 times.
    Returns (snapshots, times, status, t_fail); status 1 means collision.
    """
    np.random.seed(seed)
    n, d = pos.shape
    n_snaps = n_steps // snap_stride + 2
    snaps = np.empty((n_snaps, n, d))
    times = np.empty(n_snaps)
    force = np.empty_like(pos)
    trial = np.empty_like(pos)
    snaps[0] = pos
    times[0] = 0.0
    si = 1
    t = 0.0
    status = 0
    tfail = 0.0
    for step in range(n_steps):
        min_r2 = mean_field_forces_into(pos, code, p, coeffs, force)
        if min_r2 < guard2:
            status = 1
            tfail = t
            break
        if rotate == 1:
            for i in range(n):
                fx = force[i, 0]
                fy = force[i, 1]
                force[i, 0] = fy
                force[i, 1] = -fx
        dt_try = dt
        placed = False
        for _ in range(11):
            sq = math.sqrt(dt_try) * noise_coef
            for i in range(n):
                for k in range(d):
                    trial[i, k] = pos[i, k] + force[i, k] * dt_try + sq * np.random.normal()
            ok = True
            if n > 1:
                tmin = 1e300
                for i in range(n):
                    for j in range(i + 1, n):
                        r2 = 0.0
                        for k in range(d):
                            dx = trial[i, k] - trial[j, k]
                            r2 += dx * dx
                        if r2 < tmin:
                            tmin = r2
                if tmin < guard2:
                    ok = False
            if ok:
                placed = True
                break
            dt_try *= 0.5
        if not placed:
            status = 1
            tfail = t
            break
        for i in range(n):
            for k in range(d):
                pos[i, k] = trial[i, k]
        t += dt_try
        if (step + 1) % snap_stride == 0 and si < n_snaps:
            snaps[si] = pos
            times[si] = t
            si += 1
    if status == 0 and times[si - 1] < t:
        snaps[si] = pos
        times[si] = t
        si += 1
    return snaps[:si], times[:si], status, tfail


@njit(cache=True)
def sde_kinetic(pos, vel, dt, n_steps, snap_stride, noise_coef,
                code, p, coeffs, seed, guard2):
    """Second-order law with velocity noise, Strang splitting.

    Per step: half force kick, half drift, full Brownian velocity kick,
    half drift, half force kick. Returns (snapshots, vel snapshots, times,
    status, t_fail)."""
    np.random.seed(seed)
    n, d = pos.shape
    n_snaps = n_steps // snap_stride + 2
    snaps = np.empty((n_snaps, n, d))
    vsnaps = np.empty((n_snaps, n, d))
    times = np.empty(n_snaps)
    force = np.empty_like(pos)
    snaps[0] = pos
    vsnaps[0] = vel
    times[0] = 0.0
    si = 1
    t = 0.0
    status = 0
    tfail = 0.0
    min_r2 = mean_field_forces_into(pos, code, p, coeffs, force)
    for step in range(n_steps):
        if min_r2 < guard2:
            status = 1
            tfail = t
            break
        half = 0.5 * dt
        sq = math.sqrt(dt) * noise_coef
        for i in range(n):
            for k in range(d):
                vel[i, k] += force[i, k] * half
                pos[i, k] += vel[i, k] * half
        for i in range(n):
            for k in range(d):
                vel[i, k] += sq * np.random.normal()
                pos[i, k] += vel[i, k] * half
        min_r2 = mean_field_forces_into(pos, code, p, coeffs, force)
        for i in range(n):
            for k in range(d):
                vel[i, k] += force[i, k] * half
        t += dt
        if (step + 1) % snap_stride == 0 and si < n_snaps:
            snaps[si] = pos
            vsnaps[si] = vel
            times[si] = t
            si += 1
    if status == 0 and times[si - 1] < t:
        snaps[si] = pos
        vsnaps[si] = vel
        times[si] = t
        si += 1
    return snaps[:si], vsnaps[:si], times[:si], status, tfail


@njit(cache=True)
def line_pv_face_velocity(masses, h, out):
    """p.v. sum_j m_j / (x_f - x_j) at the m+1 cell faces.

    Faces sit half a cell away from every midpoint node, so x_f - x_j =
    h*(f - j - 1/2) and no node is singular. The equidistant pair
    j = f-1-k, j = f+k is accumulated together in a fixed order so that
    mirror-symmetric data produces an exactly antisymmetric field."""
    m = masses.shape[0]
    for f in range(m + 1):
        s = 0.0
        kmax = f if f > m - f else m - f
        for k in range(kmax):
            c = 0.0
            if f - 1 - k >= 0:
                c += masses[f - 1 - k] / (k + 0.5)
            if f + k < m:
                c -= masses[f + k] / (k + 0.5)
            s += c
        out[f] = s / h
    return out


@njit(cache=True)
def grid_potential_d1(points, lo, h, values, code, p, cell_mean):
    """Potential of a 1-d gridded density at arbitrary points.

    Midpoint quadrature; the cell containing a point contributes its
    analytic cell average instead of the singular midpoint value."""
    m = values.shape[0]
    npts = points.shape[0]
    out = np.empty(npts)
    for q in range(npts):
        x = points[q, 0]
        ci = int(math.floor((x - lo) / h))
        s = 0.0
        for i in range(m):
            if i == ci:
                s += cell_mean * values[i]
            else:
                dx = x - (lo + (i + 0.5) * h)
                r2 = dx * dx
                if code == 0:
                    s += -0.5 * math.log(r2) * values[i]
                else:
                    s += r2 ** (0.5 * p) * values[i]
        out[q] = s * h
    return out


@njit(cache=True)
def grid_potential_d2(points, lo0, lo1, h0, h1, values, code, p, cell_mean):
    """Potential of a 2-d gridded density at arbitrary points."""
    m0, m1 = values.shape
    npts = points.shape[0]
    out = np.empty(npts)
    vol = h0 * h1
    for q in range(npts):
        x0 = points[q, 0]
        x1 = points[q, 1]
        c0 = int(math.floor((x0 - lo0) / h0))
        c1 = int(math.floor((x1 - lo1) / h1))
        s = 0.0
        for i in range(m0):
            d0 = x0 - (lo0 + (i + 0.5) * h0)
            for j in range(m1):
                if values[i, j] == 0.0:
                    continue
                if i == c0 and j == c1:
                    s += cell_mean * values[i, j]
                else:
                    d1 = x1 - (lo1 + (j + 0.5) * h1)
                    r2 = d0 * d0 + d1 * d1
                    if code == 0:
                        s += -0.5 * math.log(r2) * values[i, j]
                    else:
                        s += r2 ** (0.5 * p) * values[i, j]
        out[q] = s * vol
    return out


@njit(cache=True)
def direct_lattice_power_sum(ux, uy, vx, vy, s, radius):
    """sum over nonzero lattice points m*u + n*v with norm <= radius of norm^-s."""
    det = abs(ux * vy - uy * vx)
    nu = math.sqrt(ux * ux + uy * uy)
    nv = math.sqrt(vx * vx + vy * vy)
    mmax = int(radius * nv / det) + 2
    nmax = int(radius * nu / det) + 2
    r2max = radius * radius
    total = 0.0
    for m in range(-mmax, mmax + 1):
        for n in range(-nmax, nmax + 1):
            if m == 0 and n == 0:
                continue
            px = m * ux + n * vx
            py = m * uy + n * vy
            r2 = px * px + py * py
            if r2 <= r2max:
                total += r2 ** (-0.5 * s)
    return total


@njit(cache=True)
def pair_separation_histogram(snaps, rmax, nbins):
    """Histogram of all pair distances across snapshots on [0, rmax]."""
    counts = np.zeros(nbins, dtype=np.int64)
    ns, n, d = snaps.shape
    scale = nbins / rmax
    for t in range(ns):
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for k in range(d):
                    dx = snaps[t, i, k] - snaps[t, j, k]
                    r2 += dx * dx
                r = math.sqrt(r2)
                b = int(r * scale)
                if 0 <= b < nbins:
                    counts[b] += 1
    return counts


@njit(cache=True)
def windowed_pair_histogram(snaps, win_r, rmax, nbins):
    """Ordered-pair distance histogram with the first point in an inner window.

    First point within win_r - rmax of the origin, partner anywhere; also
    returns the number of inner points summed over snapshots. This keeps the
    annulus around every counted point fully inside the window, so no edge
    correction is needed."""
    counts = np.zeros(nbins, dtype=np.int64)
    inner_r = win_r - rmax
    inner_r2 = inner_r * inner_r
    win_r2 = win_r * win_r
    scale = nbins / rmax
    n_inner = 0
    ns, n, d = snaps.shape
    for t in range(ns):
        for i in range(n):
            ri2 = 0.0
            for k in range(d):
                ri2 += snaps[t, i, k] * snaps[t, i, k]
            if ri2 > inner_r2:
                continue
            n_inner += 1
            for j in range(n):
                if j == i:
                    continue
                rj2 = 0.0
                for k in range(d):
                    rj2 += snaps[t, j, k] * snaps[t, j, k]
                if rj2 > win_r2:
                    continue
                r2 = 0.0
                for k in range(d):
                    dx = snaps[t, i, k] - snaps[t, j, k]
                    r2 += dx * dx
                b = int(math.sqrt(r2) * scale)
                if 0 <= b < nbins:
                    counts[b] += 1
    return counts, n_inner


@njit(cache=True)
def ball_counts(snaps, centers, radii):
    """counts[s, c, r] of points within radii[r] of centers[c] per snapshot."""
    ns, n, d = snaps.shape
    nc = centers.shape[0]
    nr = radii.shape[0]
    out = np.zeros((ns, nc, nr), dtype=np.int64)
    r2s = radii * radii
    for t in range(ns):
        for c in range(nc):
            for i in range(n):
                r2 = 0.0
                for k in range(d):
                    dx = snaps[t, i, k] - centers[c, k]
                    r2 += dx * dx
                for r in range(nr):
                    if r2 <= r2s[r]:
                        out[t, c, r] += 1
    return out
