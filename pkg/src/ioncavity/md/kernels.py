"""Compiled force and integration kernels.

All loops run in a fixed order (i < j pair loop, ions in index order) so
results are bit-reproducible for identical inputs.
"""
import math

import numpy as np
from numba import njit

from ioncavity.constants import EPSILON_0

COULOMB_K = 1.0 / (4.0 * math.pi * EPSILON_0)
MIN_SEPARATION = 1e-9

STATUS_OK = 0
STATUS_COLLISION = 1
STATUS_NONFINITE = 2

MODEL_RF = 0
MODEL_PSEUDO = 1


@njit(cache=True)
def coulomb_forces(pos, charge, out):
    """Pairwise Coulomb forces into ``out``; returns the minimum separation."""
    n = pos.shape[0]
    for i in range(n):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = 0.0
    min_r = np.inf
    for i in range(n - 1):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        qi = COULOMB_K * charge[i]
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for j in range(i + 1, n):
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r = math.sqrt(r2)
            if r < min_r:
                min_r = r
            s = qi * charge[j] / (r2 * r)
            fx += s * dx
            fy += s * dy
            fz += s * dz
            out[j, 0] -= s * dx
            out[j, 1] -= s * dy
            out[j, 2] -= s * dz
        out[i, 0] += fx
        out[i, 1] += fy
        out[i, 2] += fz
    return min_r


@njit(cache=True)
def coulomb_energy(pos, charge):
    n = pos.shape[0]
    e = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            e += COULOMB_K * charge[i] * charge[j] / math.sqrt(dx * dx + dy * dy + dz * dz)
    return e


@njit(cache=True)
def add_trap_forces(pos, charge, mass, t, model, u_rf, u_end, r0, z_half, eta, omega_rf, out):
    """Add trap forces at time ``t``.

    rf model: instantaneous quadrupole (U_rf/2) cos(Omega t) (x^2 - y^2) / r0^2
    plus the static end-cap term eta U_end / z_half^2 (z^2 - (x^2 + y^2) / 2).
    pseudo model: time-averaged harmonic restoring force.
    """
    n = pos.shape[0]
    k_end = eta * u_end / (z_half * z_half)
    if model == MODEL_RF:
        g = u_rf * math.cos(omega_rf * t) / (r0 * r0)
        for i in range(n):
            q = charge[i]
            out[i, 0] += q * (-g + k_end) * pos[i, 0]
            out[i, 1] += q * (g + k_end) * pos[i, 1]
            out[i, 2] += -2.0 * q * k_end * pos[i, 2]
    else:
        for i in range(n):
            q = charge[i]
            k_r = (q * u_rf) ** 2 / (2.0 * mass[i] * r0**4 * omega_rf**2) - q * k_end
            out[i, 0] += -k_r * pos[i, 0]
            out[i, 1] += -k_r * pos[i, 1]
            out[i, 2] += -2.0 * q * k_end * pos[i, 2]


@njit(cache=True)
def pseudo_trap_energy(pos, charge, mass, u_rf, u_end, r0, z_half, eta, omega_rf):
    k_end = eta * u_end / (z_half * z_half)
    e = 0.0
    for i in range(pos.shape[0]):
        q = charge[i]
        k_r = (q * u_rf) ** 2 / (2.0 * mass[i] * r0**4 * omega_rf**2) - q * k_end
        e += 0.5 * k_r * (pos[i, 0] ** 2 + pos[i, 1] ** 2) + q * k_end * pos[i, 2] ** 2
    return e


@njit(cache=True)
def total_force(pos, charge, mass, t, model, u_rf, u_end, r0, z_half, eta, omega_rf, out):
    min_r = coulomb_forces(pos, charge, out)
    add_trap_forces(pos, charge, mass, t, model, u_rf, u_end, r0, z_half, eta, omega_rf, out)
    return min_r


@njit(cache=True)
def advance(
    pos,
    vel,
    force,
    mass,
    charge,
    friction,
    t0,
    step0,
    dt,
    n_steps,
    model,
    u_rf,
    u_end,
    r0,
    z_half,
    eta,
    omega_rf,
    kicks,
    record_every,
    rec_pos,
    rec_vel,
):
    """Velocity-Verlet steps with linear friction, in place.

    ``force`` must hold the force at (pos, t0 + step0*dt) on entry and holds the
    force at the final time on exit. ``friction`` is (N, 3) of beta_i per axis
    (kg/s). The friction term is explicit in the first half kick and implicit
    in the second, which reduces to plain Verlet for zero friction. ``kicks``
    is either empty or (n_steps, N, 3) velocity kicks added after each step.
    Returns (status, steps_done, n_recorded).
    """
    n = pos.shape[0]
    half = 0.5 * dt
    n_rec = 0
    use_kicks = kicks.shape[0] > 0
    for s in range(n_steps):
        for i in range(n):
            inv_m = 1.0 / mass[i]
            for k in range(3):
                vel[i, k] += half * (force[i, k] - friction[i, k] * vel[i, k]) * inv_m
                pos[i, k] += dt * vel[i, k]
        t = t0 + (step0 + s + 1) * dt
        min_r = total_force(pos, charge, mass, t, model, u_rf, u_end, r0, z_half, eta, omega_rf, force)
        if min_r < MIN_SEPARATION:
            return STATUS_COLLISION, s + 1, n_rec
        for i in range(n):
            inv_m = 1.0 / mass[i]
            for k in range(3):
                g = half * friction[i, k] * inv_m
                vel[i, k] = (vel[i, k] + half * force[i, k] * inv_m) / (1.0 + g)
                if use_kicks:
                    vel[i, k] += kicks[s, i, k]
                if not math.isfinite(vel[i, k]) or not math.isfinite(pos[i, k]):
                    return STATUS_NONFINITE, s + 1, n_rec
        if record_every > 0 and (s + 1) % record_every == 0 and n_rec < rec_pos.shape[0]:
            for i in range(n):
                for k in range(3):
                    rec_pos[n_rec, i, k] = pos[i, k]
                    rec_vel[n_rec, i, k] = vel[i, k]
            n_rec += 1
    return STATUS_OK, n_steps, n_rec
