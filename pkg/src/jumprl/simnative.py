"""Compiled inner loop for the simulator.

Mirrors SimWorld.step's substep arithmetic operation-for-operation in a
numba kernel; the pure-numpy path in simworld.py stays the reference
implementation and the test suite checks the two against each other.
State arrays are mutated in place. Returns 0 on success or the 1-based
substep index at which the state became non-finite.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def substep_loop(
    n_sub,
    dt,
    pos,
    quat,
    vel,
    omega,
    q,
    dq,
    anchors,
    contact_flags,
    q_des,
    hip,
    l1,
    l2,
    q_lo,
    q_hi,
    inv_ij,
    inertia,
    m_total,
    gravity,
    com_off,
    kp,
    kd,
    t_lim,
    coul,
    k_c,
    d_c,
    mu,
    k_t,
    d_t,
    v_eps,
    f_thresh,
    spring_on,
    k_spring,
    rest,
    d_spring,
    terr_ox,
    terr_oy,
    terr_cell,
    terr_heights,
    terr_base,
    info_out,
    trace_on,
    tr_power,
    tr_tau,
    tr_dq,
):
    feet_w = np.empty((4, 3))
    foot_vel_w = np.empty((4, 3))
    forces_w = np.empty((4, 3))
    tau_motor = np.empty(12)
    tau = np.empty(12)
    f_b = np.empty(3)
    nx = terr_heights.shape[0]
    ny = terr_heights.shape[1]

    for sub in range(n_sub):
        w, x, y, z = quat[0], quat[1], quat[2], quat[3]
        r00 = 1 - 2 * (y * y + z * z)
        r01 = 2 * (x * y - z * w)
        r02 = 2 * (x * z + y * w)
        r10 = 2 * (x * y + z * w)
        r11 = 1 - 2 * (x * x + z * z)
        r12 = 2 * (y * z - x * w)
        r20 = 2 * (x * z - y * w)
        r21 = 2 * (y * z + x * w)
        r22 = 1 - 2 * (x * x + y * y)

        com_x = pos[0] + r00 * com_off[0] + r01 * com_off[1] + r02 * com_off[2]
        com_y = pos[1] + r10 * com_off[0] + r11 * com_off[1] + r12 * com_off[2]
        com_z = pos[2] + r20 * com_off[0] + r21 * com_off[1] + r22 * com_off[2]

        f_sum_x = 0.0
        f_sum_y = 0.0
        f_sum_z = 0.0
        tq_x = 0.0
        tq_y = 0.0
        tq_z = 0.0
        any_contact = False

        for leg in range(4):
            j = 3 * leg
            s_a = np.sin(q[j])
            c_a = np.cos(q[j])
            s_t = np.sin(q[j + 1])
            c_t = np.cos(q[j + 1])
            s_tc = np.sin(q[j + 1] + q[j + 2])
            c_tc = np.cos(q[j + 1] + q[j + 2])
            vx = -l1 * s_t - l2 * s_tc
            vz = -l1 * c_t - l2 * c_tc
            fbx = hip[leg, 0] + vx
            fby = hip[leg, 1] - s_a * vz
            fbz = hip[leg, 2] + c_a * vz
            dvx_dt = -l1 * c_t - l2 * c_tc
            dvz_dt = l1 * s_t + l2 * s_tc
            dvx_dc = -l2 * c_tc
            dvz_dc = l2 * s_tc
            j10 = -c_a * vz
            j20 = -s_a * vz
            j11 = -s_a * dvz_dt
            j21 = c_a * dvz_dt
            j12 = -s_a * dvz_dc
            j22 = c_a * dvz_dc
            fvx = dvx_dt * dq[j + 1] + dvx_dc * dq[j + 2]
            fvy = j10 * dq[j] + j11 * dq[j + 1] + j12 * dq[j + 2]
            fvz = j20 * dq[j] + j21 * dq[j + 1] + j22 * dq[j + 2]

            fwx = pos[0] + r00 * fbx + r01 * fby + r02 * fbz
            fwy = pos[1] + r10 * fbx + r11 * fby + r12 * fbz
            fwz = pos[2] + r20 * fbx + r21 * fby + r22 * fbz
            feet_w[leg, 0] = fwx
            feet_w[leg, 1] = fwy
            feet_w[leg, 2] = fwz
            relx = fwx - pos[0]
            rely = fwy - pos[1]
            relz = fwz - pos[2]
            vwx = (
                vel[0]
                + omega[1] * relz
                - omega[2] * rely
                + r00 * fvx
                + r01 * fvy
                + r02 * fvz
            )
            vwy = (
                vel[1]
                + omega[2] * relx
                - omega[0] * relz
                + r10 * fvx
                + r11 * fvy
                + r12 * fvz
            )
            vwz = (
                vel[2]
                + omega[0] * rely
                - omega[1] * relx
                + r20 * fvx
                + r21 * fvy
                + r22 * fvz
            )
            foot_vel_w[leg, 0] = vwx
            foot_vel_w[leg, 1] = vwy
            foot_vel_w[leg, 2] = vwz

            # terrain height under the foot
            if nx > 0:
                gi = int(np.floor((fwx - terr_ox) / terr_cell))
                gj = int(np.floor((fwy - terr_oy) / terr_cell))
                if 0 <= gi < nx and 0 <= gj < ny:
                    ground = terr_heights[gi, gj]
                else:
                    ground = terr_base
            else:
                ground = terr_base

            pen = ground - fwz
            fx = 0.0
            fy = 0.0
            fz = 0.0
            if pen > 0.0:
                fn = k_c * pen - d_c * vwz
                if fn < 0.0:
                    fn = 0.0
                cap = mu * fn
                if np.isnan(anchors[leg, 0]):
                    anchors[leg, 0] = fwx
                    anchors[leg, 1] = fwy
                ftx = -k_t * (fwx - anchors[leg, 0]) - d_t * vwx
                fty = -k_t * (fwy - anchors[leg, 1]) - d_t * vwy
                mag = np.sqrt(ftx * ftx + fty * fty)
                if mag > cap:
                    s = cap / mag
                    ftx *= s
                    fty *= s
                    anchors[leg, 0] = fwx + (ftx + d_t * vwx) / k_t
                    anchors[leg, 1] = fwy + (fty + d_t * vwy) / k_t
                fx = ftx
                fy = fty
                fz = fn
                any_contact = True
            else:
                anchors[leg, 0] = np.nan
                anchors[leg, 1] = np.nan
            forces_w[leg, 0] = fx
            forces_w[leg, 1] = fy
            forces_w[leg, 2] = fz
            contact_flags[leg] = fz > f_thresh

            f_sum_x += fx
            f_sum_y += fy
            f_sum_z += fz
            ax = fwx - com_x
            ay = fwy - com_y
            az = fwz - com_z
            tq_x += ay * fz - az * fy
            tq_y += az * fx - ax * fz
            tq_z += ax * fy - ay * fx

            # motor torques for this leg
            for c in range(3):
                k = j + c
                tm = kp * (q_des[k] - q[k]) - kd * dq[k]
                if tm > t_lim:
                    tm = t_lim
                elif tm < -t_lim:
                    tm = -t_lim
                if coul != 0.0:
                    if dq[k] > 0.0:
                        tm -= coul
                    elif dq[k] < 0.0:
                        tm += coul
                tau_motor[k] = tm
                tau[k] = tm
                if spring_on:
                    tau[k] += -k_spring[k] * (q[k] - rest[k]) - d_spring[k] * dq[k]

            if fz != 0.0 or fx != 0.0 or fy != 0.0:
                f_b[0] = r00 * fx + r10 * fy + r20 * fz
                f_b[1] = r01 * fx + r11 * fy + r21 * fz
                f_b[2] = r02 * fx + r12 * fy + r22 * fz
                tau[j] += j10 * f_b[1] + j20 * f_b[2]
                tau[j + 1] += dvx_dt * f_b[0] + j11 * f_b[1] + j21 * f_b[2]
                tau[j + 2] += dvx_dc * f_b[0] + j12 * f_b[1] + j22 * f_b[2]

        # base dynamics
        ob_x = r00 * omega[0] + r10 * omega[1] + r20 * omega[2]
        ob_y = r01 * omega[0] + r11 * omega[1] + r21 * omega[2]
        ob_z = r02 * omega[0] + r12 * omega[1] + r22 * omega[2]
        iw_x = r00 * inertia[0] * ob_x + r01 * inertia[1] * ob_y + r02 * inertia[2] * ob_z
        iw_y = r10 * inertia[0] * ob_x + r11 * inertia[1] * ob_y + r12 * inertia[2] * ob_z
        iw_z = r20 * inertia[0] * ob_x + r21 * inertia[1] * ob_y + r22 * inertia[2] * ob_z
        gy_x = omega[1] * iw_z - omega[2] * iw_y
        gy_y = omega[2] * iw_x - omega[0] * iw_z
        gy_z = omega[0] * iw_y - omega[1] * iw_x
        tb_x = tq_x - gy_x
        tb_y = tq_y - gy_y
        tb_z = tq_z - gy_z
        lb_x = (r00 * tb_x + r10 * tb_y + r20 * tb_z) / inertia[0]
        lb_y = (r01 * tb_x + r11 * tb_y + r21 * tb_z) / inertia[1]
        lb_z = (r02 * tb_x + r12 * tb_y + r22 * tb_z) / inertia[2]
        od_x = r00 * lb_x + r01 * lb_y + r02 * lb_z
        od_y = r10 * lb_x + r11 * lb_y + r12 * lb_z
        od_z = r20 * lb_x + r21 * lb_y + r22 * lb_z

        acc_x = f_sum_x / m_total
        acc_y = f_sum_y / m_total
        acc_z = (f_sum_z - gravity * m_total) / m_total

        # semi-implicit joint update
        power = 0.0
        peak_tau = 0.0
        for k in range(12):
            dq[k] += tau[k] * inv_ij * dt
            q[k] += dq[k] * dt
            if q[k] < q_lo[k]:
                q[k] = q_lo[k]
                dq[k] = 0.0
            elif q[k] > q_hi[k]:
                q[k] = q_hi[k]
                dq[k] = 0.0
            p = tau_motor[k] * dq[k]
            if p < 0.0:
                p = -p
            power += p
            at = tau_motor[k] if tau_motor[k] >= 0.0 else -tau_motor[k]
            if at > peak_tau:
                peak_tau = at

        vel[0] += acc_x * dt
        vel[1] += acc_y * dt
        vel[2] += acc_z * dt
        pos[0] += vel[0] * dt
        pos[1] += vel[1] * dt
        pos[2] += vel[2] * dt
        omega[0] += od_x * dt
        omega[1] += od_y * dt
        omega[2] += od_z * dt

        rx = omega[0] * dt
        ry = omega[1] * dt
        rz = omega[2] * dt
        angle = np.sqrt(rx * rx + ry * ry + rz * rz)
        if angle < 1e-12:
            dw, dx_, dy_, dz_ = 1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz
        else:
            half = 0.5 * angle
            s = np.sin(half) / angle
            dw, dx_, dy_, dz_ = np.cos(half), s * rx, s * ry, s * rz
        w2 = dw * quat[0] - dx_ * quat[1] - dy_ * quat[2] - dz_ * quat[3]
        x2 = dw * quat[1] + dx_ * quat[0] + dy_ * quat[3] - dz_ * quat[2]
        y2 = dw * quat[2] - dx_ * quat[3] + dy_ * quat[0] + dz_ * quat[1]
        z2 = dw * quat[3] + dx_ * quat[2] - dy_ * quat[1] + dz_ * quat[0]
        norm = np.sqrt(w2 * w2 + x2 * x2 + y2 * y2 + z2 * z2)
        quat[0] = w2 / norm
        quat[1] = x2 / norm
        quat[2] = y2 / norm
        quat[3] = z2 / norm

        info_out[0] += power * dt
        if power > info_out[1]:
            info_out[1] = power
        if peak_tau > info_out[2]:
            info_out[2] = peak_tau
        if trace_on:
            tr_power[sub] = power
            for k in range(12):
                tr_tau[sub, k] = tau_motor[k]
                tr_dq[sub, k] = dq[k]

        if not (np.isfinite(pos[2]) and np.isfinite(q[0]) and np.isfinite(vel[2])):
            return sub + 1
    return 0
