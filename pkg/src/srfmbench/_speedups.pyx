# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-step force integration and Fréchet DP.

Must stay bit-identical to the pure-Python fallback in `_kernels_py.py`:
same operation order, no fast-math, no FP contraction (see setup.py flags).
"""

from libc.math cimport atan2, cos, exp, fabs, sin, sqrt, M_PI
from libc.stdlib cimport free, malloc

cdef double EPS = 1e-9


cdef inline double _tiebreak_angle(long long subject_id, long long source_id) noexcept nogil:
    cdef unsigned long long a = <unsigned long long> subject_id
    cdef unsigned long long b = <unsigned long long> source_id
    cdef unsigned long long h = ((a * 73856093ULL) ^ (b * 19349663ULL)) & 0xFFFFFFFFULL
    return (<double> h / 4294967296.0) * (2.0 * M_PI)


cdef inline void _repulsion(
    double sx, double sy, double hx, double hy,
    double src_x, double src_y, double d_sum,
    double A, double B, double lam, bint use_psi,
    long long subject_id, long long source_id,
    double* fx, double* fy,
) noexcept nogil:
    cdef double dx = sx - src_x
    cdef double dy = sy - src_y
    cdef double x = sqrt(dx * dx + dy * dy)
    cdef double ux, uy, tox, toy, dot, cross, phi, psi, mag, ang
    if x < EPS:
        ang = _tiebreak_angle(subject_id, source_id)
        fx[0] = A * cos(ang)
        fy[0] = A * sin(ang)
        return
    ux = dx / x
    uy = dy / x
    if use_psi:
        if hx == 0.0 and hy == 0.0:
            phi = 0.0
        else:
            tox = -ux
            toy = -uy
            dot = hx * tox + hy * toy
            cross = hx * toy - hy * tox
            phi = atan2(fabs(cross), dot)
        psi = lam + (1.0 - lam) * (1.0 + cos(phi)) * 0.5
    else:
        psi = 1.0
    mag = A * exp((d_sum - x) / B) * psi
    fx[0] = mag * ux
    fy[0] = mag * uy


def step_pedestrians_arrays(
    const double[:, ::1] pos,
    const double[:, ::1] vel,
    const double[:, ::1] goal,
    const double[::1] desired_speed,
    const double[::1] radius,
    const long long[::1] ids,
    bint robot_on,
    double robot_x,
    double robot_y,
    double robot_radius,
    long long robot_id,
    const double[:, ::1] obstacles,
    object params,
    object psi,
    double dt,
    double speed_cap,
    double goal_radius,
    double neighbor_cutoff,
    double[:, ::1] out_pos,
    double[:, ::1] out_vel,
):
    cdef double A_p = params.A_p
    cdef double B_p = params.B_p
    cdef double lam = params.lam
    cdef double tau = params.tau
    cdef double A_r = params.A_r
    cdef double B_r = params.B_r
    cdef double A_o = params.A_o
    cdef double B_o = params.B_o
    cdef bint psi_ped = psi.pedestrian
    cdef bint psi_robot = psi.robot
    cdef bint psi_obs = psi.obstacle

    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t n_obs = obstacles.shape[0]
    cdef double cutoff2 = neighbor_cutoff * neighbor_cutoff
    cdef Py_ssize_t i, j, k
    cdef double sx, sy, vx, vy, gdx, gdy, gnorm, ugx, ugy, v0m
    cdef double attx, atty, spd, hx, hy
    cdef double px, py, ox, oy, rx, ry, fx, fy
    cdef double ddx, ddy, tx, ty, vnx, vny, sp, s

    with nogil:
        for i in range(n):
            sx = pos[i, 0]
            sy = pos[i, 1]
            vx = vel[i, 0]
            vy = vel[i, 1]

            gdx = goal[i, 0] - sx
            gdy = goal[i, 1] - sy
            gnorm = sqrt(gdx * gdx + gdy * gdy)
            if gnorm < EPS:
                ugx = 0.0
                ugy = 0.0
            else:
                ugx = gdx / gnorm
                ugy = gdy / gnorm
            if gnorm <= goal_radius:
                v0m = 0.0
            else:
                v0m = desired_speed[i]

            attx = (v0m * ugx - vx) / tau
            atty = (v0m * ugy - vy) / tau

            spd = sqrt(vx * vx + vy * vy)
            if spd < EPS:
                hx = ugx
                hy = ugy
            else:
                hx = vx / spd
                hy = vy / spd

            px = 0.0
            py = 0.0
            if A_p != 0.0:
                for j in range(n):
                    if j == i:
                        continue
                    ddx = sx - pos[j, 0]
                    ddy = sy - pos[j, 1]
                    if ddx * ddx + ddy * ddy > cutoff2:
                        continue
                    _repulsion(sx, sy, hx, hy, pos[j, 0], pos[j, 1],
                               radius[i] + radius[j], A_p, B_p, lam, psi_ped,
                               ids[i], ids[j], &fx, &fy)
                    px += fx
                    py += fy

            ox = 0.0
            oy = 0.0
            if A_o != 0.0:
                for k in range(n_obs):
                    ddx = sx - obstacles[k, 0]
                    ddy = sy - obstacles[k, 1]
                    if ddx * ddx + ddy * ddy > cutoff2:
                        continue
                    _repulsion(sx, sy, hx, hy, obstacles[k, 0], obstacles[k, 1],
                               radius[i] + obstacles[k, 2], A_o, B_o, lam, psi_obs,
                               ids[i], <long long> (-(2 + k)), &fx, &fy)
                    ox += fx
                    oy += fy

            rx = 0.0
            ry = 0.0
            if robot_on and A_r != 0.0:
                ddx = sx - robot_x
                ddy = sy - robot_y
                if ddx * ddx + ddy * ddy <= cutoff2:
                    _repulsion(sx, sy, hx, hy, robot_x, robot_y,
                               radius[i] + robot_radius, A_r, B_r, lam, psi_robot,
                               ids[i], robot_id, &rx, &ry)

            tx = ((attx + px) + ox) + rx
            ty = ((atty + py) + oy) + ry

            vnx = vx + tx * dt
            vny = vy + ty * dt
            sp = sqrt(vnx * vnx + vny * vny)
            if sp > speed_cap:
                s = speed_cap / sp
                vnx = vnx * s
                vny = vny * s
            out_vel[i, 0] = vnx
            out_vel[i, 1] = vny
            out_pos[i, 0] = sx + vnx * dt
            out_pos[i, 1] = sy + vny * dt


def frechet_arrays(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("empty trajectory")
    cdef double* cur = <double*> malloc(m * sizeof(double))
    cdef double* prev = <double*> malloc(m * sizeof(double))
    if cur == NULL or prev == NULL:
        free(cur)
        free(prev)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef double dx, dy, d, best, out
    cdef double* tmp
    try:
        with nogil:
            dx = a[0, 0] - b[0, 0]
            dy = a[0, 1] - b[0, 1]
            cur[0] = sqrt(dx * dx + dy * dy)
            for j in range(1, m):
                dx = a[0, 0] - b[j, 0]
                dy = a[0, 1] - b[j, 1]
                d = sqrt(dx * dx + dy * dy)
                cur[j] = d if d > cur[j - 1] else cur[j - 1]
            for i in range(1, n):
                tmp = prev
                prev = cur
                cur = tmp
                dx = a[i, 0] - b[0, 0]
                dy = a[i, 1] - b[0, 1]
                d = sqrt(dx * dx + dy * dy)
                cur[0] = d if d > prev[0] else prev[0]
                for j in range(1, m):
                    best = prev[j]
                    if prev[j - 1] < best:
                        best = prev[j - 1]
                    if cur[j - 1] < best:
                        best = cur[j - 1]
                    dx = a[i, 0] - b[j, 0]
                    dy = a[i, 1] - b[j, 1]
                    d = sqrt(dx * dx + dy * dy)
                    cur[j] = d if d > best else best
            out = cur[m - 1]
    finally:
        free(cur)
        free(prev)
    return out
