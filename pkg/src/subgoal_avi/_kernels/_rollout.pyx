# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernels: batched option episodes on the rooms dynamics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, cos, sin, floor, sqrt, M_PI, INFINITY

cnp.import_array()


cdef inline void _move(double px, double py, double v, double th,
                       const double[:, ::1] walls, const double[::1] goal, double eps,
                       double* ox, double* oy) noexcept nogil:
    cdef double c = cos(th), s = sin(th)
    cdef double dx = v * c, dy = v * s
    cdef double best = INFINITY, t, e, h, dist
    cdef Py_ssize_t k
    cdef double x1, y1, x2, y2
    if px >= goal[0] and px <= goal[2] and py >= goal[1] and py <= goal[3]:
        ox[0] = px
        oy[0] = py
        return
    for k in range(walls.shape[0]):
        x1 = walls[k, 0]; y1 = walls[k, 1]; x2 = walls[k, 2]; y2 = walls[k, 3]
        if x1 == x2:
            e = px + dx
            if (dx > 0.0 and px <= x1 and e >= x1) or (dx < 0.0 and px >= x1 and e <= x1):
                t = (x1 - px) / dx
                h = py + t * dy
                if h >= y1 and h <= y2 and t < best:
                    best = t
        else:
            e = py + dy
            if (dy > 0.0 and py <= y1 and e >= y1) or (dy < 0.0 and py >= y1 and e <= y1):
                t = (y1 - py) / dy
                h = px + t * dx
                if h >= x1 and h <= x2 and t < best:
                    best = t
    if best < INFINITY:
        dist = best * v - eps
        if dist < 0.0:
            dist = 0.0
        ox[0] = px + dist * c
        oy[0] = py + dist * s
    else:
        ox[0] = px + dx
        oy[0] = py + dy


def step_batch(const double[:, ::1] states, const double[:, ::1] actions,
               const double[:, ::1] walls, const double[::1] goal,
               double max_speed, double eps):
    cdef Py_ssize_t n = states.shape[0], i
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double v
    with nogil:
        for i in range(n):
            v = actions[i, 0]
            if v < 0.0:
                v = 0.0
            if v > max_speed:
                v = max_speed
            _move(states[i, 0], states[i, 1], v, actions[i, 1], walls, goal, eps, &o[i, 0], &o[i, 1])
    return out


cdef inline Py_ssize_t _region_of(double x, double y, const double[:, ::1] regions) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(regions.shape[0]):
        if x >= regions[j, 0] and x <= regions[j, 2] and y >= regions[j, 1] and y <= regions[j, 3]:
            return j
    return -1


def run_episodes(const double[:, ::1] params, sizes, const double[::1] norm_mean,
                 const double[::1] norm_std, const double[:, ::1] starts,
                 const double[:, ::1] walls, const double[::1] goal,
                 const double[:, ::1] regions, Py_ssize_t source, target_center,
                 int horizon, double gamma, double max_speed, double eps,
                 double distance_scale, bint pad_sink, bint record=False):
    cdef int n_in = sizes[0], h1 = sizes[1], h2 = sizes[2], n_out = sizes[3]
    if n_in != 2 or n_out != 2:
        raise ValueError("kernel supports 2-d observations and actions")
    cdef Py_ssize_t n = starts.shape[0]
    cdef Py_ssize_t P = params.shape[1]
    if P != n_in * h1 + h1 + h1 * h2 + h2 + h2 * n_out + n_out:
        raise ValueError("parameter length does not match layer sizes")
    cdef double cx = target_center[0], cy = target_center[1]

    final = np.empty((n, 2), dtype=np.float64)
    steps_a = np.zeros(n, dtype=np.int64)
    term_a = np.full(n, -1, dtype=np.int64)
    shaped_a = np.zeros(n, dtype=np.float64)
    disc_a = np.zeros(n, dtype=np.float64)
    stats = np.zeros(4, dtype=np.float64)
    traj_a = np.zeros((n if record else 1, horizon + 1, 2), dtype=np.float64)
    cdef double[:, ::1] fin = final
    cdef long long[::1] steps = steps_a
    cdef long long[::1] term = term_a
    cdef double[::1] shaped = shaped_a
    cdef double[::1] disc = disc_a
    cdef double[::1] st = stats
    cdef double[:, :, ::1] traj = traj_a
    cdef long long count = 0

    hbuf1 = np.empty(h1, dtype=np.float64)
    hbuf2 = np.empty(h2, dtype=np.float64)
    cdef double[::1] a1 = hbuf1
    cdef double[::1] a2 = hbuf2

    cdef Py_ssize_t i, j, k, t, reg
    cdef Py_ssize_t oW1, ob1, oW2, ob2, oW3, ob3
    oW1 = 0
    ob1 = oW1 + n_in * h1
    oW2 = ob1 + h1
    ob2 = oW2 + h1 * h2
    oW3 = ob2 + h2
    ob3 = oW3 + h2 * n_out
    cdef double x, y, nx, ny, o0, o1, acc, u0, u1, v, th, g, dist
    cdef bint was_goal, now_goal

    with nogil:
        for i in range(n):
            x = starts[i, 0]
            y = starts[i, 1]
            g = 1.0
            if record:
                traj[i, 0, 0] = x
                traj[i, 0, 1] = y
            for t in range(horizon):
                st[0] += x
                st[1] += y
                st[2] += x * x
                st[3] += y * y
                count += 1
                o0 = (x - norm_mean[0]) / norm_std[0]
                o1 = (y - norm_mean[1]) / norm_std[1]
                for j in range(h1):
                    acc = params[i, ob1 + j] + o0 * params[i, oW1 + j] + o1 * params[i, oW1 + h1 + j]
                    a1[j] = tanh(acc)
                for j in range(h2):
                    acc = params[i, ob2 + j]
                    for k in range(h1):
                        acc = acc + a1[k] * params[i, oW2 + k * h2 + j]
                    a2[j] = tanh(acc)
                u0 = params[i, ob3]
                u1 = params[i, ob3 + 1]
                for k in range(h2):
                    u0 = u0 + a2[k] * params[i, oW3 + k * 2]
                    u1 = u1 + a2[k] * params[i, oW3 + k * 2 + 1]
                v = max_speed * 0.5 * (tanh(u0) + 1.0)
                th = M_PI * u1
                th = th - 2.0 * M_PI * floor((th + M_PI) / (2.0 * M_PI))
                was_goal = x >= goal[0] and x <= goal[2] and y >= goal[1] and y <= goal[3]
                _move(x, y, v, th, walls, goal, eps, &nx, &ny)
                now_goal = nx >= goal[0] and nx <= goal[2] and ny >= goal[1] and ny <= goal[3]
                if now_goal and not was_goal:
                    disc[i] += g
                g = g * gamma
                steps[i] += 1
                shaped[i] -= sqrt((nx - cx) * (nx - cx) + (ny - cy) * (ny - cy)) / distance_scale
                x = nx
                y = ny
                if record:
                    traj[i, t + 1, 0] = x
                    traj[i, t + 1, 1] = y
                reg = _region_of(x, y, regions)
                if reg >= 0 and reg != source:
                    term[i] = reg
                    break
            if pad_sink:
                shaped[i] -= (horizon - steps[i]) * sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) / distance_scale
            fin[i, 0] = x
            fin[i, 1] = y

    out = {
        "final": final,
        "steps": steps_a,
        "term": term_a,
        "shaped": shaped_a,
        "disc": disc_a,
        "state_sum": stats[:2].copy(),
        "state_sumsq": stats[2:].copy(),
        "state_count": int(count),
    }
    if record:
        out["traj"] = traj_a
    return out
