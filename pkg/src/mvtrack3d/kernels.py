"""Numeric kernels.

Every function here is written to run both under numba's njit and as
plain Python over numpy arrays (see backend.jit). Callers are expected
to pass contiguous float64 / int64 / bool arrays.

Status codes returned by triangulate_normalized:
  0 ok, 1 too few rows, 2 rank deficient, 3 point at infinity.
"""

import math

import numpy as np

from .backend import jit

FLAG_TRIANGULATED = 0
FLAG_PREDICTED = 1
FLAG_MISSING = 2


@jit
def project_points(pts, K, R, o):
    """Project world points (M,3) through one camera, returns (uv (M,2), depth (M,))."""
    m = pts.shape[0]
    uv = np.empty((m, 2))
    depth = np.empty(m)
    for i in range(m):
        xc0 = R[0, 0] * (pts[i, 0] - o[0]) + R[0, 1] * (pts[i, 1] - o[1]) + R[0, 2] * (pts[i, 2] - o[2])
        xc1 = R[1, 0] * (pts[i, 0] - o[0]) + R[1, 1] * (pts[i, 1] - o[1]) + R[1, 2] * (pts[i, 2] - o[2])
        xc2 = R[2, 0] * (pts[i, 0] - o[0]) + R[2, 1] * (pts[i, 1] - o[1]) + R[2, 2] * (pts[i, 2] - o[2])
        depth[i] = xc2
        h0 = K[0, 0] * xc0 + K[0, 1] * xc1 + K[0, 2] * xc2
        h1 = K[1, 0] * xc0 + K[1, 1] * xc1 + K[1, 2] * xc2
        h2 = K[2, 0] * xc0 + K[2, 1] * xc1 + K[2, 2] * xc2
        if xc2 > 0.0 and h2 != 0.0:
            uv[i, 0] = h0 / h2
            uv[i, 1] = h1 / h2
        else:
            uv[i, 0] = np.nan
            uv[i, 1] = np.nan
    return uv, depth


@jit
def back_project_dir(u, v, krinv):
    """Unit direction of the ray through pixel (u, v), krinv = (K R)^-1."""
    d0 = krinv[0, 0] * u + krinv[0, 1] * v + krinv[0, 2]
    d1 = krinv[1, 0] * u + krinv[1, 1] * v + krinv[1, 2]
    d2 = krinv[2, 0] * u + krinv[2, 1] * v + krinv[2, 2]
    n = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    out = np.empty(3)
    out[0] = d0 / n
    out[1] = d1 / n
    out[2] = d2 / n
    return out


@jit
def point_ray_distance(p, origin, direction):
    """Distance from a 3D point to the ray origin + t*direction, t >= 0 not enforced."""
    w0 = p[0] - origin[0]
    w1 = p[1] - origin[1]
    w2 = p[2] - origin[2]
    t = w0 * direction[0] + w1 * direction[1] + w2 * direction[2]
    r0 = w0 - t * direction[0]
    r1 = w1 - t * direction[1]
    r2 = w2 - t * direction[2]
    return math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)


@jit
def point_line_distance(u, v, a, b, c):
    """Distance from pixel (u, v) to the line a*u + b*v + c = 0 with a^2 + b^2 = 1."""
    return abs(a * u + b * v + c)


@jit
def epipolar_pair_affinity(ua, va, ub, vb, f_ab, f_ba, alpha):
    """Symmetric epipolar affinity of two pixels in different cameras.

    1 at perfect correspondence, 0 when the mean point-to-line distance
    equals alpha, negative beyond. Pixels sitting exactly on an epipole
    produce no line and score a neutral 0.
    """
    la = f_ab[0, 0] * ua + f_ab[0, 1] * va + f_ab[0, 2]
    lb = f_ab[1, 0] * ua + f_ab[1, 1] * va + f_ab[1, 2]
    lc = f_ab[2, 0] * ua + f_ab[2, 1] * va + f_ab[2, 2]
    n1 = math.sqrt(la * la + lb * lb)
    ma = f_ba[0, 0] * ub + f_ba[0, 1] * vb + f_ba[0, 2]
    mb = f_ba[1, 0] * ub + f_ba[1, 1] * vb + f_ba[1, 2]
    mc = f_ba[2, 0] * ub + f_ba[2, 1] * vb + f_ba[2, 2]
    n2 = math.sqrt(ma * ma + mb * mb)
    if n1 < 1e-12 or n2 < 1e-12:
        return 0.0
    d1 = abs(la * ub + lb * vb + lc) / n1
    d2 = abs(ma * ua + mb * va + mc) / n2
    return 1.0 - (d1 + d2) / (2.0 * alpha)


@jit
def epipolar_pose_score(uv_a, valid_a, uv_b, valid_b, f_ab, f_ba, alpha):
    """Sum of per-joint epipolar affinities over mutually valid joints."""
    total = 0.0
    for n in range(uv_a.shape[0]):
        if valid_a[n] and valid_b[n]:
            total += epipolar_pair_affinity(
                uv_a[n, 0], uv_a[n, 1], uv_b[n, 0], uv_b[n, 1], f_ab, f_ba, alpha
            )
    return total


@jit
def score_pose_pairs(track_pts, track_valid, dts, K, R, o, poses_uv, poses_valid,
                     alpha_2d, lam, eps_count, part_aware):
    """Affinity matrix between tracked skeletons and one camera's 2D poses.

    track_pts: (T,N,3), dts: (T,) time since each track's last update,
    poses_uv: (P,N,2). Per-joint affinity decays with distance scaled by
    alpha_2d*dt and with exp(-lam*dt). part_aware True keeps the mean of
    strictly positive joints and zeroes the score when fewer than
    eps_count are positive; False means over all participating joints.
    """
    t_count = track_pts.shape[0]
    p_count = poses_uv.shape[0]
    n_joints = track_pts.shape[1]
    out = np.zeros((t_count, p_count))
    for ti in range(t_count):
        uv, depth = project_points(track_pts[ti], K, R, o)
        dt = dts[ti]
        decay = math.exp(-lam * dt)
        tol = alpha_2d * dt
        for pi in range(p_count):
            pos_sum = 0.0
            pos_cnt = 0
            all_sum = 0.0
            all_cnt = 0
            for n in range(n_joints):
                if not (track_valid[ti, n] and poses_valid[pi, n] and depth[n] > 0.0):
                    continue
                du = poses_uv[pi, n, 0] - uv[n, 0]
                dv = poses_uv[pi, n, 1] - uv[n, 1]
                a = (1.0 - math.sqrt(du * du + dv * dv) / tol) * decay
                all_sum += a
                all_cnt += 1
                if a > 0.0:
                    pos_sum += a
                    pos_cnt += 1
            if part_aware:
                if pos_cnt >= eps_count and pos_cnt > 0:
                    out[ti, pi] = pos_sum / pos_cnt
            else:
                if all_cnt > 0:
                    out[ti, pi] = all_sum / all_cnt
    return out


@jit
def joint_epipolar_matrix(uvs, cam_idx, f_table, alpha):
    """Pairwise epipolar affinities of one joint's observations, 1 on the diagonal."""
    m = uvs.shape[0]
    e = np.ones((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            a = epipolar_pair_affinity(
                uvs[i, 0], uvs[i, 1], uvs[j, 0], uvs[j, 1],
                f_table[cam_idx[i], cam_idx[j]], f_table[cam_idx[j], cam_idx[i]],
                alpha,
            )
            e[i, j] = a
            e[j, i] = a
    return e


@jit
def filter_tracked_mask(uvs, cam_idx, f_table, alpha, pred, origins, krinv_table):
    """Greedy removal of epipolar-inconsistent observations of one joint.

    While any surviving pair scores negative: with three or more alive,
    the member of the worst pair whose back-projected ray lies farther
    from the predicted 3D point is dropped; with exactly two alive the
    farther one is dropped. Returns the keep mask.
    """
    m = uvs.shape[0]
    e = joint_epipolar_matrix(uvs, cam_idx, f_table, alpha)
    alive = np.ones(m, np.bool_)
    while True:
        worst = 0.0
        wi = -1
        wj = -1
        count = 0
        for i in range(m):
            if alive[i]:
                count += 1
        for i in range(m):
            if not alive[i]:
                continue
            for j in range(i + 1, m):
                if alive[j] and e[i, j] < worst:
                    worst = e[i, j]
                    wi = i
                    wj = j
        if wi < 0 or count < 2:
            break
        ray_i = back_project_dir(uvs[wi, 0], uvs[wi, 1], krinv_table[cam_idx[wi]])
        ray_j = back_project_dir(uvs[wj, 0], uvs[wj, 1], krinv_table[cam_idx[wj]])
        di = point_ray_distance(pred, origins[cam_idx[wi]], ray_i)
        dj = point_ray_distance(pred, origins[cam_idx[wj]], ray_j)
        if di >= dj:
            alive[wi] = False
        else:
            alive[wj] = False
        if count == 2:
            break
    return alive


@jit
def filter_init_mask(uvs, cam_idx, f_table, alpha):
    """Epipolar consistency filter used when no 3D prediction exists yet.

    With three or more alive and any negative pair, the observation with
    the smallest affinity row sum is dropped; an inconsistent final pair
    is dropped entirely.
    """
    m = uvs.shape[0]
    e = joint_epipolar_matrix(uvs, cam_idx, f_table, alpha)
    alive = np.ones(m, np.bool_)
    count = m
    while count >= 2:
        any_neg = False
        for i in range(m):
            if not alive[i]:
                continue
            for j in range(i + 1, m):
                if alive[j] and e[i, j] < 0.0:
                    any_neg = True
                    break
            if any_neg:
                break
        if not any_neg:
            break
        if count == 2:
            for i in range(m):
                alive[i] = False
            count = 0
            break
        worst_sum = np.inf
        worst_i = -1
        for i in range(m):
            if not alive[i]:
                continue
            s = 0.0
            for j in range(m):
                if alive[j] and j != i:
                    s += e[i, j]
            if s < worst_sum:
                worst_sum = s
                worst_i = i
        alive[worst_i] = False
        count -= 1
    return alive


@jit
def svd_columns(a):
    """One-sided Jacobi SVD of a tall 4-column matrix.

    Rotates column pairs of a working copy until all columns are mutually
    orthogonal, accumulating the rotations in v. Returns (sigma (4,),
    v (4,4)) with unsorted singular values matching the columns of v.
    Deterministic fixed sweep order, no library calls, so both backends
    produce identical bits.
    """
    rows = a.shape[0]
    b = a.copy()
    v = np.eye(4)
    for _sweep in range(30):
        rotated = False
        for p in range(3):
            for q in range(p + 1, 4):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for k in range(rows):
                    bp = b[k, p]
                    bq = b[k, q]
                    app += bp * bp
                    aqq += bq * bq
                    apq += bp * bq
                if app * aqq == 0.0 or abs(apq) <= 1e-15 * math.sqrt(app * aqq):
                    continue
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                if s == 0.0:
                    continue
                rotated = True
                for k in range(rows):
                    bp = b[k, p]
                    bq = b[k, q]
                    b[k, p] = c * bp - s * bq
                    b[k, q] = s * bp + c * bq
                for k in range(4):
                    vp = v[k, p]
                    vq = v[k, q]
                    v[k, p] = c * vp - s * vq
                    v[k, q] = s * vp + c * vq
        if not rotated:
            break
    sigma = np.empty(4)
    for j in range(4):
        total = 0.0
        for k in range(rows):
            total += b[k, j] * b[k, j]
        sigma[j] = math.sqrt(total)
    return sigma, v


@jit
def triangulate_normalized(uvn, pmats, weights):
    """Weighted linear triangulation from conditioned pixels and camera matrices.

    uvn (M,2) are pixels mapped into [-1,1], pmats (M,3,4) the matching
    conditioned projection matrices. Returns (xyz, status).
    """
    m = uvn.shape[0]
    out = np.zeros(3)
    if m < 2:
        return out, 1
    a = np.empty((2 * m, 4))
    for i in range(m):
        w = weights[i]
        for k in range(4):
            a[2 * i, k] = w * (uvn[i, 0] * pmats[i, 2, k] - pmats[i, 0, k])
            a[2 * i + 1, k] = w * (uvn[i, 1] * pmats[i, 2, k] - pmats[i, 1, k])
    sigma, v = svd_columns(a)
    # descending order by insertion sort, smallest column is the solution
    s_sorted = np.empty(4)
    for j in range(4):
        s_sorted[j] = sigma[j]
    for j in range(1, 4):
        key = s_sorted[j]
        i = j - 1
        while i >= 0 and s_sorted[i] < key:
            s_sorted[i + 1] = s_sorted[i]
            i -= 1
        s_sorted[i + 1] = key
    lo = 0
    for j in range(1, 4):
        if sigma[j] < sigma[lo]:
            lo = j
    if s_sorted[0] <= 0.0 or s_sorted[2] <= 1e-10 * s_sorted[0]:
        return out, 2
    x0 = v[0, lo]
    x1 = v[1, lo]
    x2 = v[2, lo]
    x3 = v[3, lo]
    n = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    if abs(x3) <= 1e-12 * n:
        return out, 3
    out[0] = x0 / x3
    out[1] = x1 / x3
    out[2] = x2 / x3
    return out, 0


@jit
def reconstruct_joints(obs_uv, obs_valid, weights, pred, f_table, origins,
                       krinv_table, pn_table, su, sv, alpha_epi, use_filter):
    """Per-joint filtered triangulation of one track's recent observations.

    obs_uv (C,N,2) holds each camera's matched pose, obs_valid (C,N) marks
    usable joints (absent cameras all False), weights (C,) the per-camera
    staleness weights. Joints with fewer than two surviving views fall
    back to the prediction. Returns (joints (N,3), flags (N,)).
    """
    n_cams = obs_uv.shape[0]
    n_joints = obs_uv.shape[1]
    out = np.empty((n_joints, 3))
    flags = np.empty(n_joints, np.uint8)
    uvs = np.empty((n_cams, 2))
    cam_idx = np.empty(n_cams, np.int64)
    for n in range(n_joints):
        m = 0
        for c in range(n_cams):
            if obs_valid[c, n]:
                uvs[m, 0] = obs_uv[c, n, 0]
                uvs[m, 1] = obs_uv[c, n, 1]
                cam_idx[m] = c
                m += 1
        if m >= 2 and use_filter:
            keep = filter_tracked_mask(
                uvs[:m].copy(), cam_idx[:m], f_table, alpha_epi, pred[n],
                origins, krinv_table,
            )
            k = 0
            for i in range(m):
                if keep[i]:
                    uvs[k, 0] = uvs[i, 0]
                    uvs[k, 1] = uvs[i, 1]
                    cam_idx[k] = cam_idx[i]
                    k += 1
            m = k
        if m >= 2:
            uvn = np.empty((m, 2))
            pm = np.empty((m, 3, 4))
            w = np.empty(m)
            for i in range(m):
                c = cam_idx[i]
                uvn[i, 0] = uvs[i, 0] * su[c] - 1.0
                uvn[i, 1] = uvs[i, 1] * sv[c] - 1.0
                pm[i] = pn_table[c]
                w[i] = weights[c]
            xyz, status = triangulate_normalized(uvn, pm, w)
            if status == 0:
                out[n, 0] = xyz[0]
                out[n, 1] = xyz[1]
                out[n, 2] = xyz[2]
                flags[n] = FLAG_TRIANGULATED
                continue
        out[n, 0] = pred[n, 0]
        out[n, 1] = pred[n, 1]
        out[n, 2] = pred[n, 2]
        flags[n] = FLAG_PREDICTED
    return out, flags


@jit
def hungarian_min(cost):
    """Exact minimum-cost square assignment, returns the column of each row."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, np.int64)
    way = np.zeros(n + 1, np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    out = np.full(n, -1, np.int64)
    for j in range(1, n + 1):
        if p[j] != 0:
            out[p[j] - 1] = j - 1
    return out


@jit
def _matching_total(values, allowed, row_lo, col_ok, neg):
    """Best achievable affinity total over rows >= row_lo and permitted columns.

    Solved as a square assignment padded with zero-value dummy rows and
    columns so that leaving any row or column unmatched is always an
    option; forbidden cells cost neg.
    """
    n = values.shape[0]
    m = values.shape[1]
    na = n - row_lo
    mc = 0
    for j in range(m):
        if col_ok[j]:
            mc += 1
    if na <= 0 or mc == 0:
        return 0.0
    col_ids = np.empty(mc, np.int64)
    k = 0
    for j in range(m):
        if col_ok[j]:
            col_ids[k] = j
            k += 1
    size = na + mc
    cost = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            if i < na and j < mc:
                if allowed[row_lo + i, col_ids[j]]:
                    cost[i, j] = -values[row_lo + i, col_ids[j]]
                else:
                    cost[i, j] = -neg
            elif i < na:
                cost[i, j] = 0.0 if (j - mc) == i else -neg
            elif j < mc:
                cost[i, j] = 0.0 if (i - na) == j else -neg
            else:
                cost[i, j] = 0.0
    cols = hungarian_min(cost)
    total = 0.0
    for i in range(na):
        j = cols[i]
        if j < mc and allowed[row_lo + i, col_ids[j]]:
            total += values[row_lo + i, col_ids[j]]
    return total


@jit
def assignment_lex(values, allowed):
    """Maximum-total partial matching over permitted cells, ties broken
    toward the lexicographically smallest (row, col) pair sequence.

    Returns chosen column per row, -1 for unmatched. Totals are compared
    with a scale-relative tolerance, so value gaps far below 1e-9 of the
    matrix magnitude may tie.
    """
    n = values.shape[0]
    m = values.shape[1]
    chosen = np.full(n, -1, np.int64)
    if n == 0 or m == 0:
        return chosen
    scale = 1.0
    for i in range(n):
        for j in range(m):
            v = abs(values[i, j])
            if np.isfinite(v):
                scale += v
    neg = -scale
    tol = 1e-9 * scale
    col_ok = np.ones(m, np.bool_)
    target = _matching_total(values, allowed, 0, col_ok, neg)
    chosen_sum = 0.0
    row_lo = 0
    while abs(chosen_sum - target) > tol:
        committed = False
        for r in range(row_lo, n):
            for c in range(m):
                if not col_ok[c] or not allowed[r, c]:
                    continue
                col_ok[c] = False
                sub = _matching_total(values, allowed, r + 1, col_ok, neg)
                if abs(chosen_sum + values[r, c] + sub - target) <= tol:
                    chosen[r] = c
                    chosen_sum += values[r, c]
                    row_lo = r + 1
                    committed = True
                    break
                col_ok[c] = True
            if committed:
                break
        if not committed:
            break
    return chosen


@jit
def causal_gaussian_smooth(times, joints, sigma_frames, fps, t_now):
    """Weighted mean of a trailing window of skeletons.

    times (B,), joints (B,N,3) ordered oldest to newest. Gaussian weights
    over the age in frames, renormalized over whatever history exists.
    """
    b = times.shape[0]
    n = joints.shape[1]
    out = np.zeros((n, 3))
    wsum = 0.0
    for i in range(b):
        age = (t_now - times[i]) * fps
        # explicit product, x ** 2 rounds differently under the two backends
        z = age / sigma_frames
        w = math.exp(-0.5 * z * z)
        wsum += w
        for k in range(n):
            out[k, 0] += w * joints[i, k, 0]
            out[k, 1] += w * joints[i, k, 1]
            out[k, 2] += w * joints[i, k, 2]
    if wsum > 0.0:
        for k in range(n):
            out[k, 0] /= wsum
            out[k, 1] /= wsum
            out[k, 2] /= wsum
    return out


def warm_up():
    """Trigger compilation of every kernel with tiny inputs."""
    k = np.array([[100.0, 0.0, 32.0], [0.0, 100.0, 24.0], [0.0, 0.0, 1.0]])
    r = np.eye(3)
    o = np.zeros(3)
    pts = np.array([[0.1, -0.1, 2.0], [0.0, 0.2, 3.0]])
    project_points(pts, k, r, o)
    krinv = np.linalg.inv(k @ r)
    back_project_dir(30.0, 20.0, krinv)
    point_ray_distance(np.array([1.0, 2.0, 3.0]), o, np.array([0.0, 0.0, 1.0]))
    point_line_distance(1.0, 2.0, 1.0, 0.0, -3.0)
    f = np.eye(3)
    epipolar_pair_affinity(1.0, 2.0, 3.0, 4.0, f, f, 10.0)
    uv = np.array([[1.0, 2.0], [3.0, 4.0]])
    valid = np.ones(2, np.bool_)
    epipolar_pose_score(uv, valid, uv, valid, f, f, 10.0)
    track_pts = pts.reshape(1, 2, 3)
    score_pose_pairs(track_pts, np.ones((1, 2), np.bool_), np.array([0.04]),
                     k, r, o, uv.reshape(1, 2, 2), valid.reshape(1, 2),
                     60.0, 3.0, 1, True)
    score_pose_pairs(track_pts, np.ones((1, 2), np.bool_), np.array([0.04]),
                     k, r, o, uv.reshape(1, 2, 2), valid.reshape(1, 2),
                     60.0, 3.0, 1, False)
    f_table = np.stack((np.stack((f, f)), np.stack((f, f))))
    cam_idx = np.array([0, 1], np.int64)
    joint_epipolar_matrix(uv, cam_idx, f_table, 10.0)
    origins = np.zeros((2, 3))
    origins[1, 0] = 1.0
    krinv_table = np.stack((krinv, krinv))
    filter_tracked_mask(uv, cam_idx, f_table, 10.0, np.array([0.0, 0.0, 2.0]),
                        origins, krinv_table)
    filter_init_mask(uv, cam_idx, f_table, 10.0)
    pmat = np.hstack((k, np.zeros((3, 1))))
    pmats = np.stack((pmat, pmat + 1.0))
    triangulate_normalized(uv * 0.01, pmats, np.ones(2))
    pn_table = np.stack((pmat, pmat))
    su = np.full(2, 2.0 / 64.0)
    sv = np.full(2, 2.0 / 48.0)
    obs_uv = np.zeros((2, 2, 2))
    obs_uv[0] = uv
    obs_uv[1] = uv + 1.0
    obs_valid = np.ones((2, 2), np.bool_)
    reconstruct_joints(obs_uv, obs_valid, np.ones(2), np.zeros((2, 3)),
                       f_table, origins, krinv_table, pn_table, su, sv,
                       10.0, True)
    hungarian_min(np.array([[1.0, 2.0], [2.0, 1.0]]))
    vals = np.array([[0.5, 0.2], [0.1, 0.4]])
    assignment_lex(vals, vals > 0.0)
    causal_gaussian_smooth(np.array([0.0, 0.04]), np.zeros((2, 2, 3)), 1.0,
                           25.0, 0.08)
