"""Numba kernels for the CPU raycaster.

Pixels are independent, so the march runs in parallel without any cross-thread
reduction; results are bit-stable regardless of thread count. All blending
arithmetic is float64 so the pure-Python blend helpers agree with the kernel.
"""
from __future__ import annotations

import math

from numba import njit, prange


@njit(cache=True)
def _axis_setup(g: float, n: int):
    """Clamp-to-edge trilinear setup along one axis: lower index and fraction."""
    if n == 1:
        return 0, 0, 0.0
    i0 = int(math.floor(g))
    f = g - i0
    if i0 < 0:
        i0 = 0
        f = 0.0
    elif i0 > n - 2:
        i0 = n - 2
        f = 1.0
    return i0, i0 + 1, f


@njit(cache=True)
def _sample_scalar(vol, nx, ny, nz, gx, gy, gz):
    x0, x1, fx = _axis_setup(gx, nx)
    y0, y1, fy = _axis_setup(gy, ny)
    z0, z1, fz = _axis_setup(gz, nz)
    c00 = vol[x0, y0, z0] * (1.0 - fx) + vol[x1, y0, z0] * fx
    c10 = vol[x0, y1, z0] * (1.0 - fx) + vol[x1, y1, z0] * fx
    c01 = vol[x0, y0, z1] * (1.0 - fx) + vol[x1, y0, z1] * fx
    c11 = vol[x0, y1, z1] * (1.0 - fx) + vol[x1, y1, z1] * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


@njit(cache=True)
def _sample_mask(mask, nx, ny, nz, gx, gy, gz):
    x0, x1, fx = _axis_setup(gx, nx)
    y0, y1, fy = _axis_setup(gy, ny)
    z0, z1, fz = _axis_setup(gz, nz)
    u = 0.0
    v = 0.0
    for c in range(2):
        c00 = mask[x0, y0, z0, c] * (1.0 - fx) + mask[x1, y0, z0, c] * fx
        c10 = mask[x0, y1, z0, c] * (1.0 - fx) + mask[x1, y1, z0, c] * fx
        c01 = mask[x0, y0, z1, c] * (1.0 - fx) + mask[x1, y0, z1, c] * fx
        c11 = mask[x0, y1, z1, c] * (1.0 - fx) + mask[x1, y1, z1, c] * fx
        c0 = c00 * (1.0 - fy) + c10 * fy
        c1 = c01 * (1.0 - fy) + c11 * fy
        val = (c0 * (1.0 - fz) + c1 * fz) / 255.0
        if c == 0:
            u = val
        else:
            v = val
    return u, v


@njit(cache=True)
def _tf2d_eval(colors, n_groups, u, v, dead_zone):
    """Analytic circular transfer function; returns (r, g, b, a)."""
    dx = u - 0.5
    dy = v - 0.5
    r = math.hypot(dx, dy)
    if n_groups == 0 or r < dead_zone:
        return 0.0, 0.0, 0.0, 0.0
    theta = math.atan2(dy, dx)
    k = 1 + int(round(theta * n_groups / (2.0 * math.pi))) % n_groups
    ramp = 2.0 * r
    if ramp > 1.0:
        ramp = 1.0
    return colors[k, 0], colors[k, 1], colors[k, 2], colors[k, 3] * ramp


@njit(cache=True)
def _raw_tf_eval(xs, rgba, value):
    """Piecewise-linear RGBA over [0, 1]; control points ascending in x."""
    if value <= xs[0]:
        return rgba[0, 0], rgba[0, 1], rgba[0, 2], rgba[0, 3]
    n = xs.shape[0]
    if value >= xs[n - 1]:
        return rgba[n - 1, 0], rgba[n - 1, 1], rgba[n - 1, 2], rgba[n - 1, 3]
    j = 0
    for i in range(n - 1):
        if value < xs[i + 1]:
            j = i
            break
    span = xs[j + 1] - xs[j]
    t = (value - xs[j]) / span if span > 0 else 0.0
    return (
        rgba[j, 0] * (1.0 - t) + rgba[j + 1, 0] * t,
        rgba[j, 1] * (1.0 - t) + rgba[j + 1, 1] * t,
        rgba[j, 2] * (1.0 - t) + rgba[j + 1, 2] * t,
        rgba[j, 3] * (1.0 - t) + rgba[j + 1, 3] * t,
    )


@njit(cache=True)
def _nearest_index(g: float, n: int) -> int:
    i = int(round(g))
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


@njit(cache=True, parallel=True)
def march(
    raw,  # float32 (nx, ny, nz)
    mask,  # uint8 (nx, ny, nz, 2)
    seg,  # int32 (nx, ny, nz)
    visible,  # uint8 (max_id + 1)
    group_of,  # int32 (max_id + 1)
    colors,  # float64 (n_groups + 1, 4)
    n_groups,
    dead_zone,
    tf_xs,  # float64 (K,)
    tf_rgba,  # float64 (K, 4)
    w_color,
    w_transfer,
    w_alpha,
    eye,  # float64 (3,)
    right,  # float64 (3,)
    up,  # float64 (3,)
    fwd,  # float64 (3,)
    half_w,
    half_h,
    sx,
    sy,
    sz,
    step,
    bg,  # float64 (4,)
    eps_id,
    early_term,
    grads,  # float32 (nx, ny, nz, 3); (1, 1, 1, 3) dummy when unused
    use_shading,
    shade_ambient,
    raw_only,
    id_only,
    out_color,  # float32 (H, W, 4)
    out_id,  # int32 (H, W)
    out_group,  # int32 (H, W)
):
    nx, ny, nz = raw.shape
    height, width = out_id.shape
    box_x = nx * sx
    box_y = ny * sy
    box_z = nz * sz

    for pix in prange(height * width):
        py = pix // width
        px = pix % width
        ndc_x = (px + 0.5) / width * 2.0 - 1.0
        ndc_y = 1.0 - (py + 0.5) / height * 2.0
        dx = fwd[0] + ndc_x * half_w * right[0] + ndc_y * half_h * up[0]
        dy = fwd[1] + ndc_x * half_w * right[1] + ndc_y * half_h * up[1]
        dz = fwd[2] + ndc_x * half_w * right[2] + ndc_y * half_h * up[2]
        dlen = math.sqrt(dx * dx + dy * dy + dz * dz)
        dx /= dlen
        dy /= dlen
        dz /= dlen

        # Slab intersection with the volume box.
        t0 = 0.0
        t1 = 1.0e300
        hit = True
        for axis in range(3):
            if axis == 0:
                o, d, lim = eye[0], dx, box_x
            elif axis == 1:
                o, d, lim = eye[1], dy, box_y
            else:
                o, d, lim = eye[2], dz, box_z
            if abs(d) < 1.0e-12:
                if o < 0.0 or o > lim:
                    hit = False
                    break
            else:
                ta = (0.0 - o) / d
                tb = (lim - o) / d
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
        if not hit or t1 <= t0:
            out_color[py, px, 0] = bg[0]
            out_color[py, px, 1] = bg[1]
            out_color[py, px, 2] = bg[2]
            out_color[py, px, 3] = bg[3]
            out_id[py, px] = 0
            out_group[py, px] = 0
            continue

        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        acc_a = 0.0
        found_id = 0
        found_group = 0

        n_steps = int((t1 - t0) / step) + 1
        for j in range(n_steps):
            t = t0 + (j + 0.5) * step
            if t >= t1:
                break
            p0 = eye[0] + t * dx
            p1 = eye[1] + t * dy
            p2 = eye[2] + t * dz
            gx = p0 / sx - 0.5
            gy = p1 / sy - 0.5
            gz = p2 / sz - 0.5

            v_raw = _sample_scalar(raw, nx, ny, nz, gx, gy, gz)
            cr_r, cr_g, cr_b, a_raw = _raw_tf_eval(tf_xs, tf_rgba, v_raw)

            if raw_only:
                cf_r = cr_r
                cf_g = cr_g
                cf_b = cr_b
                a_final = a_raw
            else:
                mu, mv = _sample_mask(mask, nx, ny, nz, gx, gy, gz)
                cm_r, cm_g, cm_b, a_mask = _tf2d_eval(colors, n_groups, mu, mv, dead_zone)
                cf_r = (1.0 - w_color) * cm_r + w_color * cr_r
                cf_g = (1.0 - w_color) * cm_g + w_color * cr_g
                cf_b = (1.0 - w_color) * cm_b + w_color * cr_b
                a_transfer = (1.0 - w_transfer) * a_mask + w_transfer * a_mask * a_raw
                a_final = (1.0 - w_alpha) * a_transfer + w_alpha * a_raw

            if found_id == 0 and a_final >= eps_id:
                ix = _nearest_index(gx, nx)
                iy = _nearest_index(gy, ny)
                iz = _nearest_index(gz, nz)
                iid = seg[ix, iy, iz]
                if iid > 0 and visible[iid] == 1:
                    found_id = iid
                    found_group = group_of[iid]

            if not id_only:
                if use_shading and a_final > 0.0:
                    ix = _nearest_index(gx, nx)
                    iy = _nearest_index(gy, ny)
                    iz = _nearest_index(gz, nz)
                    gvx = grads[ix, iy, iz, 0]
                    gvy = grads[ix, iy, iz, 1]
                    gvz = grads[ix, iy, iz, 2]
                    gmag = math.sqrt(gvx * gvx + gvy * gvy + gvz * gvz)
                    if gmag > 1.0e-12:
                        lx = eye[0] - p0
                        ly = eye[1] - p1
                        lz = eye[2] - p2
                        lmag = math.sqrt(lx * lx + ly * ly + lz * lz)
                        shade = shade_ambient
                        if lmag > 0.0:
                            d_nl = (gvx * lx + gvy * ly + gvz * lz) / (gmag * lmag)
                            if d_nl > shade:
                                shade = d_nl
                        cf_r *= shade
                        cf_g *= shade
                        cf_b *= shade
                w = (1.0 - acc_a) * a_final
                acc_r += w * cf_r
                acc_g += w * cf_g
                acc_b += w * cf_b
                acc_a += w
            else:
                acc_a += (1.0 - acc_a) * a_final

            if acc_a >= early_term:
                break

        out_color[py, px, 0] = acc_r + (1.0 - acc_a) * bg[0]
        out_color[py, px, 1] = acc_g + (1.0 - acc_a) * bg[1]
        out_color[py, px, 2] = acc_b + (1.0 - acc_a) * bg[2]
        out_color[py, px, 3] = acc_a + (1.0 - acc_a) * bg[3]
        out_id[py, px] = found_id
        out_group[py, px] = found_group
