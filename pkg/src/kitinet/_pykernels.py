"""Pure-Python fallback for the hot DSMC collision loop.

Mirrors ``_ckernels.dsmc_collide`` operation for operation (same pair
selection, same arithmetic order), so both backends agree bit for bit.
The collision operator's Python path lives in :mod:`kitinet.kernel`.
"""
import math

import numpy as np


def dsmc_collide(vel, order, cell_start, cell_count, cand_start, m_cand,
                 uniforms, unit_dirs, vr_max):
    """Run the no-time-counter candidate loop over every cell, in place.

    ``vel`` and ``vr_max`` are updated in place.  ``uniforms[c]`` holds
    ``(pick_i, pick_j, accept)`` for candidate ``c``; ``unit_dirs[c]`` its
    post-collision relative-velocity direction.  Returns accepted counts per
    cell.
    """
    n_cells = cell_start.shape[0]
    dim = vel.shape[1]
    accepted = np.zeros(n_cells, dtype=np.int64)
    for cell in range(n_cells):
        n = int(cell_count[cell])
        m = int(m_cand[cell])
        if n < 2 or m == 0:
            continue
        first = int(cell_start[cell])
        base = int(cand_start[cell])
        vmax = float(vr_max[cell])
        hits = 0
        for c in range(base, base + m):
            a = int(uniforms[c, 0] * n)
            if a >= n:
                a = n - 1
            b = int(uniforms[c, 1] * (n - 1))
            if b >= n - 1:
                b = n - 2
            if b >= a:
                b += 1
            i = int(order[first + a])
            j = int(order[first + b])
            vi = vel[i]
            vj = vel[j]
            s = 0.0
            for d in range(dim):
                diff = float(vi[d]) - float(vj[d])
                s += diff * diff
            vr = math.sqrt(s)
            if vr > vmax:
                vmax = vr
            if vmax == 0.0 or not vr / vmax > uniforms[c, 2]:
                continue
            half = 0.5 * vr
            for d in range(dim):
                cm = 0.5 * (float(vi[d]) + float(vj[d]))
                step = half * float(unit_dirs[c, d])
                vel[i, d] = cm + step
                vel[j, d] = cm - step
            hits += 1
        vr_max[cell] = vmax
        accepted[cell] = hits
    return accepted
