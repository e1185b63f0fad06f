"""Pure-Python marching kernel; reference for the compiled one.

Both kernels perform the same floating point operations in the same order,
so they return bit-identical fields.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

FAR, TRIAL, ACCEPTED = 0, 1, 2


def local_update(T, i, coords, shape, strides, spacing):
    """First-order upwind value at flat node ``i`` from its current neighbours."""
    cand = []
    for ax in range(len(shape)):
        a = math.inf
        c = coords[ax]
        if c > 0:
            a = T[i - strides[ax]]
        if c + 1 < shape[ax]:
            b = T[i + strides[ax]]
            if b < a:
                a = b
        if a < math.inf:
            cand.append((a, ax))
    cand.sort()
    t = math.inf
    sa = sb = sc = 0.0
    for a, ax in cand:
        if t <= a:
            break
        h = spacing[ax]
        w = 1.0 / (h * h)
        sa += w
        sb += a * w
        sc += a * a * w
        disc = sb * sb - sa * (sc - 1.0)
        if disc < 0.0:
            break
        t = (sb + math.sqrt(disc)) / sa
    return t


def march(values, fixed, shape, spacing):
    """Fast marching over a flat lattice.

    ``values`` holds source values at ``fixed`` nodes and ``inf`` elsewhere.
    Returns the solved values and the flat indices in acceptance order.
    """
    shape = [int(s) for s in shape]
    spacing = [float(h) for h in spacing]
    d = len(shape)
    strides = [1] * d
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * shape[ax + 1]
    T = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    fixed = [bool(f) for f in np.asarray(fixed).ravel()]
    N = len(T)
    status = [FAR] * N
    heap = []
    for i in range(N):
        if fixed[i]:
            status[i] = TRIAL
            heap.append((T[i], i))
    heapq.heapify(heap)
    # accepted values only are visible to updates
    Tacc = [math.inf] * N
    order = []
    while heap:
        v, i = heapq.heappop(heap)
        if status[i] == ACCEPTED or v != T[i]:
            continue
        status[i] = ACCEPTED
        Tacc[i] = v
        order.append(i)
        rem = i
        coords = [0] * d
        for ax in range(d):
            coords[ax], rem = divmod(rem, strides[ax])
        for ax in range(d):
            for step in (-1, 1):
                c = coords[ax] + step
                if c < 0 or c >= shape[ax]:
                    continue
                j = i + step * strides[ax]
                if status[j] == ACCEPTED or fixed[j]:
                    continue
                jc = list(coords)
                jc[ax] = c
                t = local_update(Tacc, j, jc, shape, strides, spacing)
                if t < T[j]:
                    T[j] = t
                    status[j] = TRIAL
                    heapq.heappush(heap, (t, j))
    return np.array(T).reshape(shape), np.array(order, dtype=np.int64)
