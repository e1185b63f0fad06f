# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled marching kernel; mirrors ``_march.py`` operation for operation."""

import numpy as np

from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, realloc, free

cdef enum:
    FAR = 0
    TRIAL = 1
    ACCEPTED = 2

cdef struct Entry:
    double v
    Py_ssize_t i


cdef inline bint _less(Entry a, Entry b) nogil:
    return a.v < b.v or (a.v == b.v and a.i < b.i)


cdef struct Heap:
    Entry* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _push(Heap* h, double v, Py_ssize_t i) except -1 nogil:
    cdef Entry* grown
    cdef Py_ssize_t k, parent
    cdef Entry e
    if h.size == h.cap:
        h.cap = h.cap * 2 + 16
        grown = <Entry*> realloc(h.data, h.cap * sizeof(Entry))
        if grown == NULL:
            with gil:
                raise MemoryError()
        h.data = grown
    e.v = v
    e.i = i
    k = h.size
    h.size += 1
    while k > 0:
        parent = (k - 1) >> 1
        if _less(e, h.data[parent]):
            h.data[k] = h.data[parent]
            k = parent
        else:
            break
    h.data[k] = e
    return 0


cdef Entry _pop(Heap* h) nogil:
    cdef Entry top = h.data[0]
    cdef Entry last
    cdef Py_ssize_t k = 0, child
    h.size -= 1
    if h.size > 0:
        last = h.data[h.size]
        while True:
            child = 2 * k + 1
            if child >= h.size:
                break
            if child + 1 < h.size and _less(h.data[child + 1], h.data[child]):
                child += 1
            if _less(h.data[child], last):
                h.data[k] = h.data[child]
                k = child
            else:
                break
        h.data[k] = last
    return top


cdef double _update(double* T, Py_ssize_t i, Py_ssize_t* coords, Py_ssize_t* shape,
                    Py_ssize_t* strides, double* spacing, int d,
                    double* ca, int* cax) nogil:
    cdef int ax, m, n = 0, p
    cdef double a, b, t, h, w, sa, sb, sc, disc, ta
    cdef int tx
    for ax in range(d):
        a = INFINITY
        if coords[ax] > 0:
            a = T[i - strides[ax]]
        if coords[ax] + 1 < shape[ax]:
            b = T[i + strides[ax]]
            if b < a:
                a = b
        if a < INFINITY:
            # insertion sort on (value, axis)
            p = n
            while p > 0 and (ca[p - 1] > a or (ca[p - 1] == a and cax[p - 1] > ax)):
                ca[p] = ca[p - 1]
                cax[p] = cax[p - 1]
                p -= 1
            ca[p] = a
            cax[p] = ax
            n += 1
    t = INFINITY
    sa = 0.0
    sb = 0.0
    sc = 0.0
    for m in range(n):
        a = ca[m]
        if t <= a:
            break
        h = spacing[cax[m]]
        w = 1.0 / (h * h)
        sa += w
        sb += a * w
        sc += a * a * w
        disc = sb * sb - sa * (sc - 1.0)
        if disc < 0.0:
            break
        t = (sb + sqrt(disc)) / sa
    return t


def march(values, fixed, shape, spacing):
    """Fast marching over a flat lattice; see ``_march.march``."""
    cdef int d = len(shape)
    cdef double[::1] T = np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel()).copy()
    cdef unsigned char[::1] fx = np.ascontiguousarray(np.asarray(fixed, dtype=np.uint8).ravel())
    cdef Py_ssize_t N = T.shape[0]
    cdef double[::1] Tacc = np.full(N, np.inf)
    cdef unsigned char[::1] status = np.zeros(N, dtype=np.uint8)
    cdef Py_ssize_t[::1] shp = np.asarray(shape, dtype=np.intp)
    cdef double[::1] sp = np.asarray(spacing, dtype=np.float64)
    cdef Py_ssize_t[::1] strides = np.ones(d, dtype=np.intp)
    cdef Py_ssize_t[::1] coords = np.zeros(d, dtype=np.intp)
    cdef Py_ssize_t[::1] jc = np.zeros(d, dtype=np.intp)
    cdef double[::1] ca = np.zeros(d, dtype=np.float64)
    cdef int[::1] cax = np.zeros(d, dtype=np.intc)
    order_arr = np.empty(N, dtype=np.int64)
    cdef long long[::1] order = order_arr
    cdef Py_ssize_t norder = 0
    cdef Py_ssize_t i, j, rem, c
    cdef int ax, step, k
    cdef double t
    cdef Entry e
    cdef Heap heap
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * shp[ax + 1]
    heap.size = 0
    heap.cap = 1024
    heap.data = <Entry*> malloc(heap.cap * sizeof(Entry))
    if heap.data == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(N):
                if fx[i]:
                    status[i] = TRIAL
                    _push(&heap, T[i], i)
            while heap.size > 0:
                e = _pop(&heap)
                i = e.i
                if status[i] == ACCEPTED or e.v != T[i]:
                    continue
                status[i] = ACCEPTED
                Tacc[i] = e.v
                order[norder] = i
                norder += 1
                rem = i
                for ax in range(d):
                    coords[ax] = rem // strides[ax]
                    rem = rem - coords[ax] * strides[ax]
                for ax in range(d):
                    for step in range(-1, 2, 2):
                        c = coords[ax] + step
                        if c < 0 or c >= shp[ax]:
                            continue
                        j = i + step * strides[ax]
                        if status[j] == ACCEPTED or fx[j]:
                            continue
                        for k in range(d):
                            jc[k] = coords[k]
                        jc[ax] = c
                        t = _update(&Tacc[0], j, &jc[0], &shp[0], &strides[0], &sp[0], d, &ca[0], &cax[0])
                        if t < T[j]:
                            T[j] = t
                            status[j] = TRIAL
                            _push(&heap, t, j)
    finally:
        free(heap.data)
    return np.asarray(T).reshape(tuple(shape)), order_arr[:norder].copy()
