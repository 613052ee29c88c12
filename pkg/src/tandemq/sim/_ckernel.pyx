# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for the tandem network.

Same algorithm and float expressions as ``_pykernel.PyKernel``. The pending
event set is tiny (one arrival plus at most sum(c) completions), so the
next event is found by a linear scan under the key
(time, kind, stage, job_id) instead of a heap.
"""

from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy

import numpy as np

cdef double INF = float("inf")


cdef void* _grow(void* p, size_t nbytes) except NULL:
    cdef void* q = realloc(p, nbytes)
    if q == NULL:
        raise MemoryError()
    return q


cdef class CKernel:
    cdef int N, S
    cdef int* c
    cdef int* off
    cdef int* srv_stage
    cdef long long* srv_slot
    cdef double* srv_rem
    cdef double* srv_tupd
    cdef double* srv_done
    cdef double* rates_
    cdef long long* count
    cdef double* area_
    cdef double* empty_

    cdef long long cap
    cdef long long nfree
    cdef long long* pool_id
    cdef double* pool_arr
    cdef double* pool_start
    cdef double* pool_dep
    cdef double* pool_work
    cdef long long* free_stack

    cdef long long** wq
    cdef long long* wq_head
    cdef long long* wq_len
    cdef long long* wq_cap

    cdef double** vbuf
    cdef long long* vlen
    cdef long long* vpos
    cdef object streams

    cdef long long ocap
    cdef long long olen
    cdef long long* out_id
    cdef double* out_arr
    cdef double* out_start
    cdef double* out_dep
    cdef double* out_work

    cdef public double clock
    cdef public long long n_arrivals
    cdef public long long n_departures
    cdef long long next_id
    cdef double next_arrival

    backend = "cython"

    def __cinit__(self, servers, arrival_stream, work_streams, rates):
        cdef int s, k, i
        self.N = len(servers)
        self.c = <int*>malloc(self.N * sizeof(int))
        self.off = <int*>malloc(self.N * sizeof(int))
        self.S = 0
        for s in range(self.N):
            self.c[s] = int(servers[s])
            self.off[s] = self.S
            self.S += self.c[s]
        self.srv_stage = <int*>malloc(self.S * sizeof(int))
        self.srv_slot = <long long*>malloc(self.S * sizeof(long long))
        self.srv_rem = <double*>malloc(self.S * sizeof(double))
        self.srv_tupd = <double*>malloc(self.S * sizeof(double))
        self.srv_done = <double*>malloc(self.S * sizeof(double))
        for s in range(self.N):
            for k in range(self.off[s], self.off[s] + self.c[s]):
                self.srv_stage[k] = s
                self.srv_slot[k] = -1
                self.srv_rem[k] = 0.0
                self.srv_tupd[k] = 0.0
                self.srv_done[k] = INF
        self.rates_ = <double*>malloc(self.N * sizeof(double))
        self.count = <long long*>malloc(self.N * sizeof(long long))
        self.area_ = <double*>malloc(self.N * sizeof(double))
        self.empty_ = <double*>malloc(self.N * sizeof(double))
        for s in range(self.N):
            self.rates_[s] = float(rates[s])
            self.count[s] = 0
            self.area_[s] = 0.0
            self.empty_[s] = 0.0

        self.cap = 0
        self.nfree = 0
        self.pool_id = NULL
        self.pool_arr = NULL
        self.pool_start = NULL
        self.pool_dep = NULL
        self.pool_work = NULL
        self.free_stack = NULL
        self._grow_pool()

        self.wq = <long long**>malloc(self.N * sizeof(long long*))
        self.wq_head = <long long*>malloc(self.N * sizeof(long long))
        self.wq_len = <long long*>malloc(self.N * sizeof(long long))
        self.wq_cap = <long long*>malloc(self.N * sizeof(long long))
        for s in range(self.N):
            self.wq_cap[s] = 64
            self.wq[s] = <long long*>malloc(64 * sizeof(long long))
            self.wq_head[s] = 0
            self.wq_len[s] = 0

        self.streams = [arrival_stream] + list(work_streams)
        self.vbuf = <double**>malloc((self.N + 1) * sizeof(double*))
        self.vlen = <long long*>malloc((self.N + 1) * sizeof(long long))
        self.vpos = <long long*>malloc((self.N + 1) * sizeof(long long))
        for i in range(self.N + 1):
            self.vbuf[i] = NULL
            self.vlen[i] = 0
            self.vpos[i] = 0
            self._refill(i)

        self.ocap = 0
        self.olen = 0
        self.out_id = NULL
        self.out_arr = NULL
        self.out_start = NULL
        self.out_dep = NULL
        self.out_work = NULL

        self.clock = 0.0
        self.n_arrivals = 0
        self.n_departures = 0
        self.next_id = 0
        self.next_arrival = self._draw(0)

    def __dealloc__(self):
        cdef int s, i
        if self.wq != NULL:
            for s in range(self.N):
                free(self.wq[s])
        if self.vbuf != NULL:
            for i in range(self.N + 1):
                free(self.vbuf[i])
        free(self.c); free(self.off); free(self.srv_stage); free(self.srv_slot)
        free(self.srv_rem); free(self.srv_tupd); free(self.srv_done)
        free(self.rates_); free(self.count); free(self.area_); free(self.empty_)
        free(self.pool_id); free(self.pool_arr); free(self.pool_start)
        free(self.pool_dep); free(self.pool_work); free(self.free_stack)
        free(self.wq); free(self.wq_head); free(self.wq_len); free(self.wq_cap)
        free(self.vbuf); free(self.vlen); free(self.vpos)
        free(self.out_id); free(self.out_arr); free(self.out_start)
        free(self.out_dep); free(self.out_work)

    # -- storage ----------------------------------------------------------
    cdef int _refill(self, int i) except -1:
        blk = np.ascontiguousarray(self.streams[i].next_block(), dtype=np.float64)
        cdef double[::1] mv = blk
        cdef long long n = mv.shape[0]
        if n == 0:
            raise ValueError("variate stream returned an empty block")
        self.vbuf[i] = <double*>_grow(self.vbuf[i], n * sizeof(double))
        memcpy(self.vbuf[i], &mv[0], n * sizeof(double))
        self.vlen[i] = n
        self.vpos[i] = 0
        return 0

    cdef inline double _draw(self, int i) except? -1.0:
        if self.vpos[i] >= self.vlen[i]:
            self._refill(i)
        cdef double x = self.vbuf[i][self.vpos[i]]
        self.vpos[i] += 1
        return x

    cdef int _grow_pool(self) except -1:
        cdef long long old = self.cap
        cdef long long new = 256 if old == 0 else 2 * old
        cdef long long j
        cdef size_t N = self.N
        self.pool_id = <long long*>_grow(self.pool_id, new * sizeof(long long))
        self.pool_arr = <double*>_grow(self.pool_arr, new * sizeof(double))
        self.pool_start = <double*>_grow(self.pool_start, new * N * sizeof(double))
        self.pool_dep = <double*>_grow(self.pool_dep, new * N * sizeof(double))
        self.pool_work = <double*>_grow(self.pool_work, new * N * sizeof(double))
        self.free_stack = <long long*>_grow(self.free_stack, new * sizeof(long long))
        for j in range(new - 1, old - 1, -1):
            self.pool_id[j] = -1
            self.free_stack[self.nfree] = j
            self.nfree += 1
        self.cap = new
        return 0

    cdef long long _alloc(self) except -1:
        if self.nfree == 0:
            self._grow_pool()
        self.nfree -= 1
        return self.free_stack[self.nfree]

    cdef inline void _release(self, long long slot):
        self.pool_id[slot] = -1
        self.free_stack[self.nfree] = slot
        self.nfree += 1

    cdef int _wq_push(self, int s, long long slot) except -1:
        cdef long long cap = self.wq_cap[s]
        cdef long long j
        cdef long long* fresh
        if self.wq_len[s] == cap:
            fresh = <long long*>malloc(2 * cap * sizeof(long long))
            if fresh == NULL:
                raise MemoryError()
            for j in range(cap):
                fresh[j] = self.wq[s][(self.wq_head[s] + j) % cap]
            free(self.wq[s])
            self.wq[s] = fresh
            self.wq_head[s] = 0
            self.wq_cap[s] = 2 * cap
            cap = 2 * cap
        self.wq[s][(self.wq_head[s] + self.wq_len[s]) % cap] = slot
        self.wq_len[s] += 1
        return 0

    cdef inline long long _wq_pop(self, int s):
        cdef long long slot = self.wq[s][self.wq_head[s]]
        self.wq_head[s] = (self.wq_head[s] + 1) % self.wq_cap[s]
        self.wq_len[s] -= 1
        return slot

    cdef int _emit(self, long long slot) except -1:
        cdef long long new
        cdef size_t N = self.N
        if self.olen == self.ocap:
            new = 1024 if self.ocap == 0 else 2 * self.ocap
            self.out_id = <long long*>_grow(self.out_id, new * sizeof(long long))
            self.out_arr = <double*>_grow(self.out_arr, new * sizeof(double))
            self.out_start = <double*>_grow(self.out_start, new * N * sizeof(double))
            self.out_dep = <double*>_grow(self.out_dep, new * N * sizeof(double))
            self.out_work = <double*>_grow(self.out_work, new * N * sizeof(double))
            self.ocap = new
        self.out_id[self.olen] = self.pool_id[slot]
        self.out_arr[self.olen] = self.pool_arr[slot]
        memcpy(&self.out_start[self.olen * N], &self.pool_start[slot * N], N * sizeof(double))
        memcpy(&self.out_dep[self.olen * N], &self.pool_dep[slot * N], N * sizeof(double))
        memcpy(&self.out_work[self.olen * N], &self.pool_work[slot * N], N * sizeof(double))
        self.olen += 1
        return 0

    # -- dynamics ---------------------------------------------------------
    def set_rates(self, rates):
        cdef double now = self.clock
        cdef int s, k
        cdef double new, old, rem
        cdef int rekeyed = 0
        for s in range(self.N):
            new = float(rates[s])
            old = self.rates_[s]
            if new == old:
                continue
            for k in range(self.off[s], self.off[s] + self.c[s]):
                if self.srv_slot[k] < 0:
                    continue
                rem = self.srv_rem[k] - (now - self.srv_tupd[k]) * old
                if rem < 0.0:
                    rem = 0.0
                self.srv_rem[k] = rem
                self.srv_tupd[k] = now
                self.srv_done[k] = now + rem / new
                rekeyed += 1
            self.rates_[s] = new
        return rekeyed

    cdef int _start(self, int s, int k, long long slot, double now) except -1:
        cdef double work = self._draw(s + 1)
        self.srv_slot[k] = slot
        self.srv_rem[k] = work
        self.srv_tupd[k] = now
        self.srv_done[k] = now + work / self.rates_[s]
        self.pool_start[slot * self.N + s] = now
        self.pool_work[slot * self.N + s] = work
        return 0

    cdef int _join(self, int s, long long slot, double now) except -1:
        cdef int k
        self.count[s] += 1
        for k in range(self.off[s], self.off[s] + self.c[s]):
            if self.srv_slot[k] < 0:
                self._start(s, k, slot, now)
                return 0
        self._wq_push(s, slot)
        return 0

    cdef inline void _advance(self, double t):
        cdef double dt = t - self.clock
        cdef int s
        for s in range(self.N):
            self.area_[s] += dt * self.count[s]
            if self.count[s] == 0:
                self.empty_[s] += dt
        self.clock = t

    def run_until(self, double t_end):
        cdef int N = self.N
        cdef int S = self.S
        cdef int k, s, best_k, best_kind, best_stage
        cdef double t, best_t
        cdef long long jid, best_id, slot
        self.olen = 0
        while True:
            best_t = self.next_arrival
            best_kind = 1
            best_stage = 0
            best_id = self.next_id
            best_k = -1
            for k in range(S):
                slot = self.srv_slot[k]
                if slot < 0:
                    continue
                t = self.srv_done[k]
                if t > best_t:
                    continue
                s = self.srv_stage[k]
                jid = self.pool_id[slot]
                if (t < best_t or best_kind == 1 or s < best_stage
                        or (s == best_stage and jid < best_id)):
                    best_t = t
                    best_kind = 0
                    best_stage = s
                    best_id = jid
                    best_k = k
            if best_t > t_end:
                break
            self._advance(best_t)
            if best_kind == 1:
                slot = self._alloc()
                self.pool_id[slot] = best_id
                self.pool_arr[slot] = best_t
                for s in range(N):
                    self.pool_start[slot * N + s] = 0.0
                    self.pool_dep[slot * N + s] = 0.0
                    self.pool_work[slot * N + s] = 0.0
                self.next_id += 1
                self.n_arrivals += 1
                self.next_arrival = best_t + self._draw(0)
                self._join(0, slot, best_t)
                continue
            s = best_stage
            slot = self.srv_slot[best_k]
            self.srv_slot[best_k] = -1
            self.srv_done[best_k] = INF
            self.count[s] -= 1
            self.pool_dep[slot * N + s] = best_t
            if self.wq_len[s] > 0:
                self._start(s, best_k, self._wq_pop(s), best_t)
            if s + 1 < N:
                self._join(s + 1, slot, best_t)
            else:
                self.n_departures += 1
                self._emit(slot)
                self._release(slot)
        self._advance(t_end if t_end > self.clock else self.clock)
        return self._collect()

    cdef object _collect(self):
        cdef long long m = self.olen
        cdef int N = self.N
        ids = np.empty(m, dtype=np.int64)
        arr = np.empty(m, dtype=np.float64)
        starts = np.empty((m, N), dtype=np.float64)
        deps = np.empty((m, N), dtype=np.float64)
        works = np.empty((m, N), dtype=np.float64)
        cdef long long[::1] vid = ids
        cdef double[::1] varr = arr
        cdef double[:, ::1] vs = starts
        cdef double[:, ::1] vd = deps
        cdef double[:, ::1] vw = works
        if m > 0:
            memcpy(&vid[0], self.out_id, m * sizeof(long long))
            memcpy(&varr[0], self.out_arr, m * sizeof(double))
            memcpy(&vs[0, 0], self.out_start, m * N * sizeof(double))
            memcpy(&vd[0, 0], self.out_dep, m * N * sizeof(double))
            memcpy(&vw[0, 0], self.out_work, m * N * sizeof(double))
        self.olen = 0
        return ids, arr, starts, deps, works

    # -- inspection -------------------------------------------------------
    @property
    def n_stages(self):
        return self.N

    @property
    def servers(self):
        return [self.c[s] for s in range(self.N)]

    @property
    def rates(self):
        return [self.rates_[s] for s in range(self.N)]

    @property
    def area(self):
        return [self.area_[s] for s in range(self.N)]

    @property
    def empty_time(self):
        return [self.empty_[s] for s in range(self.N)]

    def completion_times(self):
        return [self.srv_done[k] for k in range(self.S) if self.srv_slot[k] >= 0]

    def stage_counts(self):
        return [int(self.count[s]) for s in range(self.N)]

    def waiting_counts(self):
        return [int(self.wq_len[s]) for s in range(self.N)]

    def busy_counts(self):
        out = []
        cdef int s, k, b
        for s in range(self.N):
            b = 0
            for k in range(self.off[s], self.off[s] + self.c[s]):
                if self.srv_slot[k] >= 0:
                    b += 1
            out.append(b)
        return out

    def in_system(self):
        ids = []
        arr = []
        cdef long long j
        for j in range(self.cap):
            if self.pool_id[j] >= 0:
                ids.append(self.pool_id[j])
                arr.append(self.pool_arr[j])
        ids = np.array(ids, dtype=np.int64)
        arr = np.array(arr, dtype=np.float64)
        order = np.argsort(ids, kind="stable")
        return ids[order], arr[order]
