"""Pure-Python event loop for the tandem network.

Mirrors ``_ckernel.pyx`` operation for operation (same variate consumption,
same event order, same float expressions), so both backends produce
bit-identical trajectories.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

INF = float("inf")
_DEPARTURE = 0
_ARRIVAL = 1


class _Buffered:
    __slots__ = ("stream", "buf", "pos")

    def __init__(self, stream):
        self.stream = stream
        self.buf = stream.next_block().tolist()
        self.pos = 0

    def next(self) -> float:
        if self.pos >= len(self.buf):
            self.buf = self.stream.next_block().tolist()
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return x


class PyKernel:
    backend = "python"

    def __init__(self, servers, arrival_stream, work_streams, rates):
        self.n_stages = n = len(servers)
        self.servers = [int(c) for c in servers]
        self.rates = [float(r) for r in rates]
        self._arrival = _Buffered(arrival_stream)
        self._work = [_Buffered(s) for s in work_streams]

        self.clock = 0.0
        self.n_arrivals = 0
        self.n_departures = 0
        self._next_id = 0
        self._next_arrival = self._arrival.next()

        # jobs in system: id -> [arrival, starts, deps, works]
        self._jobs: dict[int, list] = {}
        self._waiting = [deque() for _ in range(n)]
        # per stage, per server: [job_id or -1, remaining, t_update, done_time]
        self._srv = [[[-1, 0.0, 0.0, INF] for _ in range(c)] for c in self.servers]
        self._count = [0] * n
        self.area = [0.0] * n
        self.empty_time = [0.0] * n
        self._heap = []
        self._rebuild_heap()

    # -- event list -------------------------------------------------------
    def _rebuild_heap(self):
        h = [(self._next_arrival, _ARRIVAL, 0, self._next_id, -1)]
        for s, row in enumerate(self._srv):
            for k, srv in enumerate(row):
                if srv[0] >= 0:
                    h.append((srv[3], _DEPARTURE, s, srv[0], k))
        heapq.heapify(h)
        self._heap = h

    def completion_times(self) -> list[float]:
        return [srv[3] for row in self._srv for srv in row if srv[0] >= 0]

    # -- dynamics ---------------------------------------------------------
    def set_rates(self, rates) -> int:
        now = self.clock
        rekeyed = 0
        for s in range(self.n_stages):
            new = float(rates[s])
            old = self.rates[s]
            if new == old:
                continue
            for srv in self._srv[s]:
                if srv[0] < 0:
                    continue
                rem = srv[1] - (now - srv[2]) * old
                if rem < 0.0:
                    rem = 0.0
                srv[1] = rem
                srv[2] = now
                srv[3] = now + rem / new
                rekeyed += 1
            self.rates[s] = new
        if rekeyed:
            self._rebuild_heap()
        return rekeyed

    def _start(self, s, k, job_id, now):
        work = self._work[s].next()
        srv = self._srv[s][k]
        srv[0] = job_id
        srv[1] = work
        srv[2] = now
        srv[3] = now + work / self.rates[s]
        rec = self._jobs[job_id]
        rec[1][s] = now
        rec[3][s] = work
        heapq.heappush(self._heap, (srv[3], _DEPARTURE, s, job_id, k))

    def _join(self, s, job_id, now):
        self._count[s] += 1
        for k, srv in enumerate(self._srv[s]):
            if srv[0] < 0:
                self._start(s, k, job_id, now)
                return
        self._waiting[s].append(job_id)

    def _advance(self, t):
        dt = t - self.clock
        for s in range(self.n_stages):
            self.area[s] += dt * self._count[s]
            if self._count[s] == 0:
                self.empty_time[s] += dt
        self.clock = t

    def run_until(self, t_end):
        n = self.n_stages
        ids, arr, starts, deps, works = [], [], [], [], []
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            t, kind, s, job_id, k = heapq.heappop(heap)
            if kind == _DEPARTURE:
                srv = self._srv[s][k]
                if srv[0] != job_id or srv[3] != t:
                    continue  # stale entry
            self._advance(t)
            if kind == _ARRIVAL:
                self._jobs[job_id] = [t, [0.0] * n, [0.0] * n, [0.0] * n]
                self._next_id += 1
                self.n_arrivals += 1
                self._next_arrival = t + self._arrival.next()
                heapq.heappush(heap, (self._next_arrival, _ARRIVAL, 0, self._next_id, -1))
                self._join(0, job_id, t)
                continue
            srv = self._srv[s][k]
            srv[0] = -1
            srv[3] = INF
            self._count[s] -= 1
            rec = self._jobs[job_id]
            rec[2][s] = t
            if self._waiting[s]:
                self._start(s, k, self._waiting[s].popleft(), t)
            if s + 1 < n:
                self._join(s + 1, job_id, t)
            else:
                del self._jobs[job_id]
                self.n_departures += 1
                ids.append(job_id)
                arr.append(rec[0])
                starts.append(rec[1])
                deps.append(rec[2])
                works.append(rec[3])
        self._advance(max(t_end, self.clock))
        m = len(ids)
        return (
            np.array(ids, dtype=np.int64),
            np.array(arr, dtype=np.float64),
            np.array(starts, dtype=np.float64).reshape(m, n),
            np.array(deps, dtype=np.float64).reshape(m, n),
            np.array(works, dtype=np.float64).reshape(m, n),
        )

    # -- inspection -------------------------------------------------------
    def stage_counts(self) -> list[int]:
        return list(self._count)

    def waiting_counts(self) -> list[int]:
        return [len(w) for w in self._waiting]

    def busy_counts(self) -> list[int]:
        return [sum(1 for srv in row if srv[0] >= 0) for row in self._srv]

    def in_system(self):
        ids = sorted(self._jobs)
        return (
            np.array(ids, dtype=np.int64),
            np.array([self._jobs[i][0] for i in ids], dtype=np.float64),
        )
