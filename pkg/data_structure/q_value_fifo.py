# coding=utf-8

from collections import deque
from typing import List, NamedTuple, Optional


CURRENT_BUFFER = 'current'
NEXT_BUFFER = 'next'
WEIGHT_PORT = 'weights'

PUSH = 'push'
POP = 'pop'
UPDATE = 'update'


class FifoEvent(NamedTuple):
    cycle: int
    buffer: str
    kind: str
    tag: int


class FifoTrace:
    """Time-ordered push/pop events of the Q-value buffers (plus weight-update events)."""

    def __init__(self, capacity: int, events: Optional[List[FifoEvent]] = None):
        self.capacity = capacity
        self.events = list(events or [])

    def record(self, cycle, buffer, kind, tag):
        self.events.append(FifoEvent(int(cycle), buffer, kind, int(tag)))

    def _of(self, buffer, kind):
        return [e for e in self.events if e.buffer == buffer and e.kind == kind]

    def pushes(self, buffer) -> int:
        return len(self._of(buffer, PUSH))

    def pops(self, buffer) -> int:
        return len(self._of(buffer, POP))

    def push_order(self, buffer) -> List[int]:
        return [e.tag for e in self._of(buffer, PUSH)]

    def pop_order(self, buffer) -> List[int]:
        return [e.tag for e in self._of(buffer, POP)]

    def updates(self) -> int:
        return len(self._of(WEIGHT_PORT, UPDATE))

    @property
    def buffers(self):
        return sorted({e.buffer for e in self.events if e.kind in (PUSH, POP)})

    @property
    def last_cycle(self) -> int:
        return max((e.cycle for e in self.events), default=0)

    def occupancy_profile(self, buffer) -> List[int]:
        level, profile = 0, []
        for e in self.events:
            if e.buffer != buffer:
                continue
            level += 1 if e.kind == PUSH else -1 if e.kind == POP else 0
            profile.append(level)
        return profile

    def peak_occupancy(self, buffer=None) -> int:
        names = [buffer] if buffer is not None else self.buffers
        return max((max(self.occupancy_profile(b), default=0) for b in names), default=0)

    def final_occupancy(self, buffer) -> int:
        profile = self.occupancy_profile(buffer)
        return profile[-1] if profile else 0

    def validate(self):
        """Replays every buffer: no pop on empty, pops in push order, peak within capacity."""
        last = -1
        for e in self.events:
            if e.cycle < last:
                raise ValueError(f'events out of time order at cycle {e.cycle}')
            last = e.cycle
        for buffer in self.buffers:
            queue = deque()
            for e in self.events:
                if e.buffer != buffer:
                    continue
                if e.kind == PUSH:
                    queue.append(e.tag)
                    if len(queue) > self.capacity:
                        raise ValueError(f'{buffer} buffer overflow at cycle {e.cycle}: '
                                         f'{len(queue)} > {self.capacity}')
                elif e.kind == POP:
                    if not queue:
                        raise ValueError(f'pop on empty {buffer} buffer at cycle {e.cycle}')
                    expected = queue.popleft()
                    if expected != e.tag:
                        raise ValueError(f'{buffer} buffer popped {e.tag}, expected {expected}')
        return self

    def to_rows(self):
        return [e._asdict() for e in self.events]


class QValueFifo:
    """Buffer sized to the number of actions per state; records into a shared trace if given."""

    def __init__(self, name: str, capacity: int, trace: Optional[FifoTrace] = None):
        self.name = name
        self.capacity = capacity
        self.trace = trace
        self._queue = deque()
        self.peak = 0

    def __len__(self):
        return len(self._queue)

    def push(self, value, tag: int, cycle: int = 0):
        if len(self._queue) >= self.capacity:
            raise OverflowError(f'{self.name} buffer full ({self.capacity} entries)')
        self._queue.append(value)
        self.peak = max(self.peak, len(self._queue))
        if self.trace is not None:
            self.trace.record(cycle, self.name, PUSH, tag)

    def pop(self, tag: int, cycle: int = 0):
        if not self._queue:
            raise IndexError(f'{self.name} buffer is empty')
        if self.trace is not None:
            self.trace.record(cycle, self.name, POP, tag)
        return self._queue.popleft()


def drain_in_parallel(current: QValueFifo, nxt: QValueFifo, action: int, start_cycle: int = 0):
    """
    Empties both buffers side by side: returns the chosen action's current Q-value
    and the running maximum of the next-state Q-values.
    """
    assert len(current) == len(nxt)
    q_current, opt_next = None, None
    for k in range(len(current)):
        cur_v = current.pop(k, start_cycle + k)
        nxt_v = nxt.pop(k, start_cycle + k)
        if k == action:
            q_current = cur_v
        if opt_next is None or nxt_v > opt_next:
            opt_next = nxt_v
    return q_current, opt_next
