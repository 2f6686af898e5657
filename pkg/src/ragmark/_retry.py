"""Retry loop with exponential backoff for backend transport failures."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, TypeVar

from .errors import TransportError

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    """How often to retry a transport failure and how long to wait.

    ``sleep`` is injectable so tests run without real delays.
    """

    max_attempts: int = 3
    backoff_seconds: float = 0.5
    multiplier: float = 2.0
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


def call_with_retries(fn: Callable[[], T], policy: RetryPolicy = RetryPolicy()) -> T:
    """Call ``fn``, retrying on :class:`TransportError` up to the policy limit.

    The error raised after exhausting retries carries the total attempt count.
    """
    delay = policy.backoff_seconds
    last: TransportError | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return fn()
        except TransportError as err:
            last = err
            if attempt < policy.max_attempts:
                if delay > 0:
                    policy.sleep(delay)
                delay *= policy.multiplier
    assert last is not None
    raise TransportError(f"{last} (after {policy.max_attempts} attempts)", attempts=policy.max_attempts) from last
