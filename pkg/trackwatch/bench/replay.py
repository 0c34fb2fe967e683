import math
import time
from typing import Callable, Sequence

from loguru import logger

from ..domain.common import AisMessage
from .common import DomainError

__all__ = ("replay",)


def replay(messages: Sequence[AisMessage], speed_factor: float, sink: Callable[[AisMessage], object]) -> int:
    """
    Feeds time-sorted `messages` to `sink`, compressing event time by
    `speed_factor`. Delays are measured from the start of the replay so
    sleep overshoot does not accumulate. An infinite factor never sleeps.
    """
    if not speed_factor > 0:
        raise DomainError(f"speed_factor must be positive, got {speed_factor}")
    if not messages:
        return 0

    t0 = messages[0].timestamp
    started = time.monotonic()
    previous = t0
    for msg in messages:
        if msg.timestamp < previous:
            raise ValueError(f"messages not time-sorted: {msg.timestamp} after {previous}")
        previous = msg.timestamp
        if not math.isinf(speed_factor):
            delay = started + (msg.timestamp - t0) / speed_factor - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        sink(msg)

    logger.debug(f"Replayed {len(messages)} messages in {time.monotonic() - started:.3f}s.")
    return len(messages)
