"""Background batch production through a bounded queue."""
from __future__ import annotations

import logging
import queue
import threading
from typing import Iterable, Iterator, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

_DONE = object()


class _Failure:
    def __init__(self, error: BaseException):
        self.error = error


def prefetch(source: Iterable[T], maxsize: int = 4) -> Iterator[T]:
    """Yield items of ``source`` in order while a producer thread works ahead.

    ``maxsize <= 0`` disables the thread and iterates inline.
    """
    if maxsize <= 0:
        yield from source
        return

    buffer: "queue.Queue[object]" = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def put(item: object) -> bool:
        while not stop.is_set():
            try:
                buffer.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def produce() -> None:
        try:
            for item in source:
                if not put(item):
                    return
            put(_DONE)
        except BaseException as e:  # handed to the consumer
            logger.error(f"Batch producer failed: {str(e)}")
            put(_Failure(e))

    worker = threading.Thread(target=produce, name="prnn-prefetch", daemon=True)
    worker.start()
    try:
        while True:
            item = buffer.get()
            if item is _DONE:
                return
            if isinstance(item, _Failure):
                raise item.error
            yield item  # type: ignore[misc]
    finally:
        stop.set()
        worker.join(timeout=1.0)
