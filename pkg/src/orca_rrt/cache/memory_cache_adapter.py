"""
In-process cache adapter with at-most-once construction per key.
"""

import logging
import threading
from collections import OrderedDict
from typing import Any, Callable, Dict, Hashable, Optional

from .cache_adapter import CacheAdapter

logger = logging.getLogger(__name__)


class MemoryCacheAdapter(CacheAdapter):
    """
    Dictionary-backed cache that is safe to share between threads.

    Concurrent ``get_or_create`` calls for the same key build the value
    once; the other callers wait for it. Different keys build in parallel.
    With ``max_entries`` the least recently used entry is evicted once the
    cache is full.
    """

    def __init__(self, max_entries: Optional[int] = None):
        if max_entries is not None and max_entries < 1:
            raise ValueError(f"max_entries must be positive, got {max_entries}")
        self.max_entries = max_entries
        self._data: "OrderedDict[Hashable, Any]" = OrderedDict()
        self._lock = threading.Lock()
        self._key_locks: Dict[Hashable, threading.Lock] = {}

    def _lookup(self, cache_key: Hashable) -> Optional[Any]:
        # Caller holds self._lock.
        data = self._data.get(cache_key)
        if data is not None:
            self._data.move_to_end(cache_key)
        return data

    def _store(self, cache_key: Hashable, data: Any) -> None:
        self._data[cache_key] = data
        self._data.move_to_end(cache_key)
        if self.max_entries is not None:
            while len(self._data) > self.max_entries:
                evicted, _ = self._data.popitem(last=False)
                self._key_locks.pop(evicted, None)

    def get(self, cache_key: Hashable) -> Optional[Any]:
        with self._lock:
            return self._lookup(cache_key)

    def set(self, cache_key: Hashable, data: Any) -> None:
        with self._lock:
            self._store(cache_key, data)

    def get_or_create(self, cache_key: Hashable, factory: Callable[[], Any]) -> Any:
        with self._lock:
            data = self._lookup(cache_key)
            if data is not None:
                return data
            key_lock = self._key_locks.setdefault(cache_key, threading.Lock())

        with key_lock:
            with self._lock:
                data = self._lookup(cache_key)
                if data is not None:
                    return data
            logger.debug("Cache miss for %r, building", cache_key)
            data = factory()
            with self._lock:
                self._store(cache_key, data)
            return data

    def __len__(self):
        with self._lock:
            return len(self._data)
