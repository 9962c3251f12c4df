"""
Interface for stores of derived geometry: visibility graphs per radius and
goal distance fields per (radius, goal).
"""

from abc import ABC, abstractmethod
from typing import Callable, Hashable, Optional, TypeVar

T = TypeVar("T")


class CacheAdapter(ABC):
    """
    Keyed store for values that are expensive to rebuild but cheap to hold.

    Values are immutable once stored, so a hit may be shared freely. An
    adapter may drop entries at any time (for example to bound memory);
    callers must be able to rebuild a missing value.
    """

    @abstractmethod
    def get(self, cache_key: Hashable) -> Optional[T]:
        """
        Args:
            cache_key (Hashable): Graph or field key, e.g. ``(radius, corner_points)``

        Returns:
            The stored value, or None on a miss
        """

    @abstractmethod
    def set(self, cache_key: Hashable, data: T) -> None:
        """Store ``data``, possibly evicting other entries."""

    @abstractmethod
    def __len__(self) -> int:
        """Number of entries currently held."""

    def get_or_create(self, cache_key: Hashable, factory: Callable[[], T]) -> T:
        """
        Return the stored value, building and storing it on a miss.

        Args:
            cache_key (Hashable): The key to look up
            factory (Callable): Builds the value when the key is missing

        Returns:
            The stored or freshly built value
        """
        data = self.get(cache_key)
        if data is None:
            data = factory()
            self.set(cache_key, data)
        return data
