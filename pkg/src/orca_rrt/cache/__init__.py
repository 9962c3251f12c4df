"""
Cache module for storing built visibility graphs and other derived data.
"""

from .cache_adapter import CacheAdapter
from .memory_cache_adapter import MemoryCacheAdapter

__all__ = ["CacheAdapter", "MemoryCacheAdapter"]
