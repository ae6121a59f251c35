"""Process-wide allocator tuning.

Training allocates and frees multi-megabyte activation buffers every step.
With glibc defaults those exceed the mmap threshold, so each step pays a full
page-fault cycle on fresh mappings, which dominates runtime on sandboxed
kernels. Raising the mmap/trim thresholds keeps the buffers on the reusable
heap. Best effort: silently skipped where glibc is unavailable.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def tune_allocator() -> bool:
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        ok &= libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
        return bool(ok)
    except (OSError, AttributeError):
        return False
