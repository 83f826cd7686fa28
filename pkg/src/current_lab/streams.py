"""Reproducible random streams keyed by (master seed, module tag, chain index).

Philox is counter based, so every chain owns an independent stream no matter
in which order, or on which worker, the chains are run.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

MODULE_TAGS = ("worm", "activation", "spins", "locator", "fuzz", "smearing", "covering", "replay", "diagrams")


def _tag_word(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")


def stream(seed: int, tag: str, chain: int = 0) -> np.random.Generator:
    """Generator for one (seed, tag, chain) triple."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, _tag_word(tag), int(chain)])
    return np.random.Generator(np.random.Philox(seq))


def thread_cap() -> int:
    """Worker cap from CURRENT_LAB_THREADS (defaults to 1)."""
    raw = os.environ.get("CURRENT_LAB_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"CURRENT_LAB_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def map_chains(func, n_chains: int):
    """Run ``func(chain)`` for every chain, threaded up to the configured cap.

    Results come back in chain order, so the reduction is independent of the
    thread count. The numba kernels release the GIL.
    """
    workers = min(thread_cap(), n_chains)
    if workers <= 1:
        return [func(c) for c in range(n_chains)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_chains)))
