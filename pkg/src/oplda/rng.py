"""Deterministic random streams.

A master seed fans out into independent streams keyed by
``(module id, task index)`` through :class:`numpy.random.SeedSequence`
spawn keys. Simulations are cut into fixed-size blocks, each with its own
stream, so the concatenated output never depends on the worker count.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# module ids; never renumber, results are keyed on them
MC_COMPOUND = 1
BOOTSTRAP = 2
MCMC = 3
COPULA = 4
FREQ_COPULA = 5
INTERARRIVAL = 6
COMMON_FACTOR = 7
COMMON_SHOCK = 8
PROFILES = 9
PREDICTIVE = 10
BIAS_STUDY = 11
AGGREGATE_COVER = 12
FIT = 13
GRID = 14
CAPITAL = 15
STUDY = 16

DEFAULT_BLOCK = 1 << 14


def seed_sequence(seed, *key):
    """Return the SeedSequence for ``key`` under a master ``seed``.

    ``seed`` may be an int or a SeedSequence; in the latter case the key is
    appended to its existing spawn key.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    if seed is None:
        raise ValueError("a seed is required for reproducible streams")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))


def stream(seed, *key):
    """Generator for ``key`` under ``seed``."""
    return np.random.default_rng(seed_sequence(seed, *key))


def as_generator(rng):
    """Accept a Generator, a SeedSequence or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def run_blocks(fn, n_total, seed, module, threads=1, block=DEFAULT_BLOCK, with_offset=False):
    """Evaluate ``fn(rng, n)`` over fixed blocks and concatenate results.

    Block ``b`` always receives the stream keyed ``(module, b)`` and size
    ``min(block, n_total - b*block)``; results are stacked along axis 0 in
    block order, so any ``threads`` value gives identical output. With
    ``with_offset`` the call is ``fn(rng, n, start)`` where ``start`` is the
    index of the block's first item.
    """
    n_total = int(n_total)
    starts = list(range(0, n_total, block))
    sizes = [min(block, n_total - start) for start in starts]
    if not sizes:
        return fn(stream(seed, module, 0), 0, 0) if with_offset else fn(stream(seed, module, 0), 0)

    def job(b):
        if with_offset:
            return fn(stream(seed, module, b), sizes[b], starts[b])
        return fn(stream(seed, module, b), sizes[b])

    if threads is None or threads <= 1 or len(sizes) == 1:
        parts = [job(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
