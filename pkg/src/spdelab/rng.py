"""Counter-based random streams.

Every source of randomness in the package draws from a Philox generator
keyed by ``(seed, purpose, block, level)``. Streams for distinct purposes
or blocks never overlap, which makes Monte Carlo runs reproducible and
embarrassingly parallel: workers own disjoint blocks and results do not
depend on how blocks are distributed.

Path noise is generated in fixed blocks of ``BLOCK`` paths so that a
single path regenerated from ``(seed, path_index)`` is bit-identical to
the same row of a batched draw.
"""

import numpy as np

from .errors import ParameterError

# purpose tags baked into the stream key
NOISE = 1
REFINE = 2
INVARIANT = 3
MEHLER = 4
CLOUD = 5
CHECK = 6
APRIORI = 7
EXPERIMENT = 8

#: paths per noise block; fixed so path_index -> (block, row) is stable
BLOCK = 64

_MAX_SEED = 2**64


def validate_seed(seed):
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < _MAX_SEED:
        raise ParameterError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


def stream(seed, purpose, block=0, level=0):
    """Return a Generator for the (seed, purpose, block, level) stream."""
    seed = validate_seed(seed)
    if not 0 <= block < 2**48:
        raise ParameterError(f"block out of range: {block}")
    if not 0 <= level < 2**8 or not 0 < purpose < 2**8:
        raise ParameterError(f"bad stream coordinates: purpose={purpose} level={level}")
    word = (np.uint64(purpose) << np.uint64(56)) | (np.uint64(level) << np.uint64(48))
    key = np.array([np.uint64(seed), word | np.uint64(block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
