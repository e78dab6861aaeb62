"""Counter-based random streams keyed by ``(base_seed, stream, index)``.

Every replication owns an independent Philox stream, so a replication's
draws do not depend on which other replications are generated, nor on the
order or thread they run in.
"""

import numpy as np

# Stream identifiers; part of the reproducibility contract, never renumber.
EVAL = 0
TUNE_GLOBAL = 1
TUNE_POINTWISE = 2
LILLIEFORS = 3

_TWO53 = float(2**53)


def stream(base_seed: int, stream_id: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(stream_id), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def uniform_open(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = gen.integers(0, 2**53, size=size, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) / _TWO53
