"""Counter-based random streams.

Every stochastic component draws from a Philox generator keyed by a small
integer tuple, so any stream can be reconstructed in isolation: replicates,
resampling draws, and retry attempts are all order-independent and safe to
evaluate in parallel.
"""

import numpy as np


def make_stream(*key):
    """Return a ``numpy.random.Generator`` keyed by the given integers.

    Parameters
    ----------
    *key : int or sequence of int
        Key components. Sequences are flattened, so ``make_stream((a, b), c)``
        and ``make_stream(a, b, c)`` denote the same stream.
    """
    flat = []
    for part in key:
        if isinstance(part, (tuple, list)):
            flat.extend(int(v) for v in part)
        else:
            flat.append(int(part))
    ss = np.random.SeedSequence(flat)
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))
