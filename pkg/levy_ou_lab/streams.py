"""Seeded, forkable random streams

Every consumer of randomness asks for a stream by (seed, index). Streams are counter-based Philox generators keyed
by a SeedSequence spawn key, so stream k can be rebuilt without touching streams 0..k-1 and results don't depend
on which worker drew them.
"""

import numpy as np


def make_stream(
    seed: int, index: int, negative_time: bool = False
) -> np.random.Generator:
    """Independent random stream number `index` of a scenario seed

    Args:
        seed: non-negative scenario seed
        index: stream index, e.g. a Monte Carlo block number
        negative_time: request the stream of the independent copy of the noise driving times t < 0

    Returns:
        numpy Generator backed by Philox
    """
    if seed < 0 or index < 0:
        raise ValueError(
            f"Stream seed and index must be non-negative, got seed={seed}, index={index}"
        )
    sequence = np.random.SeedSequence(
        entropy=seed, spawn_key=(index, int(negative_time))
    )
    return np.random.Generator(np.random.Philox(sequence))
