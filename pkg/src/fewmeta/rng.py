"""Counter-based random streams keyed by (seed, scenario, replication, role).

Every replication draws from its own Philox streams, so results do not
depend on the order in which replications run or on how they are split
across worker processes.
"""

import hashlib

import numpy as np

ROLE_STANDARD_ERRORS = 0
ROLE_EFFECTS = 1
ROLE_SAMPLING = 2
ROLE_ARM_LOGODDS = 3
ROLE_COUNTS = 4


def fingerprint(*parts) -> int:
    """Stable 64-bit digest of a scenario description (uses ``repr`` of the parts)."""
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, scenario_key: int, rep_index: int, role: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(int(scenario_key), int(rep_index), int(role)))
    return np.random.Generator(np.random.Philox(ss))
