import hashlib

import numpy as np


def derive_seed(master_seed: int, risk_level: int, run_index: int, stage: str) -> int:
    """
    Derives a 64-bit seed for one labeled substream.

    The seed is the first 8 bytes (little-endian) of the BLAKE2b digest of
    "<master_seed>|<risk_level>|<run_index>|<stage>". Adding new cells or stages never
    changes the seeds of existing ones.

    Args:
        master_seed (int): The experiment's master seed.
        risk_level (int): Risk level N, or 0 for stages shared by all risk levels.
        run_index (int): Run index within a risk level.
        stage (str): Stage tag, e.g. "data", "init", "epochs", "test".

    Returns:
        int: A seed in [0, 2**64).
    """
    key = f"{master_seed}|{risk_level}|{run_index}|{stage}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(master_seed: int, risk_level: int, run_index: int, stage: str) -> np.random.Generator:
    """Returns a numpy Generator seeded by derive_seed()."""
    return np.random.default_rng(derive_seed(master_seed, risk_level, run_index, stage))


def child_rng(seed: int, stage: str) -> np.random.Generator:
    """Returns a Generator for a named stage below an already derived seed."""
    return substream(seed, 0, 0, stage)
