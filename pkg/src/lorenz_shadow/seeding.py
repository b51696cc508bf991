"""Deterministic seed derivation."""

import hashlib
import json
from typing import Union

Counter = Union[int, str]


def derive_seed(master_seed: int, *counters: Counter) -> int:
    """
    63-bit seed from sha256 of the canonical JSON of [master_seed, *counters].

    derive_seed(7, "run", 3) is stable across processes and platforms.
    """
    payload = json.dumps([master_seed, *counters], separators=(',', ':'))
    digest = hashlib.sha256(payload.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') >> 1
