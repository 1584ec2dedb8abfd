"""Deterministic RNG streams derived from a single root seed.

Every stochastic component (data shuffling, parameter init, branch
sampling, clue degradation, synthesis) pulls from its own named stream so
that adding draws to one component never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def derive_seed(root_seed: int, name: str) -> int:
    """Stable 63-bit seed for a named sub-stream of ``root_seed``."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(_name_key(name),))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


class SeedRegistry:
    """Registry of independent named ``np.random.Generator`` streams.

    Streams are created lazily and memoized, so repeated ``stream(name)``
    calls return the same (stateful) generator.
    """

    def __init__(self, root_seed: int):
        if root_seed < 0:
            raise ValueError(f"root seed must be >= 0, got {root_seed}")
        self.root_seed = int(root_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            ss = np.random.SeedSequence(
                entropy=self.root_seed, spawn_key=(_name_key(name),)
            )
            self._streams[name] = np.random.Generator(np.random.PCG64(ss))
        return self._streams[name]

    def torch_seed(self, name: str) -> int:
        """Integer seed for torch RNGs, derived from the same scheme."""
        return derive_seed(self.root_seed, name)

    def state(self) -> dict:
        """Serializable snapshot of every instantiated stream."""
        return {
            name: gen.bit_generator.state for name, gen in self._streams.items()
        }

    def restore(self, state: dict) -> None:
        for name, bg_state in state.items():
            self.stream(name).bit_generator.state = bg_state


def seed_everything(root_seed: int) -> SeedRegistry:
    """Build the registry used across a run; streams are per-purpose."""
    return SeedRegistry(root_seed)
