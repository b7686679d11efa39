"""Splittable deterministic random streams.

A `SeedKey` names a stream by a root entropy plus a tuple of integer labels
(experiment id, sample index, role, ...). Streams are built with numpy's
`SeedSequence` spawn keys and the counter-based Philox generator, so two
different label paths never share state and the same path always yields the
same numbers, regardless of the order in which streams are drawn.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import ConfigError

# Role labels used when one sample needs several independent streams.
ROLE_INNER = 0
ROLE_OUTER = 1
ROLE_REFERENCE = 2
ROLE_JUMPS = 3
ROLE_FLUCTUATION = 4


@dataclass(frozen=True)
class SeedKey:
    entropy: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if int(self.entropy) < 0:
            raise ConfigError(f"Seed must be non-negative, got {self.entropy}")
        if any(int(p) < 0 for p in self.path):
            raise ConfigError(f"Stream labels must be non-negative, got {self.path}")

    def spawn(self, *labels: int) -> "SeedKey":
        """Child key; `key.spawn(a, b)` equals `key.spawn(a).spawn(b)`."""
        return SeedKey(int(self.entropy), tuple(self.path) + tuple(int(l) for l in labels))

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=int(self.entropy), spawn_key=tuple(self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.sequence()))


SeedLike = Union[int, SeedKey]


def as_key(seed: SeedLike) -> SeedKey:
    if isinstance(seed, SeedKey):
        return seed
    if isinstance(seed, (bool, float)) or seed is None:
        raise ConfigError(f"Seed must be an integer, got {seed!r}")
    return SeedKey(int(seed))
