"""
Seeded, splittable random streams.

Every stochastic routine takes an explicit Rng; nothing reads global random state.
"""
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id_for(label: str) -> int:
    """
    Stable 64-bit stream id for a label such as "exp/profile"
    """
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class Rng:
    master_seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seed_seq = np.random.SeedSequence([self.master_seed & _MASK64, self.stream_id & _MASK64])
        self.generator = np.random.Generator(np.random.Philox(seed_seq))

    def spawn(self, stream_id: int) -> "Rng":
        """
        Child stream; the parent's state is untouched
        """
        return Rng(self.master_seed, (self.stream_id * 1_000_003 + stream_id + 1) & _MASK64)

    def derive(self, label: str) -> "Rng":
        return self.spawn(stream_id_for(label))

    def random(self) -> float:
        return float(self.generator.random())

    def coin(self) -> bool:
        return bool(self.generator.random() < 0.5)

    def integers(self, low: int, high: int) -> int:
        return int(self.generator.integers(low, high))

    def choice(self, items: Sequence):
        return items[int(self.generator.integers(0, len(items)))]

    def distinct_pair(self, items: Sequence) -> tuple:
        """
        Two distinct members of items, uniformly over ordered pairs
        """
        i, j = self.generator.choice(len(items), size=2, replace=False)
        return items[int(i)], items[int(j)]

    def signs(self, size: int) -> np.ndarray:
        return self.generator.choice(np.array([-1, 1]), size=size)
