"""Challenge-response pair sets and their text file format.

File layout::

    # n=27 k=2 kind=proposed seed=1234
    010011...,1
    110100...,0

Challenge strings list cell 0 first (most significant).
"""
from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError

KINDS = ("proposed", "arbiter")
_HEADER = re.compile(r"^#\s*n=(\d+)\s+k=(\d+)\s+kind=(\w+)\s+seed=(\d+)\s*$")


@dataclass(eq=False)
class CrpSet:
    challenges: np.ndarray  # (m, n) uint8
    responses: np.ndarray  # (m,) uint8
    k: int = 1
    kind: str = "proposed"
    seed: int = 0

    def __post_init__(self):
        self.challenges = np.atleast_2d(np.asarray(self.challenges, dtype=np.uint8))
        self.responses = np.asarray(self.responses, dtype=np.uint8).ravel()
        if len(self.challenges) != len(self.responses):
            raise DimensionError(
                f"{len(self.challenges)} challenges vs {len(self.responses)} responses"
            )
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def n(self) -> int:
        return self.challenges.shape[1]

    def __len__(self) -> int:
        return len(self.responses)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CrpSet):
            return NotImplemented
        return (
            (self.n, self.k, self.kind, self.seed) == (other.n, other.k, other.kind, other.seed)
            and np.array_equal(self.challenges, other.challenges)
            and np.array_equal(self.responses, other.responses)
        )

    def __getitem__(self, idx) -> "CrpSet":
        return CrpSet(self.challenges[idx], self.responses[idx], self.k, self.kind, self.seed)

    def to_text(self) -> str:
        lines = [f"# n={self.n} k={self.k} kind={self.kind} seed={self.seed}"]
        chars = np.where(self.challenges == 1, "1", "0")
        for row, r in zip(chars, self.responses):
            lines.append(f"{''.join(row)},{int(r)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CrpSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty CRP file")
        m = _HEADER.match(lines[0])
        if not m:
            raise ValueError(f"bad CRP header: {lines[0]!r}")
        n, k, kind, seed = int(m[1]), int(m[2]), m[3], int(m[4])
        challenges = np.zeros((len(lines) - 1, n), dtype=np.uint8)
        responses = np.zeros(len(lines) - 1, dtype=np.uint8)
        for i, line in enumerate(lines[1:]):
            bits, _, resp = line.partition(",")
            if len(bits) != n or resp not in ("0", "1") or set(bits) - {"0", "1"}:
                raise ValueError(f"line {i + 2}: malformed CRP {line!r}")
            challenges[i] = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
            responses[i] = int(resp)
        return cls(challenges.reshape(-1, n), responses, k=k, kind=kind, seed=seed)

    def save(self, path) -> Path:
        return atomic_write(path, self.to_text())

    @classmethod
    def load(cls, path) -> "CrpSet":
        return cls.from_text(Path(path).read_text())


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    return path
