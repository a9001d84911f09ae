"""Two-FeFET cells, capacitive rows, registration and response generation.

Cell states follow the convention

* state 0: T1 high-Vth (erased), T2 low-Vth (programmed)
* state 1: T1 low-Vth, T2 high-Vth

T1's source is tied to the complement challenge rail and T2's to the
challenge rail, so the node voltage is ``vdd * (state XOR challenge)`` up to
the small logistic residue of the read model.  A row averages its node
voltages through (possibly mismatched) capacitors and compares the result
with ``0.5 * vdd + sense_offset``; exact equality reads as 0.

The arbiter baseline lives here as well, because attack experiments treat
both PUF kinds as interchangeable CRP sources.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import device as dv
from .crp import CrpSet
from .device import DeviceParams, FeFetDevice
from .errors import ConfigError, DimensionError, StateError

DEFAULT_VDD = 0.5
DEFAULT_READ_GATE = 0.9
DEFAULT_OFFSET_REL = 0.005
MAX_TIE_RESAMPLES = 8
_CAP_FLOOR = 1e-3  # smallest admissible relative capacitance after clamping


@dataclass(frozen=True)
class WriteConfig:
    pulse_amplitude: float = 2.8
    temperature: float = 25.0


@dataclass(frozen=True)
class CapMismatchModel:
    sigma_c: float = 0.0

    def __post_init__(self):
        if not self.sigma_c >= 0:
            raise ConfigError(f"sigma_c must be >= 0, got {self.sigma_c}")


def normalize_cap_deviations(deltas) -> tuple[np.ndarray, int]:
    """Turn relative capacitor deviations into weights summing to one.

    Returns ``(weights, n_clamped)``; capacitances ``1 + delta`` below a
    small positive floor are clamped to it.
    """
    caps = 1.0 + np.asarray(deltas, dtype=float)
    low = caps < _CAP_FLOOR
    caps[low] = _CAP_FLOOR
    return caps / caps.sum(), int(low.sum())


def sample_cap_weights(
    n: int, model: CapMismatchModel, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Monte-Carlo capacitor weights ``w_i = (1+d_i) / sum(1+d_j)``, ``d ~ N(0, sigma_c^2)``."""
    if n < 1:
        raise DimensionError(f"need at least one capacitor, got n={n}")
    if model.sigma_c == 0:
        return np.full(n, 1.0 / n), 0
    return normalize_cap_deviations(rng.normal(0.0, model.sigma_c, size=n))


# --------------------------------------------------------------------------- cells


@dataclass
class PufCell:
    t1: FeFetDevice
    t2: FeFetDevice
    state: int | None = None
    # trace of the most recent registration
    vx1: float = float("nan")
    vx2: float = float("nan")
    tie_resamples: int = 0
    degenerate: bool = False


def new_cell(params: DeviceParams, rng: np.random.Generator) -> PufCell:
    return PufCell(dv.new_device(params, rng), dv.new_device(params, rng))


def split_cell(cell: PufCell, state: int) -> None:
    """Rewrite both transistors to saturated, opposite states."""
    if state == 0:
        dv.erase(cell.t1)
        dv.program_strong(cell.t2)
    elif state == 1:
        dv.program_strong(cell.t1)
        dv.erase(cell.t2)
    else:
        raise ValueError(f"state must be 0 or 1, got {state!r}")
    cell.state = state


def _weak_cycle(cell, write_cfg, vdd, read_gate, rng) -> float:
    dv.erase(cell.t1)
    dv.erase(cell.t2)
    dv.write_weak(cell.t1, write_cfg.pulse_amplitude, write_cfg.temperature, rng)
    return dv.read_vx(cell.t1, read_gate, vdd)


def register_cell(
    cell: PufCell,
    write_cfg: WriteConfig,
    vdd: float,
    rng: np.random.Generator,
    read_gate: float = DEFAULT_READ_GATE,
) -> int:
    """Two weak write/read cycles, compare, split.  Returns the new state bit.

    A rising node voltage between cycles (second write landed at lower Vth)
    maps to state 1.  Exact ties re-run both cycles up to
    ``MAX_TIE_RESAMPLES`` times; after that the cell falls back to state 0
    and is flagged ``degenerate`` (only reachable without C2C noise).
    """
    cell.tie_resamples = 0
    cell.degenerate = False
    while True:
        vx1 = _weak_cycle(cell, write_cfg, vdd, read_gate, rng)
        vx2 = _weak_cycle(cell, write_cfg, vdd, read_gate, rng)
        if vx2 != vx1:
            state = 1 if vx2 > vx1 else 0
            break
        if cell.tie_resamples == MAX_TIE_RESAMPLES:
            state = 0
            cell.degenerate = True
            break
        cell.tie_resamples += 1
    cell.vx1, cell.vx2 = vx1, vx2
    split_cell(cell, state)
    return state


def cell_vx(
    cell: PufCell, challenge_bit: int, vdd: float, read_gate: float = DEFAULT_READ_GATE
) -> float:
    """Node voltage of a registered cell under one challenge bit."""
    if cell.state is None:
        raise StateError("cell has not been registered")
    c = 1 if challenge_bit else 0
    return dv.read_vx(cell.t1, read_gate, (1 - c) * vdd) + dv.read_vx(cell.t2, read_gate, c * vdd)


# ---------------------------------------------------------------------------- rows


@dataclass
class RegistrationRecord:
    vx_cycle1: np.ndarray
    vx_cycle2: np.ndarray
    delta_vx: np.ndarray
    states: np.ndarray
    tie_resamples: int
    degenerate: int = 0

    def rows(self):
        """Yield ``(cell_index, vx1, vx2, delta_vx, state)`` tuples."""
        for i in range(len(self.states)):
            yield i, self.vx_cycle1[i], self.vx_cycle2[i], self.delta_vx[i], int(self.states[i])


@dataclass
class PufRow:
    cells: list[PufCell]
    cap_weights: np.ndarray
    sense_offset: float = 0.0
    vdd: float = DEFAULT_VDD
    read_gate: float = DEFAULT_READ_GATE
    cap_clamps: int = 0
    _vx_table: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.cap_weights = np.asarray(self.cap_weights, dtype=float)
        if len(self.cells) < 1:
            raise DimensionError("a row needs at least one cell")
        if self.cap_weights.shape != (len(self.cells),):
            raise DimensionError(
                f"{len(self.cells)} cells but {self.cap_weights.shape} capacitor weights"
            )
        if np.any(self.cap_weights <= 0) or abs(self.cap_weights.sum() - 1.0) > 1e-12:
            raise ConfigError("capacitor weights must be positive and sum to 1")

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def registered(self) -> bool:
        return all(c.state is not None for c in self.cells)

    @property
    def states(self) -> np.ndarray:
        if not self.registered:
            raise StateError("row has unregistered cells")
        return np.array([c.state for c in self.cells], dtype=np.uint8)

    def invalidate(self) -> None:
        self._vx_table = None

    def vx_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell node voltages for challenge bit 0 and 1 (reads are pure, so cached)."""
        if self._vx_table is None:
            vx0 = np.array([cell_vx(c, 0, self.vdd, self.read_gate) for c in self.cells])
            vx1 = np.array([cell_vx(c, 1, self.vdd, self.read_gate) for c in self.cells])
            self._vx_table = (vx0, vx1)
        return self._vx_table

    def vsums(self, challenges) -> np.ndarray:
        """Weighted node-voltage average for a batch of challenges, shape (m,)."""
        c = _as_challenges(challenges, self.n)
        vx0, vx1 = self.vx_table()
        base = float(self.cap_weights @ vx0)
        return base + c @ (self.cap_weights * (vx1 - vx0))

    def threshold(self) -> float:
        return 0.5 * self.vdd + self.sense_offset

    def responses(self, challenges, noise=None) -> np.ndarray:
        """Response bits for a challenge batch.

        ``noise`` (volts, broadcastable to the batch) is added to the summed
        voltage before comparison; it exists only so tests can inject a
        temporal error source into an otherwise static model.
        """
        v = self.vsums(challenges)
        if noise is not None:
            v = v + noise
        return (v > self.threshold()).astype(np.uint8)

    def tie_count(self, challenges) -> int:
        return int(np.count_nonzero(self.vsums(challenges) == self.threshold()))

    @classmethod
    def from_states(
        cls,
        states,
        params: DeviceParams | None = None,
        cap_weights=None,
        sense_offset: float = 0.0,
        vdd: float = DEFAULT_VDD,
        read_gate: float = DEFAULT_READ_GATE,
        rng: np.random.Generator | None = None,
    ) -> "PufRow":
        """Build an already-split row with prescribed states (testing and analysis)."""
        params = params or DeviceParams()
        rng = rng if rng is not None else np.random.default_rng(0)
        states = [int(s) for s in states]
        cells = [new_cell(params, rng) for _ in states]
        for cell, s in zip(cells, states):
            split_cell(cell, s)
        if cap_weights is None:
            cap_weights = np.full(len(states), 1.0 / len(states))
        return cls(cells, cap_weights, sense_offset, vdd, read_gate)


def new_row(
    n: int,
    rng: np.random.Generator,
    params: DeviceParams | None = None,
    mismatch: CapMismatchModel | None = None,
    offset_rel: float = DEFAULT_OFFSET_REL,
    vdd: float = DEFAULT_VDD,
    read_gate: float = DEFAULT_READ_GATE,
) -> PufRow:
    """Fabricate an unregistered row: devices, capacitor weights, static sense offset."""
    if n < 1:
        raise DimensionError(f"row length must be >= 1, got {n}")
    if offset_rel < 0:
        raise ConfigError(f"offset_rel must be >= 0, got {offset_rel}")
    params = params or DeviceParams()
    mismatch = mismatch or CapMismatchModel()
    cells = [new_cell(params, rng) for _ in range(n)]
    weights, clamps = sample_cap_weights(n, mismatch, rng)
    offset = float(rng.uniform(-offset_rel, offset_rel)) * vdd if offset_rel > 0 else 0.0
    return PufRow(cells, weights, offset, vdd, read_gate, cap_clamps=clamps)


def register_row(
    row: PufRow, write_cfg: WriteConfig, rng: np.random.Generator
) -> RegistrationRecord:
    for cell in row.cells:
        register_cell(cell, write_cfg, row.vdd, rng, row.read_gate)
    row.invalidate()
    vx1 = np.array([c.vx1 for c in row.cells])
    vx2 = np.array([c.vx2 for c in row.cells])
    degenerate = sum(c.degenerate for c in row.cells)
    if degenerate:
        warnings.warn(
            f"{degenerate} cell(s) exhausted the tie-resample budget; "
            "is the C2C noise switched off?",
            RuntimeWarning,
            stacklevel=2,
        )
    return RegistrationRecord(
        vx_cycle1=vx1,
        vx_cycle2=vx2,
        delta_vx=vx2 - vx1,
        states=row.states,
        tie_resamples=sum(c.tie_resamples for c in row.cells),
        degenerate=degenerate,
    )


# -------------------------------------------------------------------------- arrays


@dataclass
class PufArray:
    """M rows sharing length and supply; used as an (n, M)-XOR group."""

    rows: list[PufRow]

    def __post_init__(self):
        if not self.rows:
            raise DimensionError("an array needs at least one row")
        n, vdd = self.rows[0].n, self.rows[0].vdd
        if any(r.n != n or r.vdd != vdd for r in self.rows):
            raise DimensionError("all rows of an array must share N and vdd")

    @property
    def n(self) -> int:
        return self.rows[0].n

    @property
    def k(self) -> int:
        return len(self.rows)

    @property
    def vdd(self) -> float:
        return self.rows[0].vdd

    @property
    def registered(self) -> bool:
        return all(r.registered for r in self.rows)

    def responses(self, challenges) -> np.ndarray:
        """XOR of the row responses for each challenge."""
        out = self.rows[0].responses(challenges)
        for row in self.rows[1:]:
            out = out ^ row.responses(challenges)
        return out


def new_array(n: int, m: int, rng: np.random.Generator, **row_kwargs) -> PufArray:
    if m < 1:
        raise DimensionError(f"array needs m >= 1 rows, got {m}")
    return PufArray([new_row(n, rng, **row_kwargs) for _ in range(m)])


def register_array(
    array: PufArray, write_cfg: WriteConfig, rng: np.random.Generator
) -> list[RegistrationRecord]:
    """Register every row on its own child stream (rows are independent jobs)."""
    streams = rng.spawn(array.k)
    return [register_row(row, write_cfg, s) for row, s in zip(array.rows, streams)]


def reconfigure(
    array: PufArray | PufRow, write_cfg: WriteConfig, rng: np.random.Generator
) -> list[RegistrationRecord] | RegistrationRecord:
    """Repeat the full registration on an already registered row or array."""
    if not array.registered:
        raise StateError("reconfigure requires a previously registered PUF")
    if isinstance(array, PufRow):
        return register_row(array, write_cfg, rng)
    return register_array(array, write_cfg, rng)


# ----------------------------------------------------------- single-bit interface


def vsum(row: PufRow, challenge) -> float:
    return float(row.vsums(np.asarray(challenge)[None, :])[0])


def response_bit(row: PufRow, challenge) -> int:
    return int(row.responses(np.asarray(challenge)[None, :])[0])


def ground_truth_bits(states, challenges) -> np.ndarray:
    """Ideal-capacitor, zero-offset responses: 1 iff more than half the cells mismatch."""
    s = np.asarray(states, dtype=np.uint8)
    c = _as_challenges(challenges, len(s))
    hits = np.count_nonzero(c ^ s, axis=1)
    return (2 * hits > len(s)).astype(np.uint8)


def ground_truth_bit(states, challenge) -> int:
    return int(ground_truth_bits(states, np.asarray(challenge)[None, :])[0])


# ------------------------------------------------------------------------- arbiter


def parity_features(challenges) -> np.ndarray:
    """Arbiter parity transform ``phi_i = prod_{j>=i} (1 - 2 c_j)`` with a trailing 1."""
    c = np.atleast_2d(np.asarray(challenges, dtype=np.int8))
    signs = (1 - 2 * c).astype(float)
    phi = np.cumprod(signs[:, ::-1], axis=1)[:, ::-1]
    return np.hstack([phi, np.ones((len(c), 1))])


@dataclass(frozen=True)
class ArbiterPuf:
    """Additive-delay (n, k)-XOR arbiter PUF.

    Each arm outputs 1 when its delay difference ``w . phi`` is negative;
    ties read as 0.  With Gaussian weights this relabelling is
    distribution-preserving and keeps arm bits aligned with the proposed
    PUF's linear form (bit 1 iff linear value < 0).
    """

    weights: np.ndarray  # shape (k, n + 1)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=2)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def responses(self, challenges) -> np.ndarray:
        phi = parity_features(_as_challenges(challenges, self.n))
        arm_bits = (phi @ self.weights.T < 0).astype(np.uint8)
        return np.bitwise_xor.reduce(arm_bits, axis=1)


def new_arbiter(n: int, k: int, rng: np.random.Generator) -> ArbiterPuf:
    if n < 1 or k < 1:
        raise ConfigError(f"arbiter PUF needs n >= 1 and k >= 1, got n={n}, k={k}")
    return ArbiterPuf(rng.normal(0.0, 1.0, size=(k, n + 1)))


def arbiter_response(puf: ArbiterPuf, challenge) -> int:
    return int(puf.responses(np.asarray(challenge)[None, :])[0])


# ---------------------------------------------------------------------------- CRPs


def response_vector(puf, challenges) -> np.ndarray:
    """Responses of a row, an XOR group of rows (``PufArray``) or an arbiter PUF."""
    if isinstance(puf, (PufRow, PufArray)) and not puf.registered:
        raise StateError("PUF must be registered before generating responses")
    return puf.responses(challenges)


def random_challenges(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=(count, n), dtype=np.uint8)


def crp_generate(puf, count: int, rng: np.random.Generator, seed: int = 0) -> CrpSet:
    """Uniform random challenges (with replacement) paired with ``puf``'s responses."""
    if count < 1:
        raise ValueError(f"CRP count must be >= 1, got {count}")
    kind = "arbiter" if isinstance(puf, ArbiterPuf) else "proposed"
    k = puf.k if isinstance(puf, (ArbiterPuf, PufArray)) else 1
    challenges = random_challenges(puf.n, count, rng)
    return CrpSet(challenges, response_vector(puf, challenges), k=k, kind=kind, seed=seed)


def _as_challenges(challenges, n: int) -> np.ndarray:
    c = np.atleast_2d(np.asarray(challenges, dtype=np.uint8))
    if c.ndim != 2 or c.shape[1] != n:
        raise DimensionError(f"expected challenges of length {n}, got shape {c.shape}")
    if c.size and c.max() > 1:
        raise ValueError("challenge bits must be 0 or 1")
    return c


@dataclass(frozen=True)
class PufSetup:
    """Physical configuration shared by every row built for an experiment."""

    params: DeviceParams = field(default_factory=DeviceParams)
    write: WriteConfig = field(default_factory=WriteConfig)
    sigma_c: float = 0.01
    offset_rel: float = DEFAULT_OFFSET_REL
    vdd: float = DEFAULT_VDD
    read_gate: float = DEFAULT_READ_GATE

    def new_row(self, n: int, rng: np.random.Generator) -> PufRow:
        return new_row(n, rng, self.params, CapMismatchModel(self.sigma_c),
                       self.offset_rel, self.vdd, self.read_gate)

    def registered_row(self, n: int, rng: np.random.Generator) -> PufRow:
        row = self.new_row(n, rng)
        register_row(row, self.write, rng)
        return row

    def registered_array(self, n: int, k: int, rng: np.random.Generator) -> PufArray:
        array = PufArray([self.new_row(n, rng) for _ in range(k)])
        register_array(array, self.write, rng)
        return array
