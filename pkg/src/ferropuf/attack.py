"""Logistic-regression modeling attack on (n, k)-XOR PUFs, trained with RProp.

Both PUF kinds reduce to thresholded linear functions of a feature vector:

* proposed PUF: ``x_i = 1 - 2 c_i`` (plus a constant 1), since a row with
  states ``s_i = 1 - 2 S_i`` answers 1 iff ``sum_i w_i s_i x_i`` (+ offset
  term) is negative;
* arbiter PUF: the parity transform ``phi_i = prod_{j >= i} (1 - 2 c_j)``.

An XOR of k such bits is 1 iff the product of the k linear values is
negative, so the model is ``P(bit = 1) = logistic(-prod_j w_j . phi)``.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .crp import CrpSet
from .errors import ConfigError, DimensionError
from .puf import PufSetup, crp_generate, new_arbiter, parity_features
from .rng import derive_rng, derive_seed

FEATURE_KINDS = ("proposed", "arbiter")
CSV_COLUMNS = ("kind", "n", "k", "train_size", "trial", "train_acc", "test_acc", "epochs")


def feature_map(challenges, kind: str) -> np.ndarray:
    """Map 0/1 challenges of shape (m, n) to real features of shape (m, n + 1)."""
    c = np.atleast_2d(np.asarray(challenges, dtype=np.uint8))
    if kind == "arbiter":
        return parity_features(c)
    if kind == "proposed":
        return np.hstack([1.0 - 2.0 * c, np.ones((len(c), 1))])
    raise ValueError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")


def to_signs(bits) -> np.ndarray:
    """0/1 responses to the +1/-1 encoding (bit 1 -> -1)."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


@dataclass
class XorModel:
    weights: np.ndarray  # (k, n + 1)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float, ndmin=2)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def _check(self, features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        if f.shape[1] != self.dim:
            raise DimensionError(f"model expects {self.dim} features, got {f.shape[1]}")
        return f

    def predict(self, features) -> np.ndarray:
        return kernels.xor_predict(self._check(features), self.weights)


def arm_product(model: XorModel, features) -> np.ndarray:
    return (model._check(features) @ model.weights.T).prod(axis=1)


def model_forward(model: XorModel, features) -> np.ndarray:
    """Probability that the response bit is 1."""
    return expit(-arm_product(model, features))


def loss_and_gradient(model: XorModel, features, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to ``model.weights``."""
    labels = np.asarray(labels)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    loss, grad, _ = kernels.xor_loss_grad(model._check(features), to_signs(labels), model.weights)
    return loss, grad


@dataclass(frozen=True)
class RpropConfig:
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_init: float = 0.1
    delta_min: float = 1e-6
    delta_max: float = 50.0
    max_epochs: int = 2000
    patience: int = 50
    restarts: int = 10

    def __post_init__(self):
        if not 0 < self.eta_minus < 1 < self.eta_plus:
            raise ConfigError("need 0 < eta_minus < 1 < eta_plus")
        if not 0 < self.delta_min < self.delta_init < self.delta_max:
            raise ConfigError("need 0 < delta_min < delta_init < delta_max")
        if self.max_epochs < 1 or self.patience < 1 or self.restarts < 1:
            raise ConfigError("max_epochs, patience and restarts must be >= 1")


@dataclass
class TrainReport:
    train_accuracy: float
    test_accuracy: float | None
    epochs_used: int
    restart_index_chosen: int
    training_set_size: int
    k: int
    n: int
    restart_train_accuracies: list[float] = field(default_factory=list)


def train_rprop(
    crps: CrpSet,
    k: int,
    cfg: RpropConfig,
    rng: np.random.Generator,
    kind: str | None = None,
) -> tuple[XorModel, TrainReport]:
    """Fit a k-arm model with ``cfg.restarts`` random initializations.

    Each restart draws weights from N(0, 1) and runs full-batch RProp; the
    restart with the highest training accuracy wins (earliest on ties).
    """
    if len(crps) == 0:
        raise ValueError("empty training set")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    phi = feature_map(crps.challenges, kind or crps.kind)
    signs = to_signs(crps.responses)
    best = None
    accs = []
    for r in range(cfg.restarts):
        w0 = rng.normal(0.0, 1.0, size=(k, phi.shape[1]))
        w, correct, epochs, _ = kernels.rprop_fit(
            phi, signs, w0, cfg.eta_plus, cfg.eta_minus, cfg.delta_init,
            cfg.delta_min, cfg.delta_max, cfg.max_epochs, cfg.patience,
        )
        accs.append(correct / len(signs))
        if best is None or correct > best[1]:
            best = (w, correct, epochs, r)
    w, correct, epochs, r = best
    report = TrainReport(
        train_accuracy=correct / len(signs),
        test_accuracy=None,
        epochs_used=epochs,
        restart_index_chosen=r,
        training_set_size=len(crps),
        k=k,
        n=crps.n,
        restart_train_accuracies=accs,
    )
    return XorModel(w), report


def evaluate(model: XorModel, test: CrpSet, kind: str | None = None) -> float:
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = model.predict(feature_map(test.challenges, kind or test.kind))
    return float(np.mean(pred == test.responses))


# ------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class AttackRecord:
    kind: str
    n: int
    k: int
    train_size: int
    trial: int
    train_acc: float
    test_acc: float
    epochs: int

    @property
    def key(self) -> tuple:
        return (self.kind, self.n, self.k, self.train_size, self.trial)


@dataclass(frozen=True)
class CellJob:
    kind: str
    n: int
    k: int
    train_size: int
    trial: int
    seed: int
    test_size: int
    rprop: RpropConfig
    setup: PufSetup

    @property
    def key(self) -> tuple:
        return (self.kind, self.n, self.k, self.train_size, self.trial)


def make_target(kind: str, n: int, k: int, rng: np.random.Generator, setup: PufSetup):
    """A fresh (n, k)-XOR instance of either PUF kind."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if kind == "arbiter":
        return new_arbiter(n, k, rng)
    if kind == "proposed":
        return setup.registered_array(n, k, rng)
    raise ConfigError(f"unknown target kind {kind!r}")


def run_cell(job: CellJob) -> AttackRecord:
    """One (kind, n, k, train size, trial) attack.

    The PUF instance and test set depend only on (kind, n, k, trial), so the
    training sizes of one trial attack the same instance.
    """
    base = ("attack", job.kind, job.n, job.k, job.trial)
    puf = make_target(job.kind, job.n, job.k, derive_rng(job.seed, *base, "instance"), job.setup)
    crp_seed = derive_seed(job.seed, *base)
    test = crp_generate(puf, job.test_size, derive_rng(job.seed, *base, "test"), seed=crp_seed)
    train = crp_generate(puf, job.train_size, derive_rng(job.seed, *base, "train", job.train_size),
                         seed=crp_seed)
    model, report = train_rprop(train, job.k, job.rprop,
                                derive_rng(job.seed, *base, "fit", job.train_size))
    return AttackRecord(job.kind, job.n, job.k, job.train_size, job.trial,
                        report.train_accuracy, evaluate(model, test), report.epochs_used)


def sweep(jobs, workers: int = 1, done=None, on_record=None) -> list[AttackRecord]:
    """Run cell jobs, skipping keys already in ``done``; result order is by key."""
    done = dict(done or {})
    todo = [j for j in jobs if j.key not in done]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(run_cell, todo):
                done[rec.key] = rec
                if on_record:
                    on_record(rec)
    else:
        for job in todo:
            rec = run_cell(job)
            done[rec.key] = rec
            if on_record:
                on_record(rec)
    keys = sorted({j.key for j in jobs})
    return [done[key] for key in keys]


def _jobs(kinds, ns, ks, sizes, trials, seed, test_size, rprop, setup):
    for kind in kinds:
        if kind not in FEATURE_KINDS:
            raise ConfigError(f"unknown target kind {kind!r}")
        for n in ns:
            for k in ks:
                if k < 1:
                    raise ConfigError(f"k must be >= 1, got {k}")
                for size in sizes:
                    for trial in range(trials):
                        yield CellJob(kind, n, k, size, trial, seed, test_size, rprop, setup)


def accuracy_map(
    kind: str,
    n: int,
    ks,
    sizes,
    trials: int = 1,
    seed: int = 0,
    test_size: int = 10_000,
    rprop: RpropConfig = RpropConfig(),
    setup: PufSetup = PufSetup(),
    workers: int = 1,
    done=None,
    on_record=None,
) -> list[AttackRecord]:
    """Test accuracy over a (k, training size) grid for one PUF kind."""
    if not list(ks) or not list(sizes) or trials < 1:
        raise ConfigError("k range, size range and trials must be nonempty")
    jobs = list(_jobs([kind], [n], ks, sizes, trials, seed, test_size, rprop, setup))
    return sweep(jobs, workers, done, on_record)


def length_sweep(
    kind: str,
    ns,
    ks,
    sizes,
    trials: int = 1,
    seed: int = 0,
    test_size: int = 10_000,
    rprop: RpropConfig = RpropConfig(),
    setup: PufSetup = PufSetup(),
    workers: int = 1,
    done=None,
    on_record=None,
) -> list[AttackRecord]:
    """``accuracy_map`` with the challenge length varying as well."""
    if not list(ns) or not list(ks) or not list(sizes) or trials < 1:
        raise ConfigError("length, k and size ranges must be nonempty")
    jobs = list(_jobs([kind], ns, ks, sizes, trials, seed, test_size, rprop, setup))
    return sweep(jobs, workers, done, on_record)


def summarize(records) -> dict[tuple, tuple[float, float]]:
    """(kind, n, k, train_size) -> (mean, max) test accuracy over trials."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.kind, r.n, r.k, r.train_size), []).append(r.test_acc)
    return {key: (float(np.mean(v)), float(np.max(v))) for key, v in sorted(groups.items())}


def crp_threshold(records, kind: str, n: int, k: int, level: float = 0.9) -> int | None:
    """Smallest training size whose mean test accuracy exceeds ``level``."""
    for (kd, nn, kk, size), (mean, _) in summarize(records).items():
        if (kd, nn, kk) == (kind, n, k) and mean > level:
            return size
    return None


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.kind, r.n, r.k, r.train_size, r.trial,
                    repr(r.train_acc), repr(r.test_acc), r.epochs])
    return buf.getvalue()


def record_from_dict(d: dict) -> AttackRecord:
    return AttackRecord(**{f: d[f] for f in CSV_COLUMNS})


def record_to_dict(r: AttackRecord) -> dict:
    return asdict(r)
