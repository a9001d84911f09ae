"""Experiment runners behind the command-line subcommands.

Each ``run_*`` function takes a validated :class:`ExperimentConfig` and a
root seed, writes its outputs into ``out`` and returns the list of files it
wrote.  Random streams are derived from the root seed by name, so every
output is a pure function of (config, seed).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import attack, metrics
from . import puf as pf
from .config import ExperimentConfig
from .crp import atomic_write
from .errors import ConfigError
from .rng import derive_rng

SWEEP_AXES = ("pulse", "temperature", "size", "sigma_c", "challenge_length")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


# -------------------------------------------------------------------- register


def run_register(cfg: ExperimentConfig, seed: int, out: Path) -> list[Path]:
    """Register an N x M array ``register_runs`` times; dump dVx traces and state maps."""
    setup = cfg.puf_setup()
    n, m = cfg.array.n, cfg.array.m
    array = pf.PufArray([setup.new_row(n, derive_rng(seed, "register", "fab", r)) for r in range(m)])
    rng = derive_rng(seed, "register", "runs")
    trace, states = [], []
    for run in range(cfg.experiment.register_runs):
        for r, rec in enumerate(pf.register_array(array, setup.write, rng)):
            for i, vx1, vx2, dvx, s in rec.rows():
                trace.append([run, r, i, _num(vx1), _num(vx2), _num(dvx), s])
            states.append([run, r, *rec.states.tolist()])
    return [
        atomic_write(out / "registration.csv", _csv(
            ["registration", "row", "cell_index", "vx1", "vx2", "delta_vx", "state"], trace)),
        atomic_write(out / "state_map.csv", _csv(
            ["registration", "row", *(f"cell{i}" for i in range(n))], states)),
    ]


# --------------------------------------------------------------------- metrics


def compute_metrics(cfg: ExperimentConfig, seed: int, tag: str = "metrics", run=()):
    """The full measurement protocol on one simulated row.

    * ``registrations`` registrations of one row, each answering the same
      challenge set -> uniformity, entropy, HD across registrations;
    * ``instances`` freshly fabricated rows -> HD across instances, flip chance;
    * ``reconfigurations`` successive reconfigurations -> reconfigure HD and
      response correlation;
    * ``repeats`` regenerations of a frozen row -> temporal bit error rate.

    Fabrication (devices, capacitors, offsets) and challenges draw from
    streams keyed by ``tag`` only; every write operation draws from streams
    keyed by ``(tag, *run)``.  Sweeps pass a distinct ``run`` per point so
    the same simulated hardware is re-measured with fresh C2C noise.

    Returns ``(report, tables)`` where ``tables`` holds the arrays behind
    the CSV outputs.
    """
    e, n = cfg.experiment, cfg.array.n
    setup = cfg.puf_setup()
    challenges = pf.random_challenges(n, e.challenges, derive_rng(seed, tag, "challenges"))

    row = setup.new_row(n, derive_rng(seed, tag, "fab"))
    rng = derive_rng(seed, tag, *run, "registrations")
    reg_bits, ties = [], 0
    for _ in range(e.registrations):
        pf.register_row(row, setup.write, rng)
        reg_bits.append(row.responses(challenges))
        ties += row.tie_count(challenges)
    reg = metrics.ResponseMatrix(np.array(reg_bits), [f"reg{i}" for i in range(e.registrations)])

    hw = metrics.hamming_weight(reg)
    entropy = metrics.bitwise_entropy(reg)
    hd_mean, hd_std, hd_hist = metrics.hd_inter(reg)

    flip_ch = pf.random_challenges(n, e.flip_challenges, derive_rng(seed, tag, "flip-challenges"))
    inst_bits, flips = [], []
    for i in range(e.instances):
        inst = setup.new_row(n, derive_rng(seed, tag, "instance", i))
        pf.register_row(inst, setup.write, derive_rng(seed, tag, *run, "instance-writes", i))
        inst_bits.append(inst.responses(challenges))
        ties += inst.tie_count(challenges)
        flips.append(metrics.flip_chance(inst, flip_ch))
    inst_mean, inst_std, inst_hist = metrics.hd_inter(np.array(inst_bits))

    rng = derive_rng(seed, tag, *run, "reconfigurations")
    rec_bits = []
    for _ in range(e.reconfigurations):
        pf.reconfigure(row, setup.write, rng)
        rec_bits.append(row.responses(challenges))
    rec_bits = np.array(rec_bits)
    rc_mean, rc_std, rc_d = metrics.hd_reconfigure_series([b[None, :] for b in rec_bits])
    corr = metrics.correlation_matrix(rec_bits)

    ber = metrics.reliability(row, challenges, e.repeats)

    report = metrics.MetricsReport(
        hw=hw,
        entropy_per_bit=entropy.tolist(),
        hd_inter_mean=hd_mean,
        hd_inter_std=hd_std,
        hd_reconf_mean=rc_mean,
        hd_reconf_std=rc_std,
        corr_max_offdiag=metrics.max_offdiag_abs(corr),
        reliability_bit_error_rate=ber,
        flip_chance=float(np.mean(flips)),
        tie_count=ties,
        extra={"hd_instances_mean": inst_mean, "hd_instances_std": inst_std},
    )
    tables = {
        "entropy": entropy,
        "column_mean": reg.bits.mean(axis=0),
        "hd_inter_hist": hd_hist,
        "hd_instances_hist": inst_hist,
        "hd_reconf_hist": metrics.histogram(rc_d),
        "correlation": corr,
        "responses": reg.bits,
    }
    return report, tables


def _hist_csv(hist) -> str:
    counts, edges = hist
    return _csv(["bin_low", "bin_high", "count"],
                [[_num(edges[i]), _num(edges[i + 1]), int(c)] for i, c in enumerate(counts)])


def _json_safe(obj):
    # undefined statistics (NaN) become null
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def run_metrics(cfg: ExperimentConfig, seed: int, out: Path) -> list[Path]:
    report, t = compute_metrics(cfg, seed)
    flat = report.flat()
    corr = t["correlation"]
    return [
        atomic_write(out / "metrics.txt", report.to_text()),
        atomic_write(out / "metrics.json", json.dumps(
            _json_safe({**flat, "entropy_per_bit": report.entropy_per_bit}), indent=2) + "\n"),
        atomic_write(out / "entropy.csv", _csv(
            ["bit_index", "p_one", "entropy"],
            [[j, _num(p), _num(h)] for j, (p, h) in enumerate(zip(t["column_mean"], t["entropy"]))])),
        atomic_write(out / "hd_inter_hist.csv", _hist_csv(t["hd_inter_hist"])),
        atomic_write(out / "hd_instances_hist.csv", _hist_csv(t["hd_instances_hist"])),
        atomic_write(out / "hd_reconf_hist.csv", _hist_csv(t["hd_reconf_hist"])),
        atomic_write(out / "correlation.csv", _csv(
            ["reconfiguration", *(f"r{j}" for j in range(len(corr)))],
            [[i, *(_num(v) for v in corr[i])] for i in range(len(corr))])),
    ]


# ----------------------------------------------------------------------- sweep


def sweep_configs(cfg: ExperimentConfig, axis: str):
    """Yield ``(axis_value, config)`` for every point of a robustness sweep."""
    s = cfg.sweep
    if axis == "pulse":
        for v in s.pulses:
            yield v, cfg.replace("device", pulse_amplitude=float(v))
    elif axis == "temperature":
        for v in s.temperatures:
            yield v, cfg.replace("device", temperature=float(v))
    elif axis == "size":
        for v in s.sizes:
            yield v, cfg.replace("device", size_profile=v)
    elif axis == "sigma_c":
        for v in s.sigma_cs:
            yield v, cfg.replace("array", sigma_c=float(v))
    elif axis == "challenge_length":
        for v in s.challenge_lengths:
            yield v, cfg.replace("array", n=int(v))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def compute_sweep(cfg: ExperimentConfig, seed: int, axis: str) -> list[tuple]:
    """Rows ``(axis, value, statistic, result)``.

    Every sweep point shares the fabricated devices and challenge set (one
    physical array re-measured) but gets its own write noise.
    """
    rows = []
    for value, sub in sweep_configs(cfg, axis):
        report, _ = compute_metrics(sub, seed, tag="sweep", run=(axis, value))
        for stat, result in report.flat().items():
            rows.append((axis, value, stat, result))
    return rows


def run_sweep(cfg: ExperimentConfig, seed: int, out: Path, axis: str) -> list[Path]:
    rows = [[a, v, s, _num(r) if isinstance(r, float) else r] for a, v, s, r in
            compute_sweep(cfg, seed, axis)]
    return [atomic_write(out / f"sweep_{axis}.csv", _csv(["axis", "value", "statistic", "result"], rows))]


# ---------------------------------------------------------------------- attack


PROGRESS_FILE = "attack_progress.jsonl"


def _attack_fingerprint(cfg: ExperimentConfig, seed: int) -> str:
    payload = json.dumps({"seed": seed, "attack": cfg.to_dict()["attack"],
                          "device": cfg.to_dict()["device"], "array": cfg.to_dict()["array"]},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _load_progress(path: Path, fingerprint: str) -> dict:
    if not path.exists():
        return {}
    lines = path.read_text().splitlines()
    if not lines or json.loads(lines[0]).get("fingerprint") != fingerprint:
        return {}
    done = {}
    for line in lines[1:]:
        try:
            rec = attack.record_from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError):
            break  # truncated tail from an interrupted run
        done[rec.key] = rec
    return done


def run_attack(cfg: ExperimentConfig, seed: int, out: Path) -> list[Path]:
    """Accuracy maps (and optional length sweep) for every configured target.

    Finished cells are appended to ``attack_progress.jsonl``; re-running the
    same (config, seed) into the same directory skips them.
    """
    a = cfg.attack
    out.mkdir(parents=True, exist_ok=True)
    progress = out / PROGRESS_FILE
    fp = _attack_fingerprint(cfg, seed)
    done = _load_progress(progress, fp)
    if not done:
        progress.write_text(json.dumps({"fingerprint": fp}) + "\n")

    def log(rec):
        with progress.open("a") as fh:
            fh.write(json.dumps(attack.record_to_dict(rec)) + "\n")

    common = dict(seed=seed, test_size=a.test_size, rprop=cfg.rprop(), setup=cfg.puf_setup(),
                  workers=a.workers, done=done, on_record=log)
    amap, lsweep = [], []
    for kind in a.targets:
        amap += attack.accuracy_map(kind, a.n, a.ks, a.train_sizes, a.trials, **common)
        if a.lengths:
            lsweep += attack.length_sweep(kind, a.lengths, a.ks, a.train_sizes, a.trials, **common)

    thresholds = [[kind, a.n, k, attack.crp_threshold(amap, kind, a.n, k) or ""]
                  for kind in a.targets for k in a.ks]
    files = [
        atomic_write(out / "accuracy_map.csv", attack.records_to_csv(amap)),
        atomic_write(out / "attack_thresholds.csv",
                     _csv(["kind", "n", "k", "threshold_train_size_90"], thresholds)),
    ]
    if lsweep:
        files.append(atomic_write(out / "length_sweep.csv", attack.records_to_csv(lsweep)))
    files.append(progress)
    return files


# -------------------------------------------------------------------- gen-crps


def make_crps(cfg: ExperimentConfig, seed: int):
    c = cfg.crps
    inst_rng = derive_rng(seed, "crps", "instance")
    if c.kind == "arbiter":
        target = pf.new_arbiter(c.n, c.k, inst_rng)
    else:
        target = cfg.puf_setup().registered_array(c.n, c.k, inst_rng)
    return pf.crp_generate(target, c.count, derive_rng(seed, "crps", "challenges"), seed=seed)


def run_gen_crps(cfg: ExperimentConfig, seed: int, out: Path) -> list[Path]:
    return [make_crps(cfg, seed).save(out / "crps.txt")]
