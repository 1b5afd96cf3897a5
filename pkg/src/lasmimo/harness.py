"""Monte-Carlo experiment driver: BER sweeps, references, result files.

Trials are independent units keyed by ``(seed, snr index, trial
index)``; every random draw inside a trial comes from the stream
derived from that key, so results are reproducible bit for bit and
independent of how trials are sharded across workers.  Trials run in
fixed-size batches and the stopping rule is evaluated on batch
boundaries, which keeps stopping decisions deterministic too.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
from scipy.stats import norm

from .channel import SnrModel, draw_channel, make_frame, qam_symbol_energy, transmit
from .detector import DetectorConfig, initial_solution, mlas_detect
from .estimation import iterative_detect_estimate
from .modulation import SignalSet, pam_alphabet
from .stbc import CdaCode, encode
from .system import build_real_system

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "BerRecord",
    "PairedRecord",
    "run_ber_sweep",
    "run_paired_sweep",
    "siso_awgn_reference",
    "emit_results",
    "trial_rng",
]

CSV_FIELDS = ["snr_db", "bits", "errors", "ber", "ci95",
              "mean_stages", "mean_flips", "wall_ms"]


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists offending fields."""


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "ill-only"        # 'ill-only' | 'fd-ill'
    n_t: int = 4
    n_r: int = 4
    qam_order: int = 4
    snr_db: tuple = (8.0,)
    filter_kind: str = "mmse"
    m_max: int = 1                   # 0 = quantized filter output only (no search)
    csir: str = "perfect"            # 'perfect' | 'one-shot' | 'iterative'
    est_iters: int = 4               # re-estimation rounds for 'iterative'
    n_d: int = 0                     # data matrices per frame; 0 = one matrix, fresh fade
    beta_p: float = 1.0
    beta_d: float = 1.0
    min_errors: int = 200
    max_bits: int = 2_000_000
    seed: int = 0
    workers: int = 1
    batch_trials: int = 64

    def validate(self) -> None:
        problems = []
        if self.variant not in ("ill-only", "fd-ill"):
            problems.append(f"variant: unknown value {self.variant!r}")
        if self.n_t < 1:
            problems.append("n_t: must be >= 1")
        if self.n_r < 1:
            problems.append("n_r: must be >= 1")
        root = int(round(math.sqrt(self.qam_order)))
        if self.qam_order < 4 or root * root != self.qam_order or root & (root - 1):
            problems.append(f"qam_order: {self.qam_order} is not a square power-of-two QAM order")
        if len(self.snr_db) == 0:
            problems.append("snr_db: empty grid")
        elif any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            problems.append("snr_db: grid must be strictly increasing")
        if self.filter_kind not in ("mf", "zf", "mmse"):
            problems.append(f"filter_kind: unknown value {self.filter_kind!r}")
        if self.m_max < 0:
            problems.append("m_max: must be >= 0")
        if self.csir not in ("perfect", "one-shot", "iterative"):
            problems.append(f"csir: unknown value {self.csir!r}")
        if self.csir != "perfect" and self.n_d < 1:
            problems.append("n_d: estimated-CSIR runs need n_d >= 1")
        if self.m_max == 0 and (self.csir != "perfect" or self.n_d != 0):
            problems.append("m_max: filter-only baseline only supported for "
                            "single-matrix perfect-CSIR runs")
        if self.est_iters < 0:
            problems.append("est_iters: must be >= 0")
        if self.min_errors <= 0:
            problems.append("min_errors: must be positive")
        if self.max_bits <= 0:
            problems.append("max_bits: must be positive")
        if self.workers < 1:
            problems.append("workers: must be >= 1")
        if self.batch_trials < 1:
            problems.append("batch_trials: must be >= 1")
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))

    def code(self) -> CdaCode:
        return CdaCode.fd_ill(self.n_t) if self.variant == "fd-ill" else \
            CdaCode.ill_only(self.n_t)

    def signal_set(self) -> SignalSet:
        return pam_alphabet(int(round(math.sqrt(self.qam_order))))

    def snr_model(self, gamma: float) -> SnrModel:
        es = self.n_t * qam_symbol_energy(self.qam_order)
        return SnrModel(gamma=gamma, es=es, n_t=self.n_t, beta_p=self.beta_p,
                        beta_d=self.beta_d, n_d=self.n_d)


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    bits: int
    errors: int
    ber: float
    ci95: float
    mean_stages: float
    mean_flips: float
    wall_ms: float

    @classmethod
    def from_counts(cls, snr_db, bits, errors, stage_sum, flip_sum, detections, wall_ms):
        ber = errors / bits if bits else 0.0
        ci = 1.96 * math.sqrt(max(ber * (1.0 - ber), 0.0) / bits) if bits else 0.0
        return cls(snr_db=float(snr_db), bits=int(bits), errors=int(errors),
                   ber=float(ber), ci95=float(ci),
                   mean_stages=float(stage_sum / detections) if detections else 0.0,
                   mean_flips=float(flip_sum / detections) if detections else 0.0,
                   wall_ms=float(wall_ms))


def trial_rng(seed: int, *path: int) -> np.random.Generator:
    """Deterministic per-trial stream, independent of sharding."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path)))


def _bit_distance_table(sset: SignalSet) -> np.ndarray:
    lab = sset.labels.astype(np.int64)
    return np.sum(lab[:, None, :] != lab[None, :, :], axis=2)


def _draw_block_symbols(sset: SignalSet, k: int, rng) -> np.ndarray:
    m = sset.order
    ii = rng.integers(0, m, k)
    qq = rng.integers(0, m, k)
    return sset.levels[ii] + 1j * sset.levels[qq], np.concatenate([ii, qq])


def _detect_indices(d_real: np.ndarray, sset: SignalSet) -> np.ndarray:
    return sset.indices_of(d_real)


def _iid_trial(cfg: ExperimentConfig, gamma: float, rng) -> tuple:
    """One STBC matrix over a fresh fade, perfect CSIR."""
    code = cfg.code()
    sset = cfg.signal_set()
    snr = cfg.snr_model(gamma)
    h_c = draw_channel(cfg.n_r, cfg.n_t, rng)
    sym_c, true_idx = _draw_block_symbols(sset, code.k, rng)
    y_c = transmit(encode(sym_c, code), h_c, snr, "data", rng)
    system = build_real_system(h_c, code).bind(y_c)
    if cfg.m_max == 0:
        init = initial_solution(system, sset, gamma=snr.gamma_d,
                                filter_kind=cfg.filter_kind)
        d, stages, flips = init.d, 0, 0
    else:
        det_cfg = DetectorConfig(filter_kind=cfg.filter_kind, m_max=cfg.m_max)
        d, stats = mlas_detect(system, sset, gamma=snr.gamma_d, config=det_cfg)
        stages, flips = stats.stages, stats.flips
    dist = _bit_distance_table(sset)
    det_idx = _detect_indices(d, sset)
    errors = int(np.sum(dist[true_idx, det_idx]))
    bits = 2 * code.k * sset.bits_per_symbol
    return errors, bits, stages, flips, 1


def _frame_trial(cfg: ExperimentConfig, gamma: float, rng) -> tuple:
    """One pilot+data frame under block fading; CSIR mode per config."""
    code = cfg.code()
    sset = cfg.signal_set()
    snr = cfg.snr_model(gamma)
    h_c = draw_channel(cfg.n_r, cfg.n_t, rng)
    blocks = []
    idx = []
    for _ in range(cfg.n_d):
        sym_c, ti = _draw_block_symbols(sset, code.k, rng)
        blocks.append(sym_c)
        idx.append(ti)
    frame = make_frame(blocks, code, snr, h_c, rng)
    det_cfg = DetectorConfig(filter_kind=cfg.filter_kind, m_max=cfg.m_max)
    dist = _bit_distance_table(sset)
    errors = 0
    stages = 0
    flips = 0
    if cfg.csir == "perfect":
        system = build_real_system(h_c, code)
        for i in range(cfg.n_d):
            bound = system.bind(frame.received_data(i))
            d, st = mlas_detect(bound, sset, gamma=snr.gamma_d, config=det_cfg)
            errors += int(np.sum(dist[idx[i], _detect_indices(d, sset)]))
            stages += st.stages
            flips += st.flips
        detections = cfg.n_d
    else:
        iters = cfg.est_iters if cfg.csir == "iterative" else 0
        _, detected_c, diag = iterative_detect_estimate(frame, code, sset, snr,
                                                        iters=iters, det_cfg=det_cfg)
        for i in range(cfg.n_d):
            di = np.concatenate([detected_c[i].real, detected_c[i].imag])
            errors += int(np.sum(dist[idx[i], _detect_indices(di, sset)]))
        for st in diag[-1]["detector_stats"]:
            stages += st.stages
            flips += st.flips
        detections = cfg.n_d
    bits = cfg.n_d * 2 * code.k * sset.bits_per_symbol
    return errors, bits, stages, flips, detections


def _run_trials(cfg: ExperimentConfig, snr_idx: int, trial_indices: Sequence[int]):
    gamma = 10.0 ** (cfg.snr_db[snr_idx] / 10.0)
    out = []
    for t in trial_indices:
        rng = trial_rng(cfg.seed, snr_idx, t)
        if cfg.csir == "perfect" and cfg.n_d == 0:
            out.append(_iid_trial(cfg, gamma, rng))
        else:
            out.append(_frame_trial(cfg, gamma, rng))
    return out


@dataclass(frozen=True)
class PairedRecord:
    """Per-SNR-point comparison of two configs on identical trial streams."""

    snr_db: float
    ber_a: float
    ber_b: float
    diff: float                      # ber_a - ber_b
    diff_ci95: float                 # 1.96 * SE of the paired per-trial difference
    ci95_a: float                    # binomial CIs of the individual runs
    ci95_b: float
    trials: int
    bits: int


def run_paired_sweep(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig,
                     min_errors: int = None) -> List[PairedRecord]:
    """Compare two configs trial by trial on shared channel/noise streams.

    Both configs must share seed, grid, dimensions and frame shape so
    that trial ``t`` sees identical random draws under either config.
    The difference CI comes from the empirical per-trial differences
    (cluster-robust over trials), which stays honest when frame error
    counts are bursty and the binomial CI of each run is too tight.
    """
    cfg_a.validate()
    cfg_b.validate()
    if cfg_a.seed != cfg_b.seed or cfg_a.snr_db != cfg_b.snr_db:
        raise ConfigError("paired sweep needs matching seed and snr_db grids")
    target = min_errors if min_errors is not None else cfg_a.min_errors
    out = []
    for si in range(len(cfg_a.snr_db)):
        err_a = []
        err_b = []
        bits = 0
        next_trial = 0
        while sum(err_a) < target and bits < cfg_a.max_bits:
            batch = list(range(next_trial, next_trial + cfg_a.batch_trials))
            next_trial += cfg_a.batch_trials
            res_a = _run_trials(cfg_a, si, batch)
            res_b = _run_trials(cfg_b, si, batch)
            for (ea, ba, *_), (eb, bb, *_) in zip(res_a, res_b):
                if ba != bb:
                    raise ConfigError("paired configs produced different bit counts")
                err_a.append(ea)
                err_b.append(eb)
                bits += ba
        per_trial_bits = bits // len(err_a)
        diffs = (np.asarray(err_a) - np.asarray(err_b)) / per_trial_bits
        n = len(diffs)
        se = float(np.std(diffs, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        ber_a = sum(err_a) / bits
        ber_b = sum(err_b) / bits
        ci = lambda p: 1.96 * math.sqrt(max(p * (1 - p), 0.0) / bits)
        out.append(PairedRecord(snr_db=float(cfg_a.snr_db[si]), ber_a=ber_a,
                                ber_b=ber_b, diff=ber_a - ber_b,
                                diff_ci95=1.96 * se, ci95_a=ci(ber_a),
                                ci95_b=ci(ber_b), trials=n, bits=bits))
    return out


def run_ber_sweep(cfg: ExperimentConfig, record_timing: bool = True) -> List[BerRecord]:
    """Simulate every SNR point until the stopping rule triggers.

    Deterministic for a given config and seed (modulo ``wall_ms``,
    which is zeroed when ``record_timing`` is false).
    """
    cfg.validate()
    records = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for si in range(len(cfg.snr_db)):
            t0 = time.perf_counter()
            errors = bits = detections = 0
            stage_sum = flip_sum = 0
            next_trial = 0
            while errors < cfg.min_errors and bits < cfg.max_bits:
                batch = list(range(next_trial, next_trial + cfg.batch_trials))
                next_trial += cfg.batch_trials
                if pool is None:
                    results = _run_trials(cfg, si, batch)
                else:
                    shards = [batch[w::cfg.workers] for w in range(cfg.workers)]
                    futures = [pool.submit(_run_trials, cfg, si, s) for s in shards]
                    merged = {}
                    for shard, fut in zip(shards, futures):
                        for t, res in zip(shard, fut.result()):
                            merged[t] = res
                    results = [merged[t] for t in batch]
                for e, b, st, fl, det in results:
                    errors += e
                    bits += b
                    stage_sum += st
                    flip_sum += fl
                    detections += det
            wall = (time.perf_counter() - t0) * 1e3 if record_timing else 0.0
            records.append(BerRecord.from_counts(cfg.snr_db[si], bits, errors,
                                                 stage_sum, flip_sum, detections, wall))
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def siso_awgn_reference(qam_order: int, snr_db: Sequence[float]) -> np.ndarray:
    """Exact Gray-coded M-QAM bit error probability on the AWGN channel.

    Uses the same receive-SNR convention as the simulator: per-symbol
    complex SNR gamma, one PAM rail per real dimension, nearest-level
    decisions.  The result is an array matching ``snr_db``.
    """
    root = int(round(math.sqrt(qam_order)))
    if root * root != qam_order or root < 2 or root & (root - 1):
        raise ValueError(f"unsupported modulation order {qam_order}")
    sset = pam_alphabet(root)
    levels = sset.levels
    m = sset.order
    kbits = sset.bits_per_symbol
    ex = 2.0 * float(np.mean(levels**2))
    boundaries = 0.5 * (levels[1:] + levels[:-1])
    out = np.zeros(len(snr_db))
    for idx, sdb in enumerate(snr_db):
        gamma = 10.0 ** (sdb / 10.0)
        s = math.sqrt(ex / (2.0 * gamma))    # per-rail noise std
        lo = np.concatenate([[-np.inf], boundaries])
        hi = np.concatenate([boundaries, [np.inf]])
        total = 0.0
        for a_idx in range(m):
            p_region = norm.cdf((hi - levels[a_idx]) / s) - \
                norm.cdf((lo - levels[a_idx]) / s)
            bit_diff = np.sum(sset.labels != sset.labels[a_idx], axis=1)
            total += float(p_region @ bit_diff)
        out[idx] = total / (m * kbits)
    return out


def _record_rows(records: Sequence[BerRecord]):
    for r in records:
        yield [repr(getattr(r, f)) for f in CSV_FIELDS]


def _write_csv(records: Sequence[BerRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for row in _record_rows(records):
            w.writerow(row)


def parse_csv(path) -> List[BerRecord]:
    """Read back a results CSV written by :func:`emit_results`."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(BerRecord(snr_db=float(row["snr_db"]), bits=int(row["bits"]),
                             errors=int(row["errors"]), ber=float(row["ber"]),
                             ci95=float(row["ci95"]),
                             mean_stages=float(row["mean_stages"]),
                             mean_flips=float(row["mean_flips"]),
                             wall_ms=float(row["wall_ms"])))
    return out


def _plot_curves(curves: Mapping[str, Sequence[BerRecord]], path: Path) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for name, records in curves.items():
        x = [r.snr_db for r in records]
        y = [max(r.ber, 1e-12) for r in records]
        ax.semilogy(x, y, marker="o", label=name)
    ax.set_xlabel("average received SNR per receive antenna (dB)")
    ax.set_ylabel("uncoded BER")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_results(records: Union[Sequence[BerRecord], Mapping[str, Sequence[BerRecord]]],
                 fmt: str, out: Union[str, Path]) -> List[Path]:
    """Persist sweep results.

    ``fmt='csv'`` / ``'json'`` write a single file for one record list.
    ``fmt='plot-data'`` takes a mapping of curve name -> records and
    writes one series CSV per curve plus a combined SVG plot; a plain
    record list is treated as one unnamed curve.
    """
    if isinstance(records, Mapping):
        curves: Dict[str, Sequence[BerRecord]] = dict(records)
    else:
        curves = {"curve": list(records)}
    if not curves or any(len(v) == 0 for v in curves.values()):
        raise ValueError("refusing to emit empty record list")
    out = Path(out)
    written = []
    if fmt == "csv":
        if len(curves) != 1:
            raise ValueError("csv format expects a single record list")
        _write_csv(next(iter(curves.values())), out)
        written.append(out)
    elif fmt == "json":
        if len(curves) != 1:
            raise ValueError("json format expects a single record list")
        payload = [asdict(r) for r in next(iter(curves.values()))]
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        written.append(out)
    elif fmt == "plot-data":
        out.mkdir(parents=True, exist_ok=True)
        for name, recs in curves.items():
            series = out / f"series_{name}.csv"
            _write_csv(recs, series)
            written.append(series)
        plot = out / "ber_plot.svg"
        _plot_curves(curves, plot)
        written.append(plot)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    return written
